use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    None,
    ZNormalize,
}

/// Per-feature transform fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessRecipe {
    pub scaling: Scaling,
    /// `(mean, population std)` per feature; empty for [`Scaling::None`].
    pub stats: Vec<(f64, f64)>,
}

impl PreprocessRecipe {
    pub fn identity() -> Self {
        PreprocessRecipe {
            scaling: Scaling::None,
            stats: Vec::new(),
        }
    }

    pub fn fit(train: ArrayView2<'_, f64>, scaling: Scaling) -> Self {
        let stats = match scaling {
            Scaling::None => Vec::new(),
            Scaling::ZNormalize => train
                .columns()
                .into_iter()
                .map(|c| {
                    let n = c.len() as f64;
                    let mean = c.sum() / n;
                    let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    (mean, var.sqrt())
                })
                .collect(),
        };
        PreprocessRecipe { scaling, stats }
    }

    /// Applies the recipe. Constant training features map to 0.
    pub fn transform(&self, rows: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match self.scaling {
            Scaling::None => Ok(rows.to_owned()),
            Scaling::ZNormalize => {
                if rows.ncols() != self.stats.len() {
                    return Err(Error::ShapeMismatch {
                        expected: self.stats.len(),
                        got: rows.ncols(),
                    });
                }
                let mut out = rows.to_owned();
                for (mut col, &(mean, sd)) in out.columns_mut().into_iter().zip(&self.stats) {
                    if sd > 0.0 {
                        col.mapv_inplace(|v| (v - mean) / sd);
                    } else {
                        col.fill(0.0);
                    }
                }
                Ok(out)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn znorm_training_moments() {
        let x = array![[1.0, 5.0, 2.0], [2.0, 5.0, 4.0], [3.0, 5.0, 9.0], [6.0, 5.0, 1.0]];
        let r = PreprocessRecipe::fit(x.view(), Scaling::ZNormalize);
        let z = r.transform(x.view()).unwrap();
        for (j, col) in z.columns().into_iter().enumerate() {
            let mean = col.sum() / 4.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-10);
            if j == 1 {
                assert!(col.iter().all(|&v| v == 0.0));
            } else {
                assert!((var.sqrt() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn width_checked() {
        let r = PreprocessRecipe::fit(array![[1.0, 2.0]].view(), Scaling::ZNormalize);
        assert!(r.transform(array![[1.0]].view()).is_err());
    }
}
