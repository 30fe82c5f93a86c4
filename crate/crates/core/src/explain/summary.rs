use std::io::Write;

use serde::{Deserialize, Serialize};

use super::AttributionSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub feature: String,
    pub mean_abs: f64,
    /// Pearson correlation between the feature's values and its
    /// attributions; `None` when either side is constant.
    pub sign_correlation: Option<f64>,
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

/// Features ranked by mean `|phi|` (descending, then name), truncated to
/// `top_k`.
pub fn shap_summary(attributions: &AttributionSet, top_k: usize) -> Result<Vec<SummaryRow>> {
    if !attributions.method.is_local() || attributions.values.nrows() == 0 {
        return Err(Error::InvalidInput(format!(
            "a summary needs instance-level attributions, got {}",
            attributions.method
        )));
    }
    let n = attributions.values.nrows() as f64;
    let mut rows: Vec<SummaryRow> = attributions
        .feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let phi = attributions.values.column(j).to_vec();
            let sign_correlation = attributions
                .instances
                .as_ref()
                .and_then(|x| pearson(&x.column(j).to_vec(), &phi));
            SummaryRow {
                feature: name.clone(),
                mean_abs: phi.iter().map(|v| v.abs()).sum::<f64>() / n,
                sign_correlation,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.mean_abs.total_cmp(&a.mean_abs).then_with(|| a.feature.cmp(&b.feature)));
    rows.truncate(top_k);
    Ok(rows)
}

pub fn write_summary_csv(rows: &[SummaryRow], w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "rank,feature,mean_abs_phi,sign_correlation")?;
    for (i, r) in rows.iter().enumerate() {
        let corr = r.sign_correlation.map_or(String::new(), |c| format!("{c:.6}"));
        writeln!(w, "{},{},{:.6e},{corr}", i + 1, r.feature, r.mean_abs)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::AttributionMethod;
    use ndarray::array;

    fn set(values: ndarray::Array2<f64>, instances: ndarray::Array2<f64>) -> AttributionSet {
        AttributionSet {
            method: AttributionMethod::TreeShap,
            base_value: 0.0,
            feature_names: vec!["b".into(), "a".into(), "c".into()],
            values,
            instances: Some(instances),
            row_ids: Vec::new(),
        }
    }

    #[test]
    fn ranks_by_mean_magnitude() {
        let s = set(
            array![[0.1, -2.0, 0.0], [0.3, 1.0, 0.0]],
            array![[1.0, 0.0, 5.0], [2.0, 1.0, 5.0]],
        );
        let rows = shap_summary(&s, 2).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].feature, "a");
        assert_eq!(rows[1].feature, "b");
        assert!((rows[0].sign_correlation.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_attributions_sort_alphabetically() {
        let s = set(array![[0.0, 0.0, 0.0]], array![[1.0, 2.0, 3.0]]);
        let names: Vec<_> = shap_summary(&s, 10).unwrap().into_iter().map(|r| r.feature).collect();
        assert_eq!(names, ["a", "b", "c"]);
    }

    #[test]
    fn global_sets_are_rejected() {
        let g = AttributionSet::global(AttributionMethod::GiniImportance, vec![1.0], vec!["x".into()]);
        assert!(shap_summary(&g, 5).is_err());
    }
}
