//! Feature attribution: exact TreeSHAP for tree ensembles and global
//! importances for every model kind.

pub mod importance;
pub mod summary;
pub mod treeshap;

use std::fmt;
use std::io::Write;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use importance::{coef_importance, gini_importance, permutation_importance};
pub use summary::{shap_summary, write_summary_csv, SummaryRow};

use crate::error::{Error, Result};
use crate::learners::{ModelKind, ModelParams, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionMethod {
    TreeShap,
    CoefMagnitude,
    Permutation,
    GiniImportance,
}

impl AttributionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            AttributionMethod::TreeShap => "tree_shap",
            AttributionMethod::CoefMagnitude => "coef_magnitude",
            AttributionMethod::Permutation => "permutation",
            AttributionMethod::GiniImportance => "gini_importance",
        }
    }

    /// The default attribution for a model kind.
    pub fn for_kind(kind: ModelKind) -> Self {
        match kind {
            ModelKind::LogisticRegression => AttributionMethod::CoefMagnitude,
            ModelKind::LinearSvc => AttributionMethod::Permutation,
            ModelKind::RandomForest => AttributionMethod::GiniImportance,
            ModelKind::GradientBoosting | ModelKind::HistGradientBoosting => AttributionMethod::TreeShap,
        }
    }

    pub fn is_local(self) -> bool {
        self == AttributionMethod::TreeShap
    }
}

impl std::str::FromStr for AttributionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tree_shap" | "shap" => Ok(AttributionMethod::TreeShap),
            "coef_magnitude" | "coef" => Ok(AttributionMethod::CoefMagnitude),
            "permutation" => Ok(AttributionMethod::Permutation),
            "gini_importance" | "gini" => Ok(AttributionMethod::GiniImportance),
            other => Err(Error::InvalidInput(format!("unknown attribution method {other:?}"))),
        }
    }
}

impl fmt::Display for AttributionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Attributions over `feature_names`.
///
/// Local methods hold one row per explained instance plus the instances
/// themselves; global methods hold a single row and no instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionSet {
    pub method: AttributionMethod,
    pub base_value: f64,
    pub values: Array2<f64>,
    pub feature_names: Vec<String>,
    pub instances: Option<Array2<f64>>,
    /// Ids of the explained instances; empty when unknown or global.
    pub row_ids: Vec<String>,
}

impl AttributionSet {
    pub(crate) fn global(method: AttributionMethod, values: Vec<f64>, feature_names: Vec<String>) -> Self {
        let d = values.len();
        AttributionSet {
            method,
            base_value: 0.0,
            values: Array2::from_shape_vec((1, d), values).expect("1 x d"),
            feature_names,
            instances: None,
            row_ids: Vec::new(),
        }
    }

    pub fn with_row_ids(mut self, row_ids: Vec<String>) -> Self {
        self.row_ids = row_ids;
        self
    }

    /// Per-feature score of a global set.
    pub fn global_scores(&self) -> Option<Vec<f64>> {
        (!self.method.is_local()).then(|| self.values.row(0).to_vec())
    }

    /// `row_id,feature,phi` for local sets (row ids default to the instance
    /// index); `feature,importance` for global sets.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        if self.method.is_local() {
            writeln!(w, "row_id,feature,phi")?;
            for (i, row) in self.values.outer_iter().enumerate() {
                let id = self.row_ids.get(i).cloned().unwrap_or_else(|| i.to_string());
                for (name, v) in self.feature_names.iter().zip(row) {
                    writeln!(w, "{id},{name},{v}")?;
                }
            }
        } else {
            writeln!(w, "feature,importance")?;
            for (name, v) in self.feature_names.iter().zip(self.values.row(0)) {
                writeln!(w, "{name},{v}")?;
            }
        }
        Ok(())
    }
}

/// Exact path-dependent Shapley values for every row.
///
/// Boosted models are explained in margin space, the forest in probability
/// space; `base_value + sum(phi)` equals `predict_raw` for each row.
pub fn tree_shap(model: &TrainedModel, rows: ArrayView2<'_, f64>) -> Result<AttributionSet> {
    let (trees, init, scale) = match &model.params {
        ModelParams::Forest { trees } => (trees, 0.0, 1.0 / trees.len() as f64),
        ModelParams::Boosted { init, trees } => (trees, *init, 1.0),
        ModelParams::Linear { .. } => {
            return Err(Error::UnsupportedModel {
                op: "tree_shap",
                kind: model.kind.to_string(),
            })
        }
    };
    if rows.ncols() != model.n_features() {
        return Err(Error::ShapeMismatch {
            expected: model.n_features(),
            got: rows.ncols(),
        });
    }
    let x = model.recipe.transform(rows)?;
    let d = model.n_features();
    let base_value = init + scale * trees.iter().map(|t| t.expected_value()).sum::<f64>();
    let points: Vec<Vec<f64>> = x.axis_iter(Axis(0)).map(|r| r.to_vec()).collect();
    let phis: Vec<Vec<f64>> = points
        .par_iter()
        .map(|r| {
            let mut phi = vec![0.0; d];
            for t in trees {
                treeshap::accumulate(t, r, &mut phi, scale);
            }
            phi
        })
        .collect();
    let values = Array2::from_shape_vec((phis.len(), d), phis.concat()).expect("n x d");
    Ok(AttributionSet {
        method: AttributionMethod::TreeShap,
        base_value,
        values,
        feature_names: model.feature_names.clone(),
        instances: Some(rows.to_owned()),
        row_ids: Vec::new(),
    })
}
