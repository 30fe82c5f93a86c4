//! The five classifiers, their preprocessing policy and the model file format.
//!
//! Linear models see z-normalized inputs; tree models see raw values. Every
//! model exposes a raw output (`predict_raw`) in the space where its parts
//! add up: the margin for linear and boosted models, the class-1 probability
//! for the random forest.

pub mod binning;
pub mod boosting;
pub mod forest;
pub mod linear;
pub mod persist;
pub mod preprocess;
pub mod split;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

pub use binning::{histogram_bin, MAX_BINS};
pub use boosting::{sigmoid, BoostParams, HistBoostParams};
pub use forest::{FeatureSubsample, ForestParams};
pub use linear::LinearParams;
pub use persist::{load_model, save_model};
pub use preprocess::{PreprocessRecipe, Scaling};
pub use tree::{Node, Split, Tree};

use crate::cohort::CohortMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    LogisticRegression,
    LinearSvc,
    RandomForest,
    GradientBoosting,
    HistGradientBoosting,
}

impl ModelKind {
    /// In tie-break order.
    pub const ALL: [ModelKind; 5] = [
        ModelKind::LogisticRegression,
        ModelKind::LinearSvc,
        ModelKind::RandomForest,
        ModelKind::GradientBoosting,
        ModelKind::HistGradientBoosting,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ModelKind::LogisticRegression => "lr",
            ModelKind::LinearSvc => "svc",
            ModelKind::RandomForest => "rf",
            ModelKind::GradientBoosting => "gb",
            ModelKind::HistGradientBoosting => "histgb",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::LogisticRegression => "Logistic Regression",
            ModelKind::LinearSvc => "SVC",
            ModelKind::RandomForest => "Random Forest",
            ModelKind::GradientBoosting => "Gradient Boosting",
            ModelKind::HistGradientBoosting => "HistGB",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_tree_ensemble(self) -> bool {
        matches!(
            self,
            ModelKind::RandomForest | ModelKind::GradientBoosting | ModelKind::HistGradientBoosting
        )
    }

    pub fn scaling(self) -> Scaling {
        match self {
            ModelKind::LogisticRegression | ModelKind::LinearSvc => Scaling::ZNormalize,
            _ => Scaling::None,
        }
    }

    /// Probability cut-off for probabilistic models, zero margin for the SVC.
    pub fn default_threshold(self) -> f64 {
        match self {
            ModelKind::LinearSvc => 0.0,
            _ => 0.5,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace([' ', '_', '-'], "");
        Ok(match key.as_str() {
            "lr" | "logisticregression" | "logistic" => ModelKind::LogisticRegression,
            "svc" | "linearsvc" | "svm" => ModelKind::LinearSvc,
            "rf" | "randomforest" => ModelKind::RandomForest,
            "gb" | "gradientboosting" => ModelKind::GradientBoosting,
            "histgb" | "histgradientboosting" => ModelKind::HistGradientBoosting,
            _ => return Err(Error::Config(format!("unknown model kind {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HyperParams {
    LogisticRegression(LinearParams),
    LinearSvc(LinearParams),
    RandomForest(ForestParams),
    GradientBoosting(BoostParams),
    HistGradientBoosting(HistBoostParams),
}

impl HyperParams {
    pub fn default_for(kind: ModelKind) -> Self {
        HyperParamSet::default().for_kind(kind)
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            HyperParams::LogisticRegression(_) => ModelKind::LogisticRegression,
            HyperParams::LinearSvc(_) => ModelKind::LinearSvc,
            HyperParams::RandomForest(_) => ModelKind::RandomForest,
            HyperParams::GradientBoosting(_) => ModelKind::GradientBoosting,
            HyperParams::HistGradientBoosting(_) => ModelKind::HistGradientBoosting,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, ok: bool) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("hyperparameter {name} must be positive")))
            }
        }
        match self {
            HyperParams::LogisticRegression(p) | HyperParams::LinearSvc(p) => {
                positive("l2_strength", p.l2_strength > 0.0 && p.l2_strength.is_finite())?;
                positive("max_iters", p.max_iters > 0)?;
                positive("tol", p.tol > 0.0)
            }
            HyperParams::RandomForest(p) => {
                positive("n_trees", p.n_trees > 0)?;
                positive("max_depth", p.max_depth != Some(0))?;
                positive("min_leaf", p.min_leaf > 0)?;
                positive("feature_subsample", p.feature_subsample != FeatureSubsample::Count(0))
            }
            HyperParams::GradientBoosting(p) => {
                positive("n_trees", p.n_trees > 0)?;
                positive("learning_rate", p.learning_rate > 0.0 && p.learning_rate.is_finite())?;
                positive("max_depth", p.max_depth > 0)?;
                positive("min_leaf", p.min_leaf > 0)
            }
            HyperParams::HistGradientBoosting(p) => {
                positive("n_trees", p.n_trees > 0)?;
                positive("learning_rate", p.learning_rate > 0.0 && p.learning_rate.is_finite())?;
                positive("max_depth", p.max_depth != Some(0))?;
                positive("min_leaf", p.min_leaf > 0)?;
                if p.max_leaves.is_some_and(|m| m < 2) {
                    return Err(Error::Config("hyperparameter max_leaves must be at least 2".into()));
                }
                if !(2..=MAX_BINS).contains(&p.n_bins) {
                    return Err(Error::Config(format!("hyperparameter n_bins must lie in [2, {MAX_BINS}]")));
                }
                Ok(())
            }
        }
    }
}

/// One hyperparameter block per model kind, as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParamSet {
    pub lr: LinearParams,
    pub svc: LinearParams,
    pub rf: ForestParams,
    pub gb: BoostParams,
    pub histgb: HistBoostParams,
}

impl Default for HyperParamSet {
    fn default() -> Self {
        HyperParamSet {
            lr: LinearParams::default(),
            svc: LinearParams {
                tol: 1e-5,
                ..LinearParams::default()
            },
            rf: ForestParams::default(),
            gb: BoostParams::default(),
            histgb: HistBoostParams::default(),
        }
    }
}

impl HyperParamSet {
    pub fn for_kind(&self, kind: ModelKind) -> HyperParams {
        match kind {
            ModelKind::LogisticRegression => HyperParams::LogisticRegression(self.lr.clone()),
            ModelKind::LinearSvc => HyperParams::LinearSvc(self.svc.clone()),
            ModelKind::RandomForest => HyperParams::RandomForest(self.rf.clone()),
            ModelKind::GradientBoosting => HyperParams::GradientBoosting(self.gb.clone()),
            ModelKind::HistGradientBoosting => HyperParams::HistGradientBoosting(self.histgb.clone()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        ModelKind::ALL.iter().try_for_each(|&k| self.for_kind(k).validate())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelParams {
    Linear { coefficients: Vec<f64>, intercept: f64 },
    /// Leaves hold class-1 fractions; the forest averages them.
    Forest { trees: Vec<Tree> },
    /// Leaves hold learning-rate-scaled steps; output is `init + sum`.
    Boosted { init: f64, trees: Vec<Tree> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    /// Training objective before the first update and after each one.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub recipe: PreprocessRecipe,
    pub params: ModelParams,
    pub hyperparams: HyperParams,
    pub feature_names: Vec<String>,
    pub train_seed: u64,
    pub diagnostics: FitDiagnostics,
}

fn check_finite(rows: ArrayView2<'_, f64>) -> Result<()> {
    match rows.indexed_iter().find(|(_, v)| !v.is_finite()) {
        Some(((row, col), _)) => Err(Error::NonFinite { row, col }),
        None => Ok(()),
    }
}

/// Fits `kind` on `train`. Deterministic in `seed`.
pub fn fit(kind: ModelKind, train: &CohortMatrix, hp: &HyperParams, seed: u64) -> Result<TrainedModel> {
    if hp.kind() != kind {
        return Err(Error::Config(format!(
            "hyperparameters for {} supplied to {}",
            hp.kind(),
            kind
        )));
    }
    hp.validate()?;
    let (neg, pos) = train.class_counts();
    if neg == 0 || pos == 0 {
        return Err(Error::SingleClass);
    }
    check_finite(train.rows.view())?;

    let recipe = PreprocessRecipe::fit(train.rows.view(), kind.scaling());
    let x = recipe.transform(train.rows.view())?;
    let y = &train.labels;

    let (params, diagnostics) = match hp {
        HyperParams::LogisticRegression(p) | HyperParams::LinearSvc(p) => {
            let fitted = if kind == ModelKind::LogisticRegression {
                linear::fit_logistic(x.view(), y, p)
            } else {
                linear::fit_linear_svc(x.view(), y, p)
            };
            if !fitted.converged {
                log::warn!(
                    "{kind} stopped after {} iterations without meeting tol {}",
                    fitted.iterations,
                    p.tol
                );
            }
            (
                ModelParams::Linear {
                    coefficients: fitted.coefficients,
                    intercept: fitted.intercept,
                },
                FitDiagnostics {
                    converged: fitted.converged,
                    iterations: fitted.iterations,
                    objective_trace: fitted.objective_trace,
                },
            )
        }
        HyperParams::RandomForest(p) => {
            let trees = forest::fit_forest(x.view(), y, p, seed);
            (
                ModelParams::Forest { trees },
                FitDiagnostics {
                    converged: true,
                    iterations: p.n_trees,
                    objective_trace: Vec::new(),
                },
            )
        }
        HyperParams::GradientBoosting(p) => boosted(boosting::fit_exact(x.view(), y, p)),
        HyperParams::HistGradientBoosting(p) => boosted(boosting::fit_hist(x.view(), y, p)?),
    };

    Ok(TrainedModel {
        kind,
        recipe,
        params,
        hyperparams: hp.clone(),
        feature_names: train.feature_names.clone(),
        train_seed: seed,
        diagnostics,
    })
}

fn boosted(out: boosting::BoostOutput) -> (ModelParams, FitDiagnostics) {
    let iterations = out.trees.len();
    (
        ModelParams::Boosted {
            init: out.init,
            trees: out.trees,
        },
        FitDiagnostics {
            converged: true,
            iterations,
            objective_trace: out.loss_trace,
        },
    )
}

impl TrainedModel {
    /// Wraps hand-built trees as a model, for tests and external tooling.
    /// Forest models average leaf values; boosted models add them to `init`.
    pub fn from_trees(kind: ModelKind, trees: Vec<Tree>, init: f64, feature_names: Vec<String>) -> Result<Self> {
        if !kind.is_tree_ensemble() {
            return Err(Error::UnsupportedModel {
                op: "from_trees",
                kind: kind.to_string(),
            });
        }
        if trees.is_empty() {
            return Err(Error::InvalidInput("ensemble has no trees".into()));
        }
        if let Some(f) = trees.iter().filter_map(Tree::max_feature).max() {
            if f >= feature_names.len() {
                return Err(Error::ShapeMismatch {
                    expected: feature_names.len(),
                    got: f + 1,
                });
            }
        }
        let params = if kind == ModelKind::RandomForest {
            ModelParams::Forest { trees }
        } else {
            ModelParams::Boosted { init, trees }
        };
        Ok(TrainedModel {
            kind,
            recipe: PreprocessRecipe::identity(),
            params,
            hyperparams: HyperParams::default_for(kind),
            feature_names,
            train_seed: 0,
            diagnostics: FitDiagnostics {
                converged: true,
                iterations: 0,
                objective_trace: Vec::new(),
            },
        })
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn trees(&self) -> Option<&[Tree]> {
        match &self.params {
            ModelParams::Forest { trees } | ModelParams::Boosted { trees, .. } => Some(trees),
            ModelParams::Linear { .. } => None,
        }
    }

    fn check_width(&self, rows: ArrayView2<'_, f64>) -> Result<()> {
        if rows.ncols() != self.n_features() {
            return Err(Error::ShapeMismatch {
                expected: self.n_features(),
                got: rows.ncols(),
            });
        }
        Ok(())
    }

    /// Raw output per row: margin for linear and boosted models, mean leaf
    /// probability for the forest.
    pub fn predict_raw(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        self.check_width(rows)?;
        check_finite(rows)?;
        let x = self.recipe.transform(rows)?;
        Ok(match &self.params {
            ModelParams::Linear { coefficients, intercept } => x
                .axis_iter(Axis(0))
                .map(|r| r.iter().zip(coefficients).map(|(a, b)| a * b).sum::<f64>() + intercept)
                .collect(),
            ModelParams::Forest { trees } => {
                let n = trees.len() as f64;
                x.axis_iter(Axis(0))
                    .map(|r| {
                        let r = r.to_vec();
                        trees.iter().map(|t| t.predict(&r)).sum::<f64>() / n
                    })
                    .collect()
            }
            ModelParams::Boosted { init, trees } => x
                .axis_iter(Axis(0))
                .map(|r| {
                    let r = r.to_vec();
                    init + trees.iter().map(|t| t.predict(&r)).sum::<f64>()
                })
                .collect(),
        })
    }

    /// Higher means more likely class 1: probabilities except for the SVC,
    /// which returns its signed margin.
    pub fn predict_score(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let raw = self.predict_raw(rows)?;
        Ok(match self.kind {
            ModelKind::LogisticRegression | ModelKind::GradientBoosting | ModelKind::HistGradientBoosting => {
                raw.into_iter().map(sigmoid).collect()
            }
            ModelKind::LinearSvc | ModelKind::RandomForest => raw,
        })
    }

    /// `score >= threshold` is class 1.
    pub fn predict_label_at(&self, rows: ArrayView2<'_, f64>, threshold: f64) -> Result<Vec<u8>> {
        Ok(self
            .predict_score(rows)?
            .into_iter()
            .map(|s| u8::from(s >= threshold))
            .collect())
    }

    pub fn predict_label(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<u8>> {
        self.predict_label_at(rows, self.kind.default_threshold())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn matrix(rows: Array2<f64>, labels: Vec<u8>) -> CohortMatrix {
        let names = (0..rows.ncols()).map(|j| format!("f{j}")).collect();
        let ids = (0..rows.nrows()).map(|i| format!("r{i:04}")).collect();
        CohortMatrix::new(names, rows, labels, ids).unwrap()
    }

    fn noisy(n: usize, d: usize, salt: usize) -> CohortMatrix {
        let x = Array2::from_shape_fn((n, d), |(i, j)| (((i * 31 + j * 17 + salt) * 2654435761) % 1000) as f64 / 100.0);
        let y = (0..n)
            .map(|i| u8::from(x[[i, 0]] + 0.5 * x[[i, d - 1]] + ((i * 7 + salt) % 5) as f64 > 9.0))
            .collect();
        matrix(x, y)
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.code().parse::<ModelKind>().unwrap(), k);
            assert_eq!(k.display_name().parse::<ModelKind>().unwrap(), k);
        }
        assert!("knn".parse::<ModelKind>().is_err());
    }

    #[test]
    fn separable_logistic_regression() {
        let m = matrix(array![[-3.0], [-2.0], [-1.0], [1.0], [2.0], [3.0]], vec![0, 0, 0, 1, 1, 1]);
        let kind = ModelKind::LogisticRegression;
        let model = fit(kind, &m, &HyperParams::default_for(kind), 1).unwrap();
        assert_eq!(model.predict_label(m.rows.view()).unwrap(), m.labels);
        assert!(*model.diagnostics.objective_trace.last().unwrap() < 2f64.ln());
    }

    #[test]
    fn zero_linear_model_scores_half() {
        let m = matrix(array![[0.0, 1.0], [1.0, 0.0]], vec![0, 1]);
        let mut model = fit(
            ModelKind::LogisticRegression,
            &m,
            &HyperParams::default_for(ModelKind::LogisticRegression),
            0,
        )
        .unwrap();
        model.params = ModelParams::Linear {
            coefficients: vec![0.0, 0.0],
            intercept: 0.0,
        };
        let scores = model.predict_score(array![[5.0, -2.0], [0.1, 7.0]].view()).unwrap();
        assert_eq!(scores, vec![0.5, 0.5]);
    }

    fn stump(left: f64, right: f64) -> Tree {
        Tree::from_nodes(vec![
            Node {
                cover: 2.0,
                value: 0.0,
                split: Some(Split {
                    feature: 0,
                    threshold: 0.0,
                    left: 1,
                    right: 2,
                    gain: 1.0,
                }),
            },
            Node::leaf(left, 1.0),
            Node::leaf(right, 1.0),
        ])
        .unwrap()
    }

    #[test]
    fn boosted_stump_scores_sigmoid_of_leaf() {
        let model =
            TrainedModel::from_trees(ModelKind::GradientBoosting, vec![stump(-0.7, 1.3)], 0.0, vec!["x".into()]).unwrap();
        let s = model.predict_score(array![[-1.0], [1.0]].view()).unwrap();
        assert_eq!(s, vec![sigmoid(-0.7), sigmoid(1.3)]);
    }

    #[test]
    fn forest_averages_votes() {
        let model = TrainedModel::from_trees(
            ModelKind::RandomForest,
            vec![stump(1.0, 1.0), stump(0.0, 0.0)],
            0.0,
            vec!["x".into()],
        )
        .unwrap();
        assert_eq!(model.predict_score(array![[3.0]].view()).unwrap(), vec![0.5]);
        assert_eq!(model.predict_label(array![[3.0]].view()).unwrap(), vec![1]);
    }

    #[test]
    fn svc_negative_margin_is_negative_class() {
        let m = matrix(array![[0.0], [1.0]], vec![0, 1]);
        let mut model = fit(ModelKind::LinearSvc, &m, &HyperParams::default_for(ModelKind::LinearSvc), 0).unwrap();
        model.recipe = PreprocessRecipe::identity();
        model.params = ModelParams::Linear {
            coefficients: vec![1.0],
            intercept: 0.0,
        };
        assert_eq!(model.predict_label(array![[-0.1], [0.0]].view()).unwrap(), vec![0, 1]);
    }

    #[test]
    fn recipe_depends_on_training_rows_only() {
        let train = noisy(60, 3, 0);
        let kind = ModelKind::LogisticRegression;
        let model = fit(kind, &train, &HyperParams::default_for(kind), 3).unwrap();
        let before = model.recipe.clone();
        let mut test = noisy(20, 3, 5).rows;
        test.mapv_inplace(|v| v * 100.0 + 7.0);
        model.predict_score(test.view()).unwrap();
        assert_eq!(model.recipe, before);
        assert_eq!(model.recipe, PreprocessRecipe::fit(train.rows.view(), Scaling::ZNormalize));
    }

    #[test]
    fn fits_are_deterministic() {
        let m = noisy(80, 4, 1);
        for kind in ModelKind::ALL {
            let hp = match kind {
                ModelKind::RandomForest => HyperParams::RandomForest(ForestParams {
                    n_trees: 10,
                    ..Default::default()
                }),
                k => HyperParams::default_for(k),
            };
            let a = fit(kind, &m, &hp, 11).unwrap();
            let b = fit(kind, &m, &hp, 11).unwrap();
            assert_eq!(a.params, b.params, "{kind}");
        }
    }

    #[test]
    fn forest_test_mode_interpolates() {
        let m = noisy(100, 3, 2);
        let hp = HyperParams::RandomForest(ForestParams {
            n_trees: 1,
            max_depth: None,
            min_leaf: 1,
            feature_subsample: FeatureSubsample::All,
            bootstrap: false,
        });
        let model = fit(ModelKind::RandomForest, &m, &hp, 0).unwrap();
        assert_eq!(model.predict_label(m.rows.view()).unwrap(), m.labels);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = matrix(array![[0.0], [1.0]], vec![1, 1]);
        let kind = ModelKind::GradientBoosting;
        assert!(matches!(fit(kind, &m, &HyperParams::default_for(kind), 0), Err(Error::SingleClass)));
        let m = matrix(array![[0.0], [1.0]], vec![0, 1]);
        assert!(fit(kind, &m, &HyperParams::default_for(ModelKind::RandomForest), 0).is_err());
        let model = fit(kind, &m, &HyperParams::default_for(kind), 0).unwrap();
        assert!(matches!(
            model.predict_score(array![[0.0, 1.0]].view()),
            Err(Error::ShapeMismatch { .. })
        ));
        let bad = HyperParams::HistGradientBoosting(HistBoostParams {
            n_bins: 300,
            ..Default::default()
        });
        assert!(bad.validate().is_err());
    }

    #[test]
    fn persistence_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let m = noisy(60, 3, 4);
        for kind in ModelKind::ALL {
            let model = fit(kind, &m, &HyperParams::default_for(kind), 5).unwrap();
            let path = dir.path().join(format!("{}.sepm", kind.code()));
            save_model(&model, &path).unwrap();
            let loaded = load_model(&path).unwrap();
            let a = model.predict_raw(m.rows.view()).unwrap();
            let b = loaded.predict_raw(m.rows.view()).unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }

        let model = fit(ModelKind::LinearSvc, &m, &HyperParams::default_for(ModelKind::LinearSvc), 0).unwrap();
        let bytes = persist::encode_model(&model).unwrap();

        let mut wrong_magic = bytes.clone();
        wrong_magic[0] = b'X';
        assert!(matches!(persist::decode_model(&wrong_magic), Err(Error::UnrecognizedFormat)));

        let mut newer = bytes.clone();
        newer[4..6].copy_from_slice(&(persist::FORMAT_VERSION + 1).to_le_bytes());
        assert!(matches!(
            persist::decode_model(&newer),
            Err(Error::UnsupportedVersion { found: 2, supported: 1 })
        ));

        let mut flipped = bytes.clone();
        let mid = bytes.len() / 2;
        flipped[mid] ^= 0x40;
        assert!(matches!(persist::decode_model(&flipped), Err(Error::CorruptedModel(_))));
        assert!(matches!(
            persist::decode_model(&bytes[..bytes.len() - 1]),
            Err(Error::CorruptedModel(_))
        ));
    }
}
