use rand::seq::SliceRandom;

use super::{AttributionMethod, AttributionSet};
use crate::cohort::CohortMatrix;
use crate::error::{Error, Result};
use crate::learners::{ModelKind, ModelParams, TrainedModel};
use crate::metrics::roc_auc;
use crate::seed::derived_rng;

/// `|w_j|` of a logistic regression fitted on z-normalized inputs.
pub fn coef_importance(model: &TrainedModel) -> Result<AttributionSet> {
    match (&model.params, model.kind) {
        (ModelParams::Linear { coefficients, .. }, ModelKind::LogisticRegression) => Ok(AttributionSet::global(
            AttributionMethod::CoefMagnitude,
            coefficients.iter().map(|c| c.abs()).collect(),
            model.feature_names.clone(),
        )),
        _ => Err(Error::UnsupportedModel {
            op: "coef_importance",
            kind: model.kind.to_string(),
        }),
    }
}

/// Mean AUC drop when one column of `test` is shuffled.
///
/// Feature `j` draws its permutations from its own seeded stream, so scores
/// do not depend on the number of features. Scores are signed: a shuffle can
/// raise the AUC by chance.
pub fn permutation_importance(
    model: &TrainedModel,
    test: &CohortMatrix,
    n_repeats: usize,
    seed: u64,
) -> Result<AttributionSet> {
    if n_repeats == 0 {
        return Err(Error::InvalidInput("n_repeats must be positive".into()));
    }
    let baseline = roc_auc(&test.labels, &model.predict_score(test.rows.view())?)?;
    let mut work = test.rows.clone();
    let mut scores = Vec::with_capacity(test.n_features());
    for j in 0..test.n_features() {
        let mut rng = derived_rng(seed, &["permutation", &j.to_string()]);
        let original = test.rows.column(j).to_vec();
        let mut column = original.clone();
        let mut drop = 0.0;
        for _ in 0..n_repeats {
            column.shuffle(&mut rng);
            work.column_mut(j).iter_mut().zip(&column).for_each(|(w, &v)| *w = v);
            drop += baseline - roc_auc(&test.labels, &model.predict_score(work.view())?)?;
        }
        work.column_mut(j).iter_mut().zip(&original).for_each(|(w, &v)| *w = v);
        scores.push(drop / n_repeats as f64);
    }
    Ok(AttributionSet::global(
        AttributionMethod::Permutation,
        scores,
        test.feature_names.clone(),
    ))
}

/// Split gains summed per feature over all trees, normalized to sum to 1.
///
/// Forest gains are weighted Gini decreases, boosting gains are the loss
/// reductions of the Newton split criterion. An ensemble without any split
/// scores all zeros.
pub fn gini_importance(model: &TrainedModel) -> Result<AttributionSet> {
    let Some(trees) = model.trees() else {
        return Err(Error::UnsupportedModel {
            op: "gini_importance",
            kind: model.kind.to_string(),
        });
    };
    let mut totals = vec![0.0; model.n_features()];
    for tree in trees {
        for split in tree.nodes().iter().filter_map(|n| n.split) {
            totals[split.feature] += split.gain;
        }
    }
    let sum: f64 = totals.iter().sum();
    if sum > 0.0 {
        totals.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(AttributionSet::global(
        AttributionMethod::GiniImportance,
        totals,
        model.feature_names.clone(),
    ))
}
