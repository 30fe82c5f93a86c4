//! Binary classification metrics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cohort::CohortMatrix;
use crate::error::{Error, Result};
use crate::learners::TrainedModel;

/// `[[tn, fp], [fn, tp]]`: rows are true classes, columns predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion(pub [[u64; 2]; 2]);

impl Confusion {
    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn accuracy(&self) -> f64 {
        self.correct() as f64 / self.total() as f64
    }
}

pub fn confusion_matrix(y_true: &[u8], y_pred: &[u8]) -> Result<Confusion> {
    if y_true.len() != y_pred.len() {
        return Err(Error::InvalidInput(format!(
            "{} true labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut m = [[0u64; 2]; 2];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t > 1 || p > 1 {
            return Err(Error::InvalidInput("labels must be 0 or 1".into()));
        }
        m[t as usize][p as usize] += 1;
    }
    Ok(Confusion(m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Averaging {
    /// Per-class scores weighted by true-class support.
    Weighted,
    Macro,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Per-class ratios with a zero denominator, each counted as 0.
    pub zero_division: u32,
}

pub fn weighted_prf(confusion: &Confusion) -> Result<Prf> {
    prf(confusion, Averaging::Weighted)
}

pub fn prf(confusion: &Confusion, averaging: Averaging) -> Result<Prf> {
    let total = confusion.total();
    if total == 0 {
        return Err(Error::InvalidInput("empty confusion matrix".into()));
    }
    let m = &confusion.0;
    let mut zero_division = 0;
    let mut ratio = |num: u64, den: u64| {
        if den == 0 {
            zero_division += 1;
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let mut out = Prf {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        zero_division: 0,
    };
    for c in 0..2 {
        let tp = m[c][c];
        let support = m[c][0] + m[c][1];
        let predicted = m[0][c] + m[1][c];
        let p = ratio(tp, predicted);
        let r = ratio(tp, support);
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        let w = match averaging {
            Averaging::Weighted => support as f64 / total as f64,
            Averaging::Macro => 0.5,
        };
        out.precision += w * p;
        out.recall += w * r;
        out.f1 += w * f;
    }
    if zero_division > 0 {
        log::warn!("{zero_division} precision/recall ratio(s) had a zero denominator and were set to 0");
    }
    out.zero_division = zero_division;
    Ok(out)
}

/// Mann-Whitney AUC from midranks: `P(s+ > s-) + P(s+ = s-)/2`.
///
/// Doubled ranks stay integral, so the only rounding is the final division.
pub fn roc_auc(y_true: &[u8], scores: &[f64]) -> Result<f64> {
    if y_true.len() != scores.len() {
        return Err(Error::InvalidInput(format!(
            "{} labels but {} scores",
            y_true.len(),
            scores.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("scores must be finite".into()));
    }
    let n_pos = y_true.iter().filter(|&&y| y == 1).count() as u128;
    let n_neg = y_true.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::AucUndefined);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum over positives of 2 * midrank (1-based)
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share midrank (i + j + 2) / 2
        let twice_mid = (i + j + 2) as u128;
        let pos_in_block = order[i..=j].iter().filter(|&&k| y_true[k] == 1).count() as u128;
        twice_rank_sum += twice_mid * pos_in_block;
        i = j + 1;
    }
    let twice_u = twice_rank_sum - n_pos * (n_pos + 1);
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub precision_weighted: f64,
    pub recall_weighted: f64,
    pub f1_weighted: f64,
    pub auc: f64,
    pub confusion: Confusion,
    pub n_test: usize,
}

impl EvalReport {
    pub fn from_predictions(y_true: &[u8], y_pred: &[u8], scores: &[f64]) -> Result<Self> {
        let confusion = confusion_matrix(y_true, y_pred)?;
        let prf = weighted_prf(&confusion)?;
        Ok(EvalReport {
            accuracy: confusion.accuracy(),
            precision_weighted: prf.precision,
            recall_weighted: prf.recall,
            f1_weighted: prf.f1,
            auc: roc_auc(y_true, scores)?,
            confusion,
            n_test: y_true.len(),
        })
    }

    pub const CSV_HEADER: [&'static str; 5] = ["accuracy", "precision", "recall", "f1", "auc"];

    /// Metric cells at six decimals, in [`Self::CSV_HEADER`] order.
    pub fn csv_fields(&self) -> [String; 5] {
        [
            self.accuracy,
            self.precision_weighted,
            self.recall_weighted,
            self.f1_weighted,
            self.auc,
        ]
        .map(|v| format!("{v:.6}"))
    }

    /// One CSV row: `subset,variant,model,accuracy,precision,recall,f1,auc`.
    pub fn write_csv_row(&self, w: &mut impl Write, subset: usize, variant: &str, model: &str) -> std::io::Result<()> {
        writeln!(w, "{subset},{variant},{model},{}", self.csv_fields().join(","))
    }
}

pub fn evaluate(model: &TrainedModel, test: &CohortMatrix) -> Result<EvalReport> {
    if test.n_samples() == 0 {
        return Err(Error::InvalidInput("empty test set".into()));
    }
    let scores = model.predict_score(test.rows.view())?;
    let threshold = model.kind.default_threshold();
    let pred: Vec<u8> = scores.iter().map(|&s| u8::from(s >= threshold)).collect();
    EvalReport::from_predictions(&test.labels, &pred, &scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auc(y: &[u8], s: &[f64]) -> f64 {
        let mut twice = 0u64;
        let (mut p, mut n) = (0u64, 0u64);
        for (i, &yi) in y.iter().enumerate() {
            if yi == 1 {
                p += 1;
            } else {
                n += 1;
                continue;
            }
            for (j, &yj) in y.iter().enumerate() {
                if yj == 0 {
                    twice += if s[i] > s[j] {
                        2
                    } else if s[i] == s[j] {
                        1
                    } else {
                        0
                    };
                }
            }
        }
        twice as f64 / (2 * p * n) as f64
    }

    #[test]
    fn confusion_counts() {
        let c = confusion_matrix(&[1, 1, 0, 0], &[1, 0, 0, 0]).unwrap();
        assert_eq!(c.0, [[2, 0], [1, 1]]);
        assert!(confusion_matrix(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn weighted_prf_by_hand() {
        let c = Confusion([[8, 2], [3, 7]]);
        let r = weighted_prf(&c).unwrap();
        assert!((r.recall - 0.75).abs() < 1e-15);
        assert!((r.precision - (0.5 * 8.0 / 11.0 + 0.5 * 7.0 / 9.0)).abs() < 1e-15);
        assert_eq!(r.zero_division, 0);
        let p = weighted_prf(&Confusion([[5, 0], [0, 5]])).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        assert!(weighted_prf(&Confusion([[0, 0], [0, 0]])).is_err());
    }

    #[test]
    fn unpredicted_class_counts_zero_division() {
        let r = weighted_prf(&Confusion([[0, 4], [0, 6]])).unwrap();
        assert_eq!(r.zero_division, 1);
        assert!((r.precision - 0.6 * 0.6).abs() < 1e-15);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[1, 1, 0, 0], &[0.9, 0.8, 0.7, 0.1]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[1, 0, 1, 0], &[0.3; 4]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[1, 1, 0, 0], &[0.8, 0.4, 0.6, 0.2]).unwrap(), 0.75);
        assert_eq!(roc_auc(&[1, 1, 0, 0], &[0.1, 0.2, 0.7, 0.9]).unwrap(), 0.0);
        assert!(matches!(roc_auc(&[1, 1], &[0.1, 0.2]), Err(Error::AucUndefined)));
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise(pairs in prop::collection::vec((0u8..2, 0i32..6), 2..120)) {
            let y: Vec<u8> = pairs.iter().map(|p| p.0).collect();
            let s: Vec<f64> = pairs.iter().map(|p| p.1 as f64 * 0.1).collect();
            prop_assume!(y.contains(&0) && y.contains(&1));
            prop_assert_eq!(roc_auc(&y, &s).unwrap(), brute_auc(&y, &s));
        }

        #[test]
        fn auc_invariant_under_monotone_maps(pairs in prop::collection::vec((0u8..2, -1e3f64..1e3), 2..80)) {
            let y: Vec<u8> = pairs.iter().map(|p| p.0).collect();
            let s: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            prop_assume!(y.contains(&0) && y.contains(&1));
            let t: Vec<f64> = s.iter().map(|v| (v / 100.0).tanh() * 3.0 + 1.0).collect();
            let a = roc_auc(&y, &s).unwrap();
            let b = roc_auc(&y, &t).unwrap();
            // tanh can merge distinct scores into ties; compare against the oracle instead
            prop_assert_eq!(b, brute_auc(&y, &t));
            prop_assert_eq!(a, brute_auc(&y, &s));
        }

        #[test]
        fn weighted_recall_is_accuracy(tn in 0u64..50, fp in 0u64..50, fneg in 0u64..50, tp in 0u64..50) {
            let c = Confusion([[tn, fp], [fneg, tp]]);
            prop_assume!(c.total() > 0);
            let r = weighted_prf(&c).unwrap();
            prop_assert!((r.recall - c.accuracy()).abs() <= 1e-15);
        }
    }
}
