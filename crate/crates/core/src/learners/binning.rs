//! Quantile binning for histogram gradient boosting.
//!
//! A value `v` falls in bin `b` = number of edges strictly below `v`, so
//! `bin(v) <= b` exactly when `v <= edges[b]`. Trees grown on bins therefore
//! carry raw-unit thresholds and predict identically on raw inputs.

use ndarray::ArrayView2;

use crate::error::{Error, Result};

pub const MAX_BINS: usize = 255;

/// Edges for one feature: midpoints between distinct values when there are at
/// most `n_bins` of them, otherwise midpoint-interpolated percentiles at
/// `k / n_bins`, deduplicated.
pub fn feature_edges(values: &[f64], n_bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() <= n_bins {
        return distinct
            .windows(2)
            .map(|w| super::split::midpoint(w[0], w[1]))
            .collect();
    }
    let last = (sorted.len() - 1) as f64;
    let mut edges: Vec<f64> = (1..n_bins)
        .map(|k| {
            let pos = last * k as f64 / n_bins as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            (sorted[lo] + sorted[hi]) / 2.0
        })
        .collect();
    edges.dedup();
    edges
}

/// Bin edges per column of `train`.
pub fn histogram_bin(train: ArrayView2<'_, f64>, n_bins: usize) -> Result<Vec<Vec<f64>>> {
    if !(2..=MAX_BINS).contains(&n_bins) {
        return Err(Error::InvalidInput(format!(
            "n_bins must lie in [2, {MAX_BINS}], got {n_bins}"
        )));
    }
    Ok(train
        .columns()
        .into_iter()
        .map(|c| feature_edges(&c.to_vec(), n_bins))
        .collect())
}

pub fn bin_index(edges: &[f64], value: f64) -> usize {
    edges.partition_point(|&e| e < value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    /// Percentile with the "midpoint" rule, straight from its definition.
    fn midpoint_percentile(sorted: &[f64], q: f64) -> f64 {
        let pos = q * (sorted.len() - 1) as f64;
        let below = sorted[pos.floor() as usize];
        let above = sorted[pos.ceil() as usize];
        0.5 * (below + above)
    }

    #[test]
    fn uniform_quartiles() {
        let values: Vec<f64> = (1..=1000).map(f64::from).collect();
        let edges = feature_edges(&values, 4);
        let oracle: Vec<f64> = [0.25, 0.5, 0.75]
            .iter()
            .map(|&q| midpoint_percentile(&values, q))
            .collect();
        assert_eq!(edges, oracle);
        assert_eq!(edges, vec![250.5, 500.5, 750.5]);
    }

    #[test]
    fn few_distinct_values_get_own_bins() {
        let values = [3.0, 1.0, 2.0, 2.0, 1.0];
        let edges = feature_edges(&values, 255);
        assert_eq!(edges, vec![1.5, 2.5]);
        assert_eq!(bin_index(&edges, 1.0), 0);
        assert_eq!(bin_index(&edges, 2.0), 1);
        assert_eq!(bin_index(&edges, 3.0), 2);
    }

    #[test]
    fn constant_feature_single_bin() {
        assert!(feature_edges(&[7.0; 10], 16).is_empty());
        assert_eq!(bin_index(&[], 7.0), 0);
    }

    #[test]
    fn bins_agree_with_thresholds() {
        let values: Vec<f64> = (0..500).map(|i| ((i * 37) % 101) as f64 * 0.5).collect();
        let edges = feature_edges(&values, 8);
        assert!(edges.len() <= 7);
        for (b, &e) in edges.iter().enumerate() {
            for &v in &values {
                assert_eq!(bin_index(&edges, v) <= b, v <= e);
            }
        }
    }

    #[test]
    fn rejects_bad_bin_counts() {
        let m = Array2::<f64>::zeros((3, 2));
        assert!(histogram_bin(m.view(), 1).is_err());
        assert!(histogram_bin(m.view(), 256).is_err());
        assert_eq!(histogram_bin(m.view(), 2).unwrap().len(), 2);
    }
}
