//! Helpers shared by the tree learners.

use ndarray::ArrayView2;

/// Gains closer than this (relative) are ties, resolved by lowest feature
/// index and then lowest threshold.
const TIE_TOLERANCE: f64 = 1e-10;

/// Smallest gain worth a split.
pub(crate) const MIN_GAIN: f64 = 1e-12;

pub(crate) fn improves(candidate: f64, best: f64) -> bool {
    candidate > best + TIE_TOLERANCE * best.abs()
}

/// Threshold strictly separating `lo < hi`.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

/// Column-major copy of a row-major matrix.
pub(crate) fn columns(rows: ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
    rows.columns().into_iter().map(|c| c.to_vec()).collect()
}

/// Row indices of each column sorted by value (stable on index).
pub(crate) fn presort(cols: &[Vec<f64>]) -> Vec<Vec<u32>> {
    cols.iter()
        .map(|col| {
            let mut idx: Vec<u32> = (0..col.len() as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
            idx
        })
        .collect()
}

/// Stable partition of `segment` into rows flagged left followed by the
/// rest. Returns the number of left rows.
pub(crate) fn stable_partition(segment: &mut [u32], goes_left: &[bool], scratch: &mut Vec<u32>) -> usize {
    scratch.clear();
    let mut write = 0;
    for k in 0..segment.len() {
        let row = segment[k];
        if goes_left[row as usize] {
            segment[write] = row;
            write += 1;
        } else {
            scratch.push(row);
        }
    }
    segment[write..].copy_from_slice(scratch);
    write
}
