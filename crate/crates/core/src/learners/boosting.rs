//! Gradient boosting on the logistic loss.
//!
//! Both boosters share one tree grower; they differ only in how candidate
//! splits are enumerated. Exact boosting scans presorted raw values, the
//! histogram booster scans quantile bins. Splits maximize
//! `G_l^2/H_l + G_r^2/H_r - G^2/H` over gradient/hessian sums.
//!
//! Each leaf takes a shrunken Newton step `-lr * G/H`, halved until it does
//! not increase that leaf's training loss, so the training log-loss never
//! increases from one stage to the next.

use std::ops::Range;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::binning::{bin_index, histogram_bin};
use super::split::{columns, improves, midpoint, presort, stable_partition, MIN_GAIN};
use super::tree::{Node, Split, Tree};
use crate::error::Result;

const MIN_CHILD_HESSIAN: f64 = 1e-12;
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            n_trees: 100,
            learning_rate: 0.1,
            max_depth: 3,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistBoostParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: Option<usize>,
    /// Best-first growth stops at this many leaves.
    pub max_leaves: Option<usize>,
    pub min_leaf: usize,
    pub n_bins: usize,
}

impl Default for HistBoostParams {
    fn default() -> Self {
        HistBoostParams {
            n_trees: 100,
            learning_rate: 0.1,
            max_depth: None,
            max_leaves: Some(31),
            min_leaf: 20,
            n_bins: 255,
        }
    }
}

pub(crate) struct GrowParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: Option<usize>,
    pub max_leaves: Option<usize>,
    pub min_leaf: usize,
}

pub(crate) struct BoostOutput {
    pub init: f64,
    pub trees: Vec<Tree>,
    /// Mean training log-loss before the first tree and after each stage.
    pub loss_trace: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Log-loss of margin `m` against label `y`.
pub fn log_loss(margin: f64, y: f64) -> f64 {
    softplus(margin) - y * margin
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

trait SplitSearch {
    /// Places every training row in the root range.
    fn reset(&mut self);
    fn samples(&self, range: Range<usize>) -> &[u32];
    fn best_split(&mut self, range: Range<usize>, grad: &[f64], hess: &[f64], min_leaf: usize) -> Option<Candidate>;
    /// Partitions the range left-then-right and returns the left size.
    fn apply(&mut self, range: Range<usize>, cand: &Candidate) -> usize;
}

#[derive(Clone, Copy, Default)]
struct Stats {
    g: f64,
    h: f64,
    n: usize,
}

impl Stats {
    fn score(self) -> f64 {
        self.g * self.g / self.h
    }
}

fn node_stats(samples: &[u32], grad: &[f64], hess: &[f64]) -> Stats {
    let mut s = Stats::default();
    for &r in samples {
        s.g += grad[r as usize];
        s.h += hess[r as usize];
    }
    s.n = samples.len();
    s
}

/// Scores one boundary; `None` when it violates leaf constraints.
fn boundary_gain(left: Stats, total: Stats, min_leaf: usize) -> Option<f64> {
    let right = Stats {
        g: total.g - left.g,
        h: total.h - left.h,
        n: total.n - left.n,
    };
    if left.n < min_leaf || right.n < min_leaf || left.h < MIN_CHILD_HESSIAN || right.h < MIN_CHILD_HESSIAN {
        return None;
    }
    Some(left.score() + right.score() - total.score())
}

struct ExactSearch {
    cols: Vec<Vec<f64>>,
    sorted: Vec<Vec<u32>>,
    order: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
}

impl ExactSearch {
    fn new(rows: ArrayView2<'_, f64>) -> Self {
        let cols = columns(rows);
        let sorted = presort(&cols);
        ExactSearch {
            order: sorted.clone(),
            goes_left: vec![false; rows.nrows()],
            cols,
            sorted,
            scratch: Vec::new(),
        }
    }
}

impl SplitSearch for ExactSearch {
    fn reset(&mut self) {
        for (o, s) in self.order.iter_mut().zip(&self.sorted) {
            o.copy_from_slice(s);
        }
    }

    fn samples(&self, range: Range<usize>) -> &[u32] {
        &self.order[0][range]
    }

    fn best_split(&mut self, range: Range<usize>, grad: &[f64], hess: &[f64], min_leaf: usize) -> Option<Candidate> {
        let total = node_stats(&self.order[0][range.clone()], grad, hess);
        let mut best: Option<Candidate> = None;
        for (f, col) in self.cols.iter().enumerate() {
            let seg = &self.order[f][range.clone()];
            let mut left = Stats::default();
            for k in 0..seg.len().saturating_sub(1) {
                let r = seg[k] as usize;
                left.g += grad[r];
                left.h += hess[r];
                left.n += 1;
                let (v, next) = (col[r], col[seg[k + 1] as usize]);
                if v >= next {
                    continue;
                }
                let Some(gain) = boundary_gain(left, total, min_leaf) else {
                    continue;
                };
                if improves(gain, best.map_or(MIN_GAIN, |b| b.gain)) {
                    best = Some(Candidate {
                        feature: f,
                        threshold: midpoint(v, next),
                        gain,
                    });
                }
            }
        }
        best
    }

    fn apply(&mut self, range: Range<usize>, cand: &Candidate) -> usize {
        let col = &self.cols[cand.feature];
        for &r in &self.order[cand.feature][range.clone()] {
            self.goes_left[r as usize] = col[r as usize] <= cand.threshold;
        }
        let mut n_left = 0;
        for o in self.order.iter_mut() {
            n_left = stable_partition(&mut o[range.clone()], &self.goes_left, &mut self.scratch);
        }
        n_left
    }
}

struct HistSearch {
    bins: Vec<Vec<u8>>,
    edges: Vec<Vec<f64>>,
    samples: Vec<u32>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
    hist: Vec<Stats>,
}

impl HistSearch {
    fn new(rows: ArrayView2<'_, f64>, n_bins: usize) -> Result<Self> {
        let edges = histogram_bin(rows, n_bins)?;
        let bins = rows
            .columns()
            .into_iter()
            .zip(&edges)
            .map(|(col, e)| col.iter().map(|&v| bin_index(e, v) as u8).collect())
            .collect();
        Ok(HistSearch {
            bins,
            edges,
            samples: (0..rows.nrows() as u32).collect(),
            goes_left: vec![false; rows.nrows()],
            scratch: Vec::new(),
            hist: Vec::new(),
        })
    }
}

impl SplitSearch for HistSearch {
    fn reset(&mut self) {
        for (i, s) in self.samples.iter_mut().enumerate() {
            *s = i as u32;
        }
    }

    fn samples(&self, range: Range<usize>) -> &[u32] {
        &self.samples[range]
    }

    fn best_split(&mut self, range: Range<usize>, grad: &[f64], hess: &[f64], min_leaf: usize) -> Option<Candidate> {
        let node = &self.samples[range];
        let total = node_stats(node, grad, hess);
        let mut best: Option<Candidate> = None;
        for (f, (bins, edges)) in self.bins.iter().zip(&self.edges).enumerate() {
            if edges.is_empty() {
                continue;
            }
            let n_bins = edges.len() + 1;
            self.hist.clear();
            self.hist.resize(n_bins, Stats::default());
            for &r in node {
                let cell = &mut self.hist[bins[r as usize] as usize];
                cell.g += grad[r as usize];
                cell.h += hess[r as usize];
                cell.n += 1;
            }
            let mut left = Stats::default();
            for b in 0..n_bins - 1 {
                let cell = self.hist[b];
                if cell.n == 0 {
                    // same partition as the previous non-empty bin
                    continue;
                }
                left.g += cell.g;
                left.h += cell.h;
                left.n += cell.n;
                if left.n == total.n {
                    break;
                }
                let Some(gain) = boundary_gain(left, total, min_leaf) else {
                    continue;
                };
                if improves(gain, best.map_or(MIN_GAIN, |c| c.gain)) {
                    best = Some(Candidate {
                        feature: f,
                        threshold: edges[b],
                        gain,
                    });
                }
            }
        }
        best
    }

    fn apply(&mut self, range: Range<usize>, cand: &Candidate) -> usize {
        let edges = &self.edges[cand.feature];
        let cut = bin_index(edges, cand.threshold);
        let bins = &self.bins[cand.feature];
        for &r in &self.samples[range.clone()] {
            self.goes_left[r as usize] = (bins[r as usize] as usize) <= cut;
        }
        stable_partition(&mut self.samples[range], &self.goes_left, &mut self.scratch)
    }
}

struct Pending {
    node: usize,
    depth: usize,
    cand: Candidate,
}

/// Grows one tree; returns the nodes and each node's sample range.
fn grow(
    search: &mut dyn SplitSearch,
    grad: &[f64],
    hess: &[f64],
    params: &GrowParams,
) -> (Vec<Node>, Vec<Range<usize>>) {
    let n = grad.len();
    search.reset();
    let newton = |s: Stats| if s.h > 0.0 { -params.learning_rate * s.g / s.h } else { 0.0 };
    let root = node_stats(search.samples(0..n), grad, hess);
    let mut nodes = vec![Node::leaf(newton(root), n as f64)];
    let mut ranges = vec![0..n];
    let mut pending: Vec<Pending> = Vec::new();
    let can_split = |depth: usize, size: usize| {
        params.max_depth.is_none_or(|m| depth < m) && size >= 2 * params.min_leaf.max(1)
    };
    if can_split(0, n) {
        if let Some(cand) = search.best_split(0..n, grad, hess, params.min_leaf) {
            pending.push(Pending { node: 0, depth: 0, cand });
        }
    }
    let mut n_leaves = 1;
    while !pending.is_empty() {
        if params.max_leaves.is_some_and(|m| n_leaves >= m) {
            break;
        }
        // highest gain first, earliest node on ties
        let pick = (0..pending.len())
            .reduce(|a, b| {
                let (pa, pb) = (&pending[a], &pending[b]);
                if improves(pb.cand.gain, pa.cand.gain) || (!improves(pa.cand.gain, pb.cand.gain) && pb.node < pa.node) {
                    b
                } else {
                    a
                }
            })
            .expect("non-empty");
        let Pending { node, depth, cand } = pending.swap_remove(pick);
        let range = ranges[node].clone();
        let mid = range.start + search.apply(range.clone(), &cand);
        let left_idx = nodes.len();
        for child in [range.start..mid, mid..range.end] {
            let stats = node_stats(search.samples(child.clone()), grad, hess);
            nodes.push(Node::leaf(newton(stats), child.len() as f64));
            ranges.push(child);
        }
        nodes[node].split = Some(Split {
            feature: cand.feature,
            threshold: cand.threshold,
            left: left_idx,
            right: left_idx + 1,
            gain: cand.gain,
        });
        n_leaves += 1;
        for child in [left_idx, left_idx + 1] {
            let r = ranges[child].clone();
            if can_split(depth + 1, r.len()) {
                if let Some(cand) = search.best_split(r, grad, hess, params.min_leaf) {
                    pending.push(Pending {
                        node: child,
                        depth: depth + 1,
                        cand,
                    });
                }
            }
        }
    }
    (nodes, ranges)
}

fn mean_loss(margins: &[f64], y: &[f64]) -> f64 {
    margins.iter().zip(y).map(|(&m, &t)| log_loss(m, t)).sum::<f64>() / margins.len() as f64
}

fn run(search: &mut dyn SplitSearch, labels: &[u8], params: &GrowParams) -> BoostOutput {
    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let p = y.iter().sum::<f64>() / y.len() as f64;
    let init = (p / (1.0 - p)).ln();
    let mut margins = vec![init; y.len()];
    let mut grad = vec![0.0; y.len()];
    let mut hess = vec![0.0; y.len()];
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut loss_trace = vec![mean_loss(&margins, &y)];

    for _ in 0..params.n_trees {
        for i in 0..y.len() {
            let prob = sigmoid(margins[i]);
            grad[i] = prob - y[i];
            hess[i] = prob * (1.0 - prob);
        }
        let (mut nodes, ranges) = grow(search, &grad, &hess, params);
        for (idx, node) in nodes.iter_mut().enumerate() {
            if !node.is_leaf() {
                continue;
            }
            let rows = search.samples(ranges[idx].clone());
            let before: f64 = rows.iter().map(|&r| log_loss(margins[r as usize], y[r as usize])).sum();
            let mut step = node.value;
            let mut accepted = false;
            for _ in 0..MAX_HALVINGS {
                let after: f64 = rows
                    .iter()
                    .map(|&r| log_loss(margins[r as usize] + step, y[r as usize]))
                    .sum();
                if after <= before {
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            node.value = if accepted { step } else { 0.0 };
            for &r in rows {
                margins[r as usize] += node.value;
            }
        }
        trees.push(Tree::from_nodes_unchecked(nodes));
        loss_trace.push(mean_loss(&margins, &y));
    }
    BoostOutput {
        init,
        trees,
        loss_trace,
    }
}

pub(crate) fn fit_exact(rows: ArrayView2<'_, f64>, labels: &[u8], params: &BoostParams) -> BoostOutput {
    let mut search = ExactSearch::new(rows);
    run(
        &mut search,
        labels,
        &GrowParams {
            n_trees: params.n_trees,
            learning_rate: params.learning_rate,
            max_depth: Some(params.max_depth),
            max_leaves: None,
            min_leaf: params.min_leaf,
        },
    )
}

pub(crate) fn fit_hist(rows: ArrayView2<'_, f64>, labels: &[u8], params: &HistBoostParams) -> Result<BoostOutput> {
    let mut search = HistSearch::new(rows, params.n_bins)?;
    Ok(run(
        &mut search,
        labels,
        &GrowParams {
            n_trees: params.n_trees,
            learning_rate: params.learning_rate,
            max_depth: params.max_depth,
            max_leaves: params.max_leaves,
            min_leaf: params.min_leaf,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn numerics() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(800.0) - 1.0).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(1000.0) - 1000.0).abs() < 1e-12);
        assert!(log_loss(-1000.0, 0.0) < 1e-300 + 1e-12);
    }

    #[test]
    fn boundary_respects_min_leaf() {
        let total = Stats { g: 0.0, h: 4.0, n: 4 };
        let left = Stats { g: -1.0, h: 1.0, n: 1 };
        assert!(boundary_gain(left, total, 2).is_none());
        assert!(boundary_gain(left, total, 1).is_some());
    }

    #[test]
    fn loss_decreases_on_separable_data() {
        let x = array![[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]];
        let y = [0u8, 0, 0, 1, 1, 1];
        let out = fit_exact(x.view(), &y, &BoostParams { n_trees: 20, ..Default::default() });
        assert!(out.loss_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(out.loss_trace.last().unwrap() < &0.2);
        assert_eq!(out.trees[0].nodes()[0].split.unwrap().threshold, 2.5);
    }

    #[test]
    fn leaf_limit_is_respected() {
        let x = ndarray::Array2::from_shape_fn((200, 3), |(i, j)| ((i * (j + 3)) % 17) as f64);
        let y: Vec<u8> = (0..200).map(|i| u8::from((i * 7) % 5 < 2)).collect();
        let params = HistBoostParams {
            n_trees: 5,
            max_leaves: Some(4),
            min_leaf: 1,
            ..Default::default()
        };
        let out = fit_hist(x.view(), &y, &params).unwrap();
        assert!(out.trees.iter().all(|t| t.n_leaves() <= 4));
    }
}
