//! Random forest of Gini-impurity CART trees.

use ndarray::ArrayView2;
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::split::{columns, improves, midpoint, presort, stable_partition, MIN_GAIN};
use super::tree::{Node, Split, Tree};
use crate::seed::derived_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubsample {
    /// `max(1, floor(sqrt(d)))` candidate features per node.
    Sqrt,
    All,
    Count(usize),
}

impl FeatureSubsample {
    pub fn resolve(self, n_features: usize) -> usize {
        let k = match self {
            FeatureSubsample::Sqrt => (n_features as f64).sqrt().floor() as usize,
            FeatureSubsample::All => n_features,
            FeatureSubsample::Count(k) => k,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub feature_subsample: FeatureSubsample,
    /// Disable only for testing: one tree over the full training set.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            feature_subsample: FeatureSubsample::Sqrt,
            bootstrap: true,
        }
    }
}

struct ForestData {
    cols: Vec<Vec<f64>>,
    sorted: Vec<Vec<u32>>,
    labels: Vec<u8>,
}

pub(crate) fn fit_forest(rows: ArrayView2<'_, f64>, labels: &[u8], params: &ForestParams, seed: u64) -> Vec<Tree> {
    let cols = columns(rows);
    let sorted = presort(&cols);
    let data = ForestData {
        cols,
        sorted,
        labels: labels.to_vec(),
    };
    let n = labels.len();
    (0..params.n_trees)
        .map(|t| {
            let mut rng = derived_rng(seed, &["rf-tree", &t.to_string()]);
            let mut weights = vec![0.0f64; n];
            if params.bootstrap {
                for _ in 0..n {
                    weights[rng.random_range(0..n)] += 1.0;
                }
            } else {
                weights.iter_mut().for_each(|w| *w = 1.0);
            }
            grow_tree(&data, &weights, params, &mut rng)
        })
        .collect()
}

#[derive(Clone, Copy)]
struct ClassWeights {
    neg: f64,
    pos: f64,
}

impl ClassWeights {
    fn total(self) -> f64 {
        self.neg + self.pos
    }

    /// Sum of squared class weights over the total; impurity decrease is a
    /// difference of these scores.
    fn score(self) -> f64 {
        (self.neg * self.neg + self.pos * self.pos) / self.total()
    }
}

struct Best {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn grow_tree(data: &ForestData, weights: &[f64], params: &ForestParams, rng: &mut ChaCha8Rng) -> Tree {
    let d = data.cols.len();
    let mut order: Vec<Vec<u32>> = data
        .sorted
        .iter()
        .map(|o| o.iter().copied().filter(|&r| weights[r as usize] > 0.0).collect())
        .collect();
    let n_active = order[0].len();
    let mtry = params.feature_subsample.resolve(d);
    let min_leaf = params.min_leaf as f64;
    let mut goes_left = vec![false; weights.len()];
    let mut scratch = Vec::new();
    let mut nodes: Vec<Node> = Vec::new();

    let class_weights = |segment: &[u32]| {
        let mut cw = ClassWeights { neg: 0.0, pos: 0.0 };
        for &r in segment {
            if data.labels[r as usize] == 1 {
                cw.pos += weights[r as usize];
            } else {
                cw.neg += weights[r as usize];
            }
        }
        cw
    };

    let root = class_weights(&order[0]);
    nodes.push(Node::leaf(root.pos / root.total(), root.total()));
    // (node index, start, end, depth)
    let mut stack = vec![(0usize, 0usize, n_active, 0usize)];

    while let Some((node_idx, start, end, depth)) = stack.pop() {
        let node_cw = class_weights(&order[0][start..end]);
        let total = node_cw.total();
        let pure = node_cw.neg == 0.0 || node_cw.pos == 0.0;
        if pure || params.max_depth.is_some_and(|m| depth >= m) || total < 2.0 * min_leaf {
            continue;
        }

        let mut features: Vec<usize> = if mtry >= d {
            (0..d).collect()
        } else {
            sample(rng, d, mtry).into_vec()
        };
        features.sort_unstable();

        let parent_score = node_cw.score();
        let mut best: Option<Best> = None;
        for &f in &features {
            let col = &data.cols[f];
            let seg = &order[f][start..end];
            let mut left = ClassWeights { neg: 0.0, pos: 0.0 };
            for k in 0..seg.len() - 1 {
                let r = seg[k] as usize;
                if data.labels[r] == 1 {
                    left.pos += weights[r];
                } else {
                    left.neg += weights[r];
                }
                let (v, next) = (col[r], col[seg[k + 1] as usize]);
                if v >= next {
                    continue;
                }
                let right = ClassWeights {
                    neg: node_cw.neg - left.neg,
                    pos: node_cw.pos - left.pos,
                };
                if left.total() < min_leaf || right.total() < min_leaf {
                    continue;
                }
                let gain = left.score() + right.score() - parent_score;
                let floor = best.as_ref().map_or(MIN_GAIN, |b| b.gain);
                if improves(gain, floor) {
                    best = Some(Best {
                        feature: f,
                        threshold: midpoint(v, next),
                        gain,
                    });
                }
            }
        }
        let Some(best) = best else { continue };

        let col = &data.cols[best.feature];
        for &r in &order[best.feature][start..end] {
            goes_left[r as usize] = col[r as usize] <= best.threshold;
        }
        let mut n_left = 0;
        for o in order.iter_mut() {
            n_left = stable_partition(&mut o[start..end], &goes_left, &mut scratch);
        }
        let mid = start + n_left;
        let (lcw, rcw) = (class_weights(&order[0][start..mid]), class_weights(&order[0][mid..end]));
        let left_idx = nodes.len();
        nodes.push(Node::leaf(lcw.pos / lcw.total(), lcw.total()));
        nodes.push(Node::leaf(rcw.pos / rcw.total(), rcw.total()));
        nodes[node_idx].split = Some(Split {
            feature: best.feature,
            threshold: best.threshold,
            left: left_idx,
            right: left_idx + 1,
            // weighted impurity decrease: W*gini - W_l*gini_l - W_r*gini_r
            gain: best.gain,
        });
        stack.push((left_idx + 1, mid, end, depth + 1));
        stack.push((left_idx, start, mid, depth + 1));
    }
    Tree::from_nodes_unchecked(nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn gini(neg: f64, pos: f64) -> f64 {
        let t = neg + pos;
        1.0 - (neg / t).powi(2) - (pos / t).powi(2)
    }

    #[test]
    fn gain_matches_weighted_gini_decrease() {
        let parent = ClassWeights { neg: 6.0, pos: 4.0 };
        let l = ClassWeights { neg: 5.0, pos: 1.0 };
        let r = ClassWeights { neg: 1.0, pos: 3.0 };
        let direct = 10.0 * gini(6.0, 4.0) - 6.0 * gini(5.0, 1.0) - 4.0 * gini(1.0, 3.0);
        let via_scores = l.score() + r.score() - parent.score();
        assert!((direct - via_scores).abs() < 1e-12);
    }

    #[test]
    fn single_unbagged_tree_fits_consistent_data() {
        let x = array![[0.0, 1.0], [1.0, 1.0], [2.0, 0.0], [3.0, 0.0], [4.0, 1.0], [5.0, 5.0]];
        let y = [0u8, 1, 0, 1, 1, 0];
        let params = ForestParams {
            n_trees: 1,
            max_depth: None,
            min_leaf: 1,
            feature_subsample: FeatureSubsample::All,
            bootstrap: false,
        };
        let trees = fit_forest(x.view(), &y, &params, 0);
        for (row, &label) in x.outer_iter().zip(&y) {
            assert_eq!(trees[0].predict(row.as_slice().unwrap()), label as f64);
        }
    }

    #[test]
    fn covers_are_bootstrap_weights() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let y = [0u8, 0, 1, 1];
        let params = ForestParams {
            n_trees: 3,
            ..ForestParams::default()
        };
        for t in fit_forest(x.view(), &y, &params, 9) {
            assert_eq!(t.nodes()[0].cover, 4.0);
        }
    }

    #[test]
    fn subsample_resolution() {
        assert_eq!(FeatureSubsample::Sqrt.resolve(28), 5);
        assert_eq!(FeatureSubsample::Sqrt.resolve(1), 1);
        assert_eq!(FeatureSubsample::Count(50).resolve(10), 10);
    }
}
