//! Exact path-dependent TreeSHAP.
//!
//! For each leaf the algorithm tracks, along the root-to-leaf path, the
//! fraction of coalitions that reach it with each path feature absent
//! (`zero_fraction`, the cover ratio) or present (`one_fraction`, whether `x`
//! follows the branch). Repeated features are merged by unwinding their
//! earlier entry. Runs in `O(L * D^2)` per tree.

use crate::learners::Tree;

#[derive(Debug, Clone, Copy, Default)]
struct PathElement {
    feature: Option<usize>,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

fn extend(path: &mut [PathElement], depth: usize, zero: f64, one: f64, feature: Option<usize>) {
    path[depth] = PathElement {
        feature,
        zero_fraction: zero,
        one_fraction: one,
        pweight: if depth == 0 { 1.0 } else { 0.0 },
    };
    let d1 = (depth + 1) as f64;
    for i in (0..depth).rev() {
        path[i + 1].pweight += one * path[i].pweight * (i + 1) as f64 / d1;
        path[i].pweight = zero * path[i].pweight * (depth - i) as f64 / d1;
    }
}

fn unwind(path: &mut [PathElement], depth: usize, index: usize) {
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let d1 = (depth + 1) as f64;
    let mut next = path[depth].pweight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].pweight;
            path[i].pweight = next * d1 / ((i + 1) as f64 * one);
            next = tmp - path[i].pweight * zero * (depth - i) as f64 / d1;
        } else {
            path[i].pweight = path[i].pweight * d1 / (zero * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
}

/// Total permutation weight of the path with element `index` removed.
fn unwound_sum(path: &[PathElement], depth: usize, index: usize) -> f64 {
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let d1 = (depth + 1) as f64;
    let mut next = path[depth].pweight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = next * d1 / ((i + 1) as f64 * one);
            total += tmp;
            next = path[i].pweight - tmp * zero * (depth - i) as f64 / d1;
        } else if zero != 0.0 {
            total += path[i].pweight / zero / ((depth - i) as f64 / d1);
        }
    }
    total
}

struct Walker<'a> {
    tree: &'a Tree,
    x: &'a [f64],
    phi: &'a mut [f64],
    scale: f64,
    buf: Vec<PathElement>,
}

impl Walker<'_> {
    fn recurse(&mut self, node: usize, parent: usize, depth: usize, zero: f64, one: f64, feature: Option<usize>) {
        // this node's path lives right after its parent's
        let start = parent + depth + 1;
        if depth > 0 {
            self.buf.copy_within(parent..parent + depth, start);
        }
        let mut depth = depth;
        extend(&mut self.buf[start..], depth, zero, one, feature);

        let nodes = self.tree.nodes();
        let Some(split) = nodes[node].split else {
            let value = nodes[node].value * self.scale;
            let path = &self.buf[start..];
            for i in 1..=depth {
                let w = unwound_sum(path, depth, i);
                let el = path[i];
                if let Some(j) = el.feature {
                    self.phi[j] += w * (el.one_fraction - el.zero_fraction) * value;
                }
            }
            return;
        };

        let f = split.feature;
        let (hot, cold) = if self.x[f] <= split.threshold {
            (split.left, split.right)
        } else {
            (split.right, split.left)
        };
        let cover = nodes[node].cover;
        let hot_zero = nodes[hot].cover / cover;
        let cold_zero = nodes[cold].cover / cover;
        let (mut in_zero, mut in_one) = (1.0, 1.0);

        if let Some(k) = (1..=depth).find(|&k| self.buf[start + k].feature == Some(f)) {
            in_zero = self.buf[start + k].zero_fraction;
            in_one = self.buf[start + k].one_fraction;
            unwind(&mut self.buf[start..], depth, k);
            depth -= 1;
        }
        self.recurse(hot, start, depth + 1, hot_zero * in_zero, in_one, Some(f));
        self.recurse(cold, start, depth + 1, cold_zero * in_zero, 0.0, Some(f));
    }
}

/// Adds `scale` times the Shapley values of one tree at `x` into `phi`.
pub fn accumulate(tree: &Tree, x: &[f64], phi: &mut [f64], scale: f64) {
    let depth = tree.depth() + 2;
    let mut walker = Walker {
        tree,
        x,
        phi,
        scale,
        buf: vec![PathElement::default(); (depth + 2) * (depth + 3) / 2 + depth + 2],
    };
    walker.recurse(0, 0, 0, 1.0, 1.0, None);
}
