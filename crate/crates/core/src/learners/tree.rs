use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Internal-node routing: `x[feature] <= threshold` goes left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    /// Impurity (forest) or loss (boosting) reduction achieved by the split.
    pub gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// Training weight that reached the node. Children covers sum to the parent's.
    pub cover: f64,
    /// Output when the node is a leaf; informational on internal nodes.
    pub value: f64,
    pub split: Option<Split>,
}

impl Node {
    pub fn leaf(value: f64, cover: f64) -> Self {
        Node {
            cover,
            value,
            split: None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }
}

/// A binary decision tree stored as a node arena rooted at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// Builds a tree after checking it is well formed: every child index is
    /// greater than its parent's, every non-root node has exactly one parent
    /// and covers are positive and finite.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidInput("tree has no nodes".into()));
        }
        let mut parents = vec![0u32; nodes.len()];
        for (i, node) in nodes.iter().enumerate() {
            if !(node.cover.is_finite() && node.cover > 0.0) || !node.value.is_finite() {
                return Err(Error::InvalidInput(format!("node {i} has invalid cover or value")));
            }
            if let Some(s) = node.split {
                for child in [s.left, s.right] {
                    if child <= i || child >= nodes.len() {
                        return Err(Error::InvalidInput(format!("node {i} has invalid child {child}")));
                    }
                    parents[child] += 1;
                }
                if s.left == s.right || !s.threshold.is_finite() {
                    return Err(Error::InvalidInput(format!("node {i} has a malformed split")));
                }
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return Err(Error::InvalidInput("tree nodes do not form a single binary tree".into()));
        }
        Ok(Tree { nodes })
    }

    pub(crate) fn from_nodes_unchecked(nodes: Vec<Node>) -> Self {
        debug_assert!(Tree::from_nodes(nodes.clone()).is_ok());
        Tree { nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        while let Some(s) = self.nodes[i].split {
            i = if x[s.feature] <= s.threshold { s.left } else { s.right };
        }
        i
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.nodes[self.leaf_index(x)].value
    }

    /// Cover-weighted mean of the leaf values.
    pub fn expected_value(&self) -> f64 {
        let root = self.nodes[0].cover;
        self.nodes
            .iter()
            .filter(|n| n.is_leaf())
            .map(|n| n.value * n.cover / root)
            .sum()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i].split {
                None => 0,
                Some(s) => 1 + go(t, s.left).max(go(t, s.right)),
            }
        }
        go(self, 0)
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.nodes.iter().filter_map(|n| n.split.map(|s| s.feature)).max()
    }

    pub fn uses_feature(&self, feature: usize) -> bool {
        self.nodes
            .iter()
            .any(|n| n.split.is_some_and(|s| s.feature == feature))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stump() -> Tree {
        Tree::from_nodes(vec![
            Node {
                cover: 10.0,
                value: 0.0,
                split: Some(Split {
                    feature: 0,
                    threshold: 0.5,
                    left: 1,
                    right: 2,
                    gain: 1.0,
                }),
            },
            Node::leaf(-1.0, 4.0),
            Node::leaf(2.0, 6.0),
        ])
        .unwrap()
    }

    #[test]
    fn routing_and_expectation() {
        let t = stump();
        assert_eq!(t.predict(&[0.5]), -1.0);
        assert_eq!(t.predict(&[0.6]), 2.0);
        assert!((t.expected_value() - 0.8).abs() < 1e-15);
        assert_eq!(t.depth(), 1);
        assert_eq!(t.n_leaves(), 2);
    }

    #[test]
    fn rejects_malformed_trees() {
        let mut nodes = stump().nodes().to_vec();
        nodes[0].split.as_mut().unwrap().right = 1;
        assert!(Tree::from_nodes(nodes).is_err());
        let mut nodes = stump().nodes().to_vec();
        nodes.push(Node::leaf(0.0, 1.0));
        assert!(Tree::from_nodes(nodes).is_err());
        assert!(Tree::from_nodes(vec![]).is_err());
    }
}
