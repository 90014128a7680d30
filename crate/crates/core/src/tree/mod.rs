//! Histogram split search, Newton leaf weights and leaf-wise tree growth.

mod grower;
mod histogram;
mod split;

pub use grower::{grow_tree, GrownTree, RowPartition, TreeConfig};
pub use histogram::{build_histogram, histogram_subtraction, FeatureView, Histogram, HISTOGRAM_BIN_BYTES, NO_MATCH};
pub use split::{find_best_split, split_gain, NodeStats, SplitConfig, SplitInfo};

/// Numerical guard added to hessian sums in denominators.
pub const EPSILON: f64 = 1e-10;

/// First and second derivative of the loss at the current prediction.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradientPair {
    pub g: f64,
    pub h: f64,
}

/// Newton step `-G / H` minimizing `G w + ½ H w²`.
///
/// The guard only enters when `H` is exactly zero, where an empty leaf
/// (`G = 0`) gets weight 0.
pub fn leaf_weight(sum_g: f64, sum_h: f64) -> f64 {
    let w = if sum_h > 0.0 { -sum_g / sum_h } else { -sum_g / (sum_h + EPSILON) };
    if w == 0.0 {
        0.0
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

/// Binary tree stored as an arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Self { nodes: vec![Node::Leaf { value }] }
    }

    /// Build from an arena. Child indices must point inside `nodes`.
    pub fn from_nodes(nodes: Vec<Node>) -> Self {
        assert!(!nodes.is_empty());
        Self { nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Index of the leaf reached by a row; `value_of(feature)` supplies raw values.
    pub fn leaf_index(&self, value_of: impl Fn(usize) -> f64) -> usize {
        let mut idx = 0;
        loop {
            match self.nodes[idx] {
                Node::Leaf { .. } => return idx,
                Node::Split { feature, threshold, left, right } => {
                    let v = value_of(feature);
                    idx = if !v.is_finite() || v <= threshold { left } else { right };
                }
            }
        }
    }

    /// Leaf value reached by a row. Missing (non-finite) values go left.
    pub fn predict(&self, value_of: impl Fn(usize) -> f64) -> f64 {
        match self.nodes[self.leaf_index(value_of)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!(),
        }
    }

    /// Features referenced by split nodes.
    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }

    pub(crate) fn set_leaf(&mut self, idx: usize, value: f64) {
        self.nodes[idx] = Node::Leaf { value };
    }

    pub(crate) fn split_leaf(&mut self, idx: usize, feature: usize, threshold: f64) -> (usize, usize) {
        let left = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        self.nodes.push(Node::Leaf { value: 0.0 });
        self.nodes[idx] = Node::Split { feature, threshold, left, right: left + 1 };
        (left, left + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newton_weights() {
        assert_eq!(leaf_weight(-6.0, 3.0), 2.0);
        assert_eq!(leaf_weight(0.0, 0.0), 0.0);
        assert!(leaf_weight(0.0, 0.0).is_sign_positive());
        // MSE residuals {0.5, 0.5} on the left rows: g = -r, G = -1... here g = ŷ - y
        // with y - ŷ = {-0.5, -0.5}: G = 1, H = 2, weight = mean residual = -0.5
        let residuals = [-0.5, -0.5];
        let g: f64 = residuals.iter().map(|r| -r).sum();
        let mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
        assert_eq!(g, 1.0);
        assert_eq!(leaf_weight(g, 2.0), mean);
    }

    fn stump() -> Tree {
        let mut t = Tree::leaf(0.0);
        let (l, r) = t.split_leaf(0, 0, 2.5);
        t.set_leaf(l, -0.5);
        t.set_leaf(r, 0.5);
        t
    }

    #[test]
    fn predict_examples() {
        let t = stump();
        assert_eq!(t.predict(|_| 1.0), -0.5);
        assert_eq!(t.predict(|_| 2.5), -0.5);
        assert_eq!(t.predict(|_| 3.0), 0.5);
        assert_eq!(t.predict(|_| f64::NAN), -0.5);
        assert_eq!(t.predict(|_| f64::INFINITY), -0.5);
        assert_eq!(Tree::leaf(0.7).predict(|_| 123.0), 0.7);
        assert_eq!(t.n_leaves(), 2);
    }
}
