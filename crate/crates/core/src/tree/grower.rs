use std::ops::Range;

use rayon::prelude::*;

use crate::columnar::{Category, Session, TrackedVec};
use crate::tree::histogram::{build_histogram, FeatureView, Histogram};
use crate::tree::split::{find_best_split, NodeStats, SplitConfig, SplitInfo};
use crate::tree::{leaf_weight, GradientPair, Tree};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeConfig {
    pub max_leaves: usize,
    pub split: SplitConfig,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self { max_leaves: 31, split: SplitConfig::default() }
    }
}

/// Row indices grouped so that every leaf owns a contiguous range.
#[derive(Debug)]
pub struct RowPartition {
    indices: TrackedVec<u32>,
    scratch: TrackedVec<u32>,
    leaves: Vec<(usize, Range<usize>)>,
}

impl RowPartition {
    fn new(rows: &[u32], session: &Session) -> Self {
        Self {
            indices: TrackedVec::from_vec(session, Category::Gradients, rows.to_vec()),
            scratch: TrackedVec::filled(session, Category::Gradients, 0, rows.len()),
            leaves: Vec::new(),
        }
    }

    fn rows(&self, range: Range<usize>) -> &[u32] {
        &self.indices[range]
    }

    /// Stable partition of `range`; returns direct (G, H, count) sums of both sides
    /// and the first index of the right side.
    fn split(
        &mut self,
        range: Range<usize>,
        goes_left: impl Fn(usize) -> bool,
        grads: &[GradientPair],
    ) -> (NodeStats, NodeStats, usize) {
        let mut left = NodeStats::default();
        let mut right = NodeStats::default();
        let mut write = range.start;
        let mut n_right = 0;
        for i in range.clone() {
            let row = self.indices[i];
            let gp = grads[row as usize];
            if goes_left(row as usize) {
                self.indices[write] = row;
                write += 1;
                left.sum_g += gp.g;
                left.sum_h += gp.h;
                left.count += 1;
            } else {
                self.scratch[n_right] = row;
                n_right += 1;
                right.sum_g += gp.g;
                right.sum_h += gp.h;
                right.count += 1;
            }
        }
        self.indices[write..range.end].copy_from_slice(&self.scratch[..n_right]);
        (left, right, write)
    }

    /// `(leaf node id, rows)` for every leaf of the grown tree.
    pub fn leaves(&self) -> impl Iterator<Item = (usize, &[u32])> + '_ {
        self.leaves.iter().map(|(node, r)| (*node, &self.indices[r.clone()]))
    }

    pub fn leaf_rows(&self, node: usize) -> Option<&[u32]> {
        self.leaves
            .iter()
            .find(|(n, _)| *n == node)
            .map(|(_, r)| &self.indices[r.clone()])
    }
}

#[derive(Debug)]
pub struct GrownTree {
    pub tree: Tree,
    pub partition: RowPartition,
    /// Accepted splits in the order they were applied.
    pub splits: Vec<SplitInfo>,
}

impl GrownTree {
    /// `(feature, bin)` of every split, for the adaptive-resize hit counters.
    pub fn split_hits(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.splits.iter().map(|s| (s.feature, s.split_bin))
    }
}

struct LeafState {
    node: usize,
    range: Range<usize>,
    stats: NodeStats,
    hists: Option<Vec<Histogram>>,
    best: Option<SplitInfo>,
}

fn node_stats(rows: &[u32], grads: &[GradientPair]) -> NodeStats {
    let mut s = NodeStats::default();
    for &r in rows {
        let gp = grads[r as usize];
        s.sum_g += gp.g;
        s.sum_h += gp.h;
        s.count += 1;
    }
    s
}

fn build_all(rows: &[u32], views: &[FeatureView<'_>], grads: &[GradientPair], session: &Session) -> Vec<Histogram> {
    views.par_iter().map(|v| build_histogram(rows, v, grads, session)).collect()
}

/// Leaf-wise growth: repeatedly split the leaf whose best split has the largest gain.
///
/// `rows` is the root row set; `grads` is indexed by row.
pub fn grow_tree(
    views: &[FeatureView<'_>],
    grads: &[GradientPair],
    rows: &[u32],
    config: &TreeConfig,
    session: &Session,
) -> GrownTree {
    let bounds: Vec<&[f64]> = views.iter().map(|v| v.mapper().boundaries()).collect();
    let min_leaf = config.split.min_data_in_leaf.max(1);
    let splittable = |s: &NodeStats| s.count as usize >= 2 * min_leaf && !views.is_empty();

    let mut partition = RowPartition::new(rows, session);
    let mut tree = Tree::leaf(0.0);
    let mut root = LeafState {
        node: 0,
        range: 0..rows.len(),
        stats: node_stats(rows, grads),
        hists: None,
        best: None,
    };
    if config.max_leaves > 1 && splittable(&root.stats) {
        let hists = build_all(rows, views, grads, session);
        root.best = find_best_split(&hists, &bounds, &root.stats, &config.split);
        if root.best.is_some() {
            root.hists = Some(hists);
        }
    }
    let mut leaves = vec![root];
    let mut splits = Vec::new();

    while leaves.len() < config.max_leaves {
        let mut pick: Option<usize> = None;
        for (i, leaf) in leaves.iter().enumerate() {
            let Some(b) = &leaf.best else { continue };
            let better = match pick {
                None => true,
                Some(p) => {
                    let cur = leaves[p].best.as_ref().unwrap();
                    b.gain > cur.gain || (b.gain == cur.gain && leaf.node < leaves[p].node)
                }
            };
            if better {
                pick = Some(i);
            }
        }
        let Some(pos) = pick else { break };
        let mut parent = leaves.remove(pos);
        let split = parent.best.take().unwrap();

        let view = &views[split.feature];
        let missing = view.missing_slot();
        let (ls, rs, mid) = partition.split(
            parent.range.clone(),
            |row| {
                let b = view.bin(row);
                b <= split.split_bin || Some(b) == missing
            },
            grads,
        );
        debug_assert_eq!(ls.count, split.left.count);
        debug_assert_eq!(rs.count, split.right.count);

        let (ln, rn) = tree.split_leaf(parent.node, split.feature, split.threshold);
        splits.push(split);
        let mut left = LeafState { node: ln, range: parent.range.start..mid, stats: ls, hists: None, best: None };
        let mut right = LeafState { node: rn, range: mid..parent.range.end, stats: rs, hists: None, best: None };

        let more_splits_allowed = leaves.len() + 2 < config.max_leaves;
        if more_splits_allowed && (splittable(&ls) || splittable(&rs)) {
            let mut larger_hists = parent.hists.take().expect("split leaf keeps its histograms");
            let (small, large) = if ls.count <= rs.count { (&mut left, &mut right) } else { (&mut right, &mut left) };
            let small_hists = build_all(partition.rows(small.range.clone()), views, grads, session);
            for (p, c) in larger_hists.iter_mut().zip(&small_hists) {
                p.subtract_in_place(c).expect("sibling histograms share bin layout");
            }
            for (leaf, hists) in [(small, small_hists), (large, larger_hists)] {
                if splittable(&leaf.stats) {
                    leaf.best = find_best_split(&hists, &bounds, &leaf.stats, &config.split);
                    if leaf.best.is_some() {
                        leaf.hists = Some(hists);
                    }
                }
            }
        }
        drop(parent);
        leaves.push(left);
        leaves.push(right);
    }

    for leaf in &mut leaves {
        leaf.hists = None;
        tree.set_leaf(leaf.node, leaf_weight(leaf.stats.sum_g, leaf.stats.sum_h));
        partition.leaves.push((leaf.node, leaf.range.clone()));
    }
    partition.leaves.sort_by_key(|(n, _)| *n);
    GrownTree { tree, partition, splits }
}
