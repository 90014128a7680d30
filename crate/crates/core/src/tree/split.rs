use crate::tree::histogram::Histogram;
use crate::tree::EPSILON;

/// Aggregate gradient statistics of a node: (G, H, count).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NodeStats {
    pub sum_g: f64,
    pub sum_h: f64,
    pub count: u32,
}

impl NodeStats {
    pub fn new(sum_g: f64, sum_h: f64, count: u32) -> Self {
        Self { sum_g, sum_h, count }
    }

    /// `G² / (H + ε)`, twice the loss reduction of the node's Newton step.
    pub fn score(&self) -> f64 {
        self.sum_g * self.sum_g / (self.sum_h + EPSILON)
    }

    fn minus(&self, other: &NodeStats) -> NodeStats {
        NodeStats {
            sum_g: self.sum_g - other.sum_g,
            sum_h: self.sum_h - other.sum_h,
            count: self.count - other.count,
        }
    }
}

/// Decrease of the second-order loss surrogate when `parent` splits into `left` and `right`.
pub fn split_gain(left: &NodeStats, right: &NodeStats, parent: &NodeStats) -> f64 {
    0.5 * (left.score() + right.score() - parent.score())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    pub min_data_in_leaf: usize,
    pub min_split_gain: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { min_data_in_leaf: 20, min_split_gain: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitInfo {
    pub feature: usize,
    /// Last finite bin routed left.
    pub split_bin: usize,
    /// Raw threshold: rows with `value <= threshold` (or missing) go left.
    pub threshold: f64,
    pub gain: f64,
    pub left: NodeStats,
    pub right: NodeStats,
    pub missing_goes_left: bool,
}

/// Best split over all features, scanning each histogram's finite bins left to right.
///
/// `boundaries[f]` are the bin boundaries behind `histograms[f]`. Ties keep the
/// lowest feature, then the lowest bin.
pub fn find_best_split(
    histograms: &[Histogram],
    boundaries: &[&[f64]],
    parent: &NodeStats,
    config: &SplitConfig,
) -> Option<SplitInfo> {
    debug_assert_eq!(histograms.len(), boundaries.len());
    let min_leaf = config.min_data_in_leaf.max(1) as u32;
    let mut best: Option<SplitInfo> = None;
    for (feature, (hist, bounds)) in histograms.iter().zip(boundaries).enumerate() {
        let n_finite = hist.n_finite_bins();
        debug_assert_eq!(bounds.len() + 1, n_finite);
        let mut left = match hist.missing_slot() {
            Some(m) => {
                let (g, h, c) = hist.bin(m);
                NodeStats::new(g, h, c)
            }
            None => NodeStats::default(),
        };
        for bin in 0..n_finite.saturating_sub(1) {
            let (g, h, c) = hist.bin(bin);
            left.sum_g += g;
            left.sum_h += h;
            left.count += c;
            if left.count < min_leaf {
                continue;
            }
            if parent.count < left.count + min_leaf {
                break;
            }
            let right = parent.minus(&left);
            let gain = split_gain(&left, &right, parent);
            if gain > config.min_split_gain && best.map_or(true, |b| gain > b.gain) {
                best = Some(SplitInfo {
                    feature,
                    split_bin: bin,
                    threshold: bounds[bin],
                    gain,
                    left,
                    right,
                    missing_goes_left: true,
                });
            }
        }
    }
    best
}
