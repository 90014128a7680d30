//! Per-feature bin boundaries, row quantization and adaptive bin resizing.
//!
//! Bins are right-closed: bin `i` holds values `v` with
//! `boundaries[i-1] < v <= boundaries[i]`. When a column has missing
//! (non-finite) values, one extra bin after the finite bins collects them.

use crate::columnar::{Category, FeatureColumn, Session, TrackedVec};
use crate::error::{Error, Result};

pub const MAX_BINS: usize = 256;
pub const DEFAULT_T_SPLIT: u32 = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct BinMapper {
    boundaries: Vec<f64>,
    has_missing_bin: bool,
    max_bins: usize,
    split_hits: Vec<u32>,
    version: u64,
}

/// A value strictly below `hi` and at least `lo`, halfway between them when representable.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo / 2.0 + hi / 2.0;
    if m >= hi || m < lo {
        lo
    } else {
        m
    }
}

fn check_max_bins(max_bins: usize) -> Result<()> {
    if !(2..=MAX_BINS).contains(&max_bins) {
        return Err(Error::ConfigError(format!("max_bins must be in [2, {MAX_BINS}], got {max_bins}")));
    }
    Ok(())
}

/// Finite row indices sorted by value. Scratch is charged as bin cache.
fn sorted_finite_rows(
    column: &FeatureColumn<'_>,
    rows: Option<&[u32]>,
    session: &Session,
) -> (TrackedVec<u32>, usize) {
    let mut idx: Vec<u32> = match rows {
        Some(r) => r.iter().copied().filter(|&i| column.raw(i as usize).is_finite()).collect(),
        None => (0..column.len() as u32).filter(|&i| column.raw(i as usize).is_finite()).collect(),
    };
    let considered = rows.map_or(column.len(), |r| r.len());
    idx.sort_unstable_by(|&a, &b| column.raw(a as usize).total_cmp(&column.raw(b as usize)));
    (TrackedVec::from_vec(session, Category::BinCache, idx), considered)
}

/// Equal-frequency bins over the column's finite values.
pub fn construct_bins(column: &FeatureColumn<'_>, max_bins: usize, session: &Session) -> Result<BinMapper> {
    construct_bins_on_rows(column, None, max_bins, session)
}

/// [`construct_bins`] restricted to a row subset.
pub fn construct_bins_on_rows(
    column: &FeatureColumn<'_>,
    rows: Option<&[u32]>,
    max_bins: usize,
    session: &Session,
) -> Result<BinMapper> {
    check_max_bins(max_bins)?;
    if column.is_empty() || rows.is_some_and(|r| r.is_empty()) {
        return Err(Error::EmptyColumn);
    }
    let (sorted, considered) = sorted_finite_rows(column, rows, session);
    if sorted.is_empty() {
        return Err(Error::AllMissing);
    }
    let has_missing_bin = sorted.len() < considered;

    let mut distinct: Vec<f64> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for &i in sorted.iter() {
        let v = column.raw(i as usize);
        if distinct.last() == Some(&v) {
            *counts.last_mut().unwrap() += 1;
        } else {
            distinct.push(v);
            counts.push(1);
        }
    }
    drop(sorted);

    let finite_cap = max_bins - usize::from(has_missing_bin);
    let mut boundaries = Vec::new();
    if distinct.len() <= finite_cap {
        for w in distinct.windows(2) {
            boundaries.push(midpoint(w[0], w[1]));
        }
    } else {
        let mut remaining: usize = counts.iter().sum();
        let mut bins_left = finite_cap;
        let mut acc = 0usize;
        for i in 0..distinct.len() - 1 {
            if bins_left == 1 {
                break;
            }
            acc += counts[i];
            let target = remaining as f64 / bins_left as f64;
            if acc as f64 >= target {
                boundaries.push(midpoint(distinct[i], distinct[i + 1]));
                remaining -= acc;
                acc = 0;
                bins_left -= 1;
            }
        }
    }
    Ok(BinMapper::from_parts(boundaries, has_missing_bin, max_bins))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResizeOutcome {
    /// A boundary was inserted inside the bin.
    Divided { boundary: f64 },
    /// The bin's boundaries moved toward its median; `None` marks a fixed range edge.
    Shrunk { lower: Option<f64>, upper: Option<f64> },
}

impl BinMapper {
    /// Build a mapper from explicit boundaries. Panics if they are not strictly increasing
    /// and finite, or if the bin count exceeds `max_bins`.
    pub fn from_parts(boundaries: Vec<f64>, has_missing_bin: bool, max_bins: usize) -> Self {
        assert!(boundaries.iter().all(|b| b.is_finite()));
        assert!(boundaries.windows(2).all(|w| w[0] < w[1]), "boundaries must increase");
        let n_bins = boundaries.len() + 1 + usize::from(has_missing_bin);
        assert!(n_bins <= max_bins.max(1) && max_bins <= MAX_BINS);
        Self {
            boundaries,
            has_missing_bin,
            max_bins,
            split_hits: vec![0; n_bins],
            version: 0,
        }
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn n_bins(&self) -> usize {
        self.boundaries.len() + 1 + usize::from(self.has_missing_bin)
    }

    pub fn n_finite_bins(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn has_missing_bin(&self) -> bool {
        self.has_missing_bin
    }

    pub fn missing_bin(&self) -> Option<usize> {
        self.has_missing_bin.then(|| self.boundaries.len() + 1)
    }

    pub fn max_bins(&self) -> usize {
        self.max_bins
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn split_hits(&self) -> &[u32] {
        &self.split_hits
    }

    /// Bin of a raw value; non-finite values go to the missing bin.
    pub fn bin_of(&self, value: f64) -> Result<usize> {
        if !value.is_finite() {
            return self.missing_bin().ok_or(Error::UnexpectedMissing);
        }
        Ok(self.finite_bin(value))
    }

    #[inline]
    pub(crate) fn finite_bin(&self, value: f64) -> usize {
        self.boundaries.partition_point(|&b| b < value)
    }

    /// Bin for a raw value where missing values fall back to the last bin index.
    #[inline]
    pub(crate) fn bin_or_missing(&self, value: f64) -> usize {
        if value.is_finite() {
            self.finite_bin(value)
        } else {
            self.boundaries.len() + 1
        }
    }

    /// Upper boundary of a finite bin, i.e. the raw threshold of a split after it.
    pub fn threshold_after(&self, bin: usize) -> Option<f64> {
        self.boundaries.get(bin).copied()
    }

    pub fn record_split_hit(&mut self, bin: usize) -> Result<u32> {
        let len = self.split_hits.len();
        let slot = self
            .split_hits
            .get_mut(bin)
            .ok_or(Error::IndexOutOfRange { index: bin, len })?;
        *slot += 1;
        Ok(*slot)
    }

    /// Finite bins whose hit count exceeds `t_split`, highest index first.
    pub fn bins_due_for_resize(&self, t_split: u32) -> Vec<usize> {
        (0..self.n_finite_bins())
            .rev()
            .filter(|&b| self.split_hits[b] > t_split)
            .collect()
    }

    /// Divide `bin` at its in-bin median, or shrink it toward the median when the mapper
    /// is already at `max_bins`. Resets the bin's hit counter even when nothing changes.
    pub fn adaptive_resize(
        &mut self,
        bin: usize,
        column: &FeatureColumn<'_>,
        rows: Option<&[u32]>,
        session: &Session,
    ) -> Result<ResizeOutcome> {
        if bin >= self.n_bins() {
            return Err(Error::IndexOutOfRange { index: bin, len: self.n_bins() });
        }
        if Some(bin) == self.missing_bin() {
            return Err(Error::InvalidResizeTarget(bin));
        }
        self.split_hits[bin] = 0;

        let median = self.in_bin_split_point(bin, column, rows, session).ok_or(Error::ResizeNoop(bin))?;
        let outcome = if self.n_bins() < self.max_bins {
            self.boundaries.insert(bin, median);
            self.split_hits.insert(bin + 1, 0);
            ResizeOutcome::Divided { boundary: median }
        } else {
            let lower = (bin > 0).then(|| midpoint(self.boundaries[bin - 1], median));
            let upper = (bin < self.boundaries.len()).then(|| midpoint(median, self.boundaries[bin]));
            let unchanged = lower.map_or(true, |l| l == self.boundaries[bin - 1])
                && upper.map_or(true, |u| u == self.boundaries[bin]);
            if unchanged {
                return Err(Error::ResizeNoop(bin));
            }
            if let Some(l) = lower {
                self.boundaries[bin - 1] = l;
            }
            if let Some(u) = upper {
                self.boundaries[bin] = u;
            }
            ResizeOutcome::Shrunk { lower, upper }
        };
        debug_assert!(self.boundaries.windows(2).all(|w| w[0] < w[1]));
        self.version += 1;
        Ok(outcome)
    }

    /// Median of the raw values in `bin` (mean of the middle pair for even counts), pulled
    /// below the bin's largest value so that both sides are non-empty. `None` when the bin
    /// holds fewer than two distinct values.
    fn in_bin_split_point(
        &self,
        bin: usize,
        column: &FeatureColumn<'_>,
        rows: Option<&[u32]>,
        session: &Session,
    ) -> Option<f64> {
        let in_bin = |i: &u32| {
            let v = column.raw(*i as usize);
            v.is_finite() && self.finite_bin(v) == bin
        };
        let mut idx: Vec<u32> = match rows {
            Some(r) => r.iter().copied().filter(in_bin).collect(),
            None => (0..column.len() as u32).filter(in_bin).collect(),
        };
        idx.sort_unstable_by(|&a, &b| column.raw(a as usize).total_cmp(&column.raw(b as usize)));
        let idx = TrackedVec::from_vec(session, Category::BinCache, idx);
        let value = |k: usize| column.raw(idx[k] as usize);
        let m = idx.len();
        if m < 2 || value(0) == value(m - 1) {
            return None;
        }
        let max = value(m - 1);
        let mut median = if m % 2 == 1 { value(m / 2) } else { value(m / 2 - 1) / 2.0 + value(m / 2) / 2.0 };
        if median >= max {
            let below = (0..m).rev().map(value).find(|&v| v < max).unwrap();
            median = midpoint(below, max);
        }
        Some(median)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinningMode {
    /// One stored `u8` bin index per row.
    Cache,
    /// Nothing stored per row; bins are found by boundary search on read.
    ZeroCopy,
}

#[derive(Debug, Clone)]
pub struct BinnedColumn {
    mode: BinningMode,
    mapper_version: u64,
    cache: Option<TrackedVec<u8>>,
}

pub fn quantize(
    column: &FeatureColumn<'_>,
    mapper: &BinMapper,
    mode: BinningMode,
    session: &Session,
) -> BinnedColumn {
    quantize_as(column, mapper, mode, session, Category::BinCache)
}

pub(crate) fn quantize_as(
    column: &FeatureColumn<'_>,
    mapper: &BinMapper,
    mode: BinningMode,
    session: &Session,
    category: Category,
) -> BinnedColumn {
    let cache = match mode {
        BinningMode::Cache => {
            let bins: Vec<u8> = (0..column.len())
                .map(|i| mapper.bin_or_missing(column.raw(i)) as u8)
                .collect();
            Some(TrackedVec::from_vec(session, category, bins))
        }
        BinningMode::ZeroCopy => None,
    };
    BinnedColumn { mode, mapper_version: mapper.version(), cache }
}

impl BinnedColumn {
    pub fn mode(&self) -> BinningMode {
        self.mode
    }

    pub fn mapper_version(&self) -> u64 {
        self.mapper_version
    }

    pub fn is_current(&self, mapper: &BinMapper) -> bool {
        self.mapper_version == mapper.version()
    }

    pub fn cached(&self) -> Option<&[u8]> {
        self.cache.as_deref()
    }

    /// Bin index of `row`; errors if the mapper has been resized since quantization.
    pub fn bin_at(&self, row: usize, column: &FeatureColumn<'_>, mapper: &BinMapper) -> Result<usize> {
        if !self.is_current(mapper) {
            return Err(Error::StaleBinning { binned: self.mapper_version, mapper: mapper.version() });
        }
        match &self.cache {
            Some(c) => c
                .get(row)
                .map(|&b| b as usize)
                .ok_or(Error::IndexOutOfRange { index: row, len: c.len() }),
            None => {
                let v = column.read_value(row)?;
                Ok(v.map_or(mapper.boundaries.len() + 1, |v| mapper.finite_bin(v)))
            }
        }
    }
}
