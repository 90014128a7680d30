use crate::binning::{BinMapper, BinnedColumn};
use crate::columnar::{Allocation, Category, FeatureColumn, Session};
use crate::error::{Error, Result};
use crate::tree::GradientPair;

/// Marker for a main-table row whose key has no side-table match.
pub const NO_MATCH: u32 = u32::MAX;

/// Read access to the bin index of every row of one training feature.
///
/// A view either reads a main-table column directly or goes through a join
/// index into a key-granular side-table column. Missing values (and
/// unmatched join keys) land in the slot after the finite bins.
#[derive(Debug, Clone, Copy)]
pub struct FeatureView<'a> {
    column: FeatureColumn<'a>,
    mapper: &'a BinMapper,
    cache: Option<&'a [u8]>,
    ordinals: Option<&'a [u32]>,
    has_missing_slot: bool,
}

impl<'a> FeatureView<'a> {
    pub fn direct(column: FeatureColumn<'a>, mapper: &'a BinMapper, binned: &'a BinnedColumn) -> Result<Self> {
        Self::check(mapper, binned)?;
        Ok(Self {
            column,
            mapper,
            cache: binned.cached(),
            ordinals: None,
            has_missing_slot: mapper.has_missing_bin(),
        })
    }

    /// A virtual column: row `i` reads side row `ordinals[i]`.
    pub fn joined(
        ordinals: &'a [u32],
        side_column: FeatureColumn<'a>,
        mapper: &'a BinMapper,
        binned: &'a BinnedColumn,
        has_unmatched: bool,
    ) -> Result<Self> {
        Self::check(mapper, binned)?;
        Ok(Self {
            column: side_column,
            mapper,
            cache: binned.cached(),
            ordinals: Some(ordinals),
            has_missing_slot: mapper.has_missing_bin() || has_unmatched,
        })
    }

    /// Reserve a missing slot even when the mapper has no missing bin.
    pub fn with_missing_slot(mut self) -> Self {
        self.has_missing_slot = true;
        self
    }

    fn check(mapper: &BinMapper, binned: &BinnedColumn) -> Result<()> {
        if !binned.is_current(mapper) {
            return Err(Error::StaleBinning { binned: binned.mapper_version(), mapper: mapper.version() });
        }
        Ok(())
    }

    pub fn mapper(&self) -> &'a BinMapper {
        self.mapper
    }

    pub fn n_slots(&self) -> usize {
        self.mapper.n_finite_bins() + usize::from(self.has_missing_slot)
    }

    pub fn missing_slot(&self) -> Option<usize> {
        self.has_missing_slot.then(|| self.mapper.n_finite_bins())
    }

    #[inline]
    fn source_bin(&self, source_row: usize) -> usize {
        match self.cache {
            Some(c) => c[source_row] as usize,
            None => self.mapper.bin_or_missing(self.column.raw(source_row)),
        }
    }

    #[inline]
    pub fn bin(&self, row: usize) -> usize {
        match self.ordinals {
            Some(o) => match o[row] {
                NO_MATCH => self.mapper.n_finite_bins(),
                k => self.source_bin(k as usize),
            },
            None => self.source_bin(row),
        }
    }

    /// Raw value seen by `row`, `NaN` for unmatched join keys.
    #[inline]
    pub fn raw(&self, row: usize) -> f64 {
        match self.ordinals {
            Some(o) => match o[row] {
                NO_MATCH => f64::NAN,
                k => self.column.raw(k as usize),
            },
            None => self.column.raw(row),
        }
    }
}

/// Per-bin gradient sums and row counts, stored column-wise (20 bytes per bin).
#[derive(Debug, Clone)]
pub struct Histogram {
    sum_g: Vec<f64>,
    sum_h: Vec<f64>,
    count: Vec<u32>,
    has_missing_slot: bool,
    _charge: Allocation,
}

pub const HISTOGRAM_BIN_BYTES: usize = 2 * std::mem::size_of::<f64>() + std::mem::size_of::<u32>();

impl Histogram {
    pub fn zeros(n_bins: usize, has_missing_slot: bool, session: &Session) -> Self {
        Self {
            sum_g: vec![0.0; n_bins],
            sum_h: vec![0.0; n_bins],
            count: vec![0; n_bins],
            has_missing_slot,
            _charge: session.allocate(Category::Histograms, n_bins * HISTOGRAM_BIN_BYTES),
        }
    }

    pub fn n_bins(&self) -> usize {
        self.count.len()
    }

    pub fn missing_slot(&self) -> Option<usize> {
        self.has_missing_slot.then(|| self.n_bins() - 1)
    }

    pub fn n_finite_bins(&self) -> usize {
        self.n_bins() - usize::from(self.has_missing_slot)
    }

    pub fn bin(&self, b: usize) -> (f64, f64, u32) {
        (self.sum_g[b], self.sum_h[b], self.count[b])
    }

    pub fn sum_g(&self) -> &[f64] {
        &self.sum_g
    }

    pub fn sum_h(&self) -> &[f64] {
        &self.sum_h
    }

    pub fn counts(&self) -> &[u32] {
        &self.count
    }

    pub fn total_count(&self) -> u64 {
        self.count.iter().map(|&c| c as u64).sum()
    }

    #[cfg(test)]
    pub(crate) fn set_bin(&mut self, b: usize, sum_g: f64, sum_h: f64, count: u32) {
        self.sum_g[b] = sum_g;
        self.sum_h[b] = sum_h;
        self.count[b] = count;
    }

    #[inline]
    fn add(&mut self, b: usize, gp: GradientPair) {
        self.sum_g[b] += gp.g;
        self.sum_h[b] += gp.h;
        self.count[b] += 1;
    }

    /// `self -= child`, turning a parent histogram into the sibling of `child`.
    pub fn subtract_in_place(&mut self, child: &Histogram) -> Result<()> {
        if self.n_bins() != child.n_bins() {
            return Err(Error::ShapeMismatch(format!(
                "histograms have {} and {} bins",
                self.n_bins(),
                child.n_bins()
            )));
        }
        for b in 0..self.n_bins() {
            self.sum_g[b] -= child.sum_g[b];
            self.sum_h[b] -= child.sum_h[b];
            self.count[b] -= child.count[b];
        }
        Ok(())
    }
}

/// Accumulate gradient pairs of `rows` into the bins of `view`.
pub fn build_histogram(rows: &[u32], view: &FeatureView<'_>, grads: &[GradientPair], session: &Session) -> Histogram {
    let mut hist = Histogram::zeros(view.n_slots(), view.has_missing_slot, session);
    match (view.ordinals, view.cache) {
        (None, Some(cache)) => {
            for &r in rows {
                let r = r as usize;
                hist.add(cache[r] as usize, grads[r]);
            }
        }
        (None, None) => {
            let mapper = view.mapper;
            for &r in rows {
                let r = r as usize;
                hist.add(mapper.bin_or_missing(view.column.raw(r)), grads[r]);
            }
        }
        (Some(_), _) => {
            for &r in rows {
                let r = r as usize;
                hist.add(view.bin(r), grads[r]);
            }
        }
    }
    hist
}

/// Sibling histogram `parent - child`.
pub fn histogram_subtraction(parent: &Histogram, child: &Histogram) -> Result<Histogram> {
    let mut out = parent.clone();
    out.subtract_in_place(child)?;
    Ok(out)
}
