//! Implicit merging of key-indexed side tables.
//!
//! A side table is binned once at key granularity (`U` rows). Each main-table
//! row reaches its side row through a [`JoinIndex`] of 4-byte ordinals, so a
//! merged feature costs `O(U)` per feature plus one shared `O(N)` index per
//! table, instead of an `N`-row value column per feature.

use std::collections::HashSet;

use crate::binning::{construct_bins, quantize_as, BinMapper, BinnedColumn, BinningMode};
use crate::columnar::{Category, Dataset, FeatureColumn, Session, TrackedVec};
use crate::error::{Error, Result};
use crate::tree::NO_MATCH;

fn key_bits(key: f64) -> u64 {
    // -0.0 and 0.0 are the same key
    if key == 0.0 {
        0
    } else {
        key.to_bits()
    }
}

#[derive(Debug)]
pub struct SideTable<'a> {
    name: String,
    /// (key bits, ordinal) sorted by key bits.
    key_index: TrackedVec<(u64, u32)>,
    columns: Vec<FeatureColumn<'a>>,
    feature_names: Vec<String>,
    mappers: Vec<BinMapper>,
    binned: Vec<BinnedColumn>,
}

/// Register a side table: keys must be unique and finite; features are binned over the `U` keys.
pub fn register_side_table<'a>(
    name: impl Into<String>,
    keys: &FeatureColumn<'_>,
    columns: Vec<FeatureColumn<'a>>,
    feature_names: Vec<String>,
    max_bins: usize,
    session: &Session,
) -> Result<SideTable<'a>> {
    let n_keys = keys.len();
    if columns.len() != feature_names.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} side columns but {} names",
            columns.len(),
            feature_names.len()
        )));
    }
    for (c, n) in columns.iter().zip(&feature_names) {
        if c.len() != n_keys {
            return Err(Error::ShapeMismatch(format!(
                "side column `{n}` has {} rows, expected {n_keys}",
                c.len()
            )));
        }
    }
    let mut entries = Vec::with_capacity(n_keys);
    for i in 0..n_keys {
        let k = keys.raw(i);
        if !k.is_finite() {
            return Err(Error::SchemaError(format!("side key at row {} is not finite", i + 1)));
        }
        entries.push((key_bits(k), i as u32));
    }
    entries.sort_unstable();
    if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateKey(keys.raw(w[1].1 as usize)));
    }
    let key_index = TrackedVec::from_vec(session, Category::MergeStructures, entries);

    let mut mappers = Vec::with_capacity(columns.len());
    let mut binned = Vec::with_capacity(columns.len());
    for c in &columns {
        let m = construct_bins(c, max_bins, session)?;
        binned.push(quantize_as(c, &m, BinningMode::Cache, session, Category::MergeStructures));
        mappers.push(m);
    }
    Ok(SideTable { name: name.into(), key_index, columns, feature_names, mappers, binned })
}

impl<'a> SideTable<'a> {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_keys(&self) -> usize {
        self.key_index.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn column(&self, f: usize) -> &FeatureColumn<'a> {
        &self.columns[f]
    }

    pub fn mapper(&self, f: usize) -> &BinMapper {
        &self.mappers[f]
    }

    pub fn binned(&self, f: usize) -> &BinnedColumn {
        &self.binned[f]
    }

    /// Side row holding `key`, if any.
    pub fn ordinal_of(&self, key: f64) -> Option<u32> {
        if !key.is_finite() {
            return None;
        }
        let bits = key_bits(key);
        self.key_index
            .binary_search_by_key(&bits, |&(k, _)| k)
            .ok()
            .map(|i| self.key_index[i].1)
    }
}

/// Per main-table row, the side row of its key or [`NO_MATCH`].
#[derive(Debug, Clone)]
pub struct JoinIndex {
    ordinals: TrackedVec<u32>,
    n_unmatched: usize,
}

impl JoinIndex {
    pub fn ordinals(&self) -> &[u32] {
        &self.ordinals
    }

    pub fn len(&self) -> usize {
        self.ordinals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordinals.is_empty()
    }

    pub fn n_unmatched(&self) -> usize {
        self.n_unmatched
    }

    pub fn ordinal(&self, row: usize) -> Option<u32> {
        match self.ordinals[row] {
            NO_MATCH => None,
            k => Some(k),
        }
    }
}

pub fn build_join_index(main_keys: &FeatureColumn<'_>, side: &SideTable<'_>, session: &Session) -> Result<JoinIndex> {
    if main_keys.is_empty() {
        return Err(Error::EmptyColumn);
    }
    let mut n_unmatched = 0;
    let ordinals: Vec<u32> = (0..main_keys.len())
        .map(|i| {
            side.ordinal_of(main_keys.raw(i)).unwrap_or_else(|| {
                n_unmatched += 1;
                NO_MATCH
            })
        })
        .collect();
    Ok(JoinIndex { ordinals: TrackedVec::from_vec(session, Category::MergeStructures, ordinals), n_unmatched })
}

/// Expand every side feature to `N` rows: the explicit merge that implicit training avoids.
/// Unmatched rows hold `NaN`. The copies are charged as raw-value bytes.
pub fn materialize_merge(
    main_keys: &FeatureColumn<'_>,
    side: &SideTable<'_>,
    session: &Session,
) -> Result<Vec<TrackedVec<f64>>> {
    if main_keys.is_empty() {
        return Err(Error::EmptyColumn);
    }
    let ordinals: Vec<Option<u32>> = (0..main_keys.len()).map(|i| side.ordinal_of(main_keys.raw(i))).collect();
    Ok(side
        .columns
        .iter()
        .map(|c| {
            let values = ordinals.iter().map(|o| o.map_or(f64::NAN, |k| c.raw(k as usize))).collect();
            TrackedVec::from_vec(session, Category::RawValueCopies, values)
        })
        .collect())
}

/// A side table joined to the main table.
#[derive(Debug, Clone, Copy)]
pub struct Merge<'a> {
    pub side: &'a SideTable<'a>,
    pub join: &'a JoinIndex,
}

#[derive(Debug, Clone, Copy)]
pub enum FeatureSource<'a> {
    Main(FeatureColumn<'a>),
    Merged { side: &'a SideTable<'a>, feature: usize, join: &'a JoinIndex },
}

impl FeatureSource<'_> {
    /// Raw value at main-table `row`, `NaN` for unmatched keys.
    #[inline]
    pub fn value(&self, row: usize) -> f64 {
        match *self {
            FeatureSource::Main(c) => c.raw(row),
            FeatureSource::Merged { side, feature, join } => match join.ordinal(row) {
                Some(k) => side.column(feature).raw(k as usize),
                None => f64::NAN,
            },
        }
    }
}

/// Main-table features followed by the features of every merged side table.
#[derive(Debug, Clone)]
pub struct Frame<'a> {
    dataset: &'a Dataset<'a>,
    merges: Vec<Merge<'a>>,
    rows: Option<&'a [u32]>,
    names: Vec<String>,
}

impl<'a> Frame<'a> {
    pub fn new(dataset: &'a Dataset<'a>) -> Self {
        Self { dataset, merges: Vec::new(), rows: None, names: dataset.feature_names().to_vec() }
    }

    pub fn with_merges(dataset: &'a Dataset<'a>, merges: Vec<Merge<'a>>) -> Result<Self> {
        let mut frame = Self::new(dataset);
        let mut seen: HashSet<String> = frame.names.iter().cloned().collect();
        for m in &merges {
            if m.join.len() != dataset.n_rows() {
                return Err(Error::ShapeMismatch(format!(
                    "join index for `{}` has {} rows, dataset has {}",
                    m.side.name(),
                    m.join.len(),
                    dataset.n_rows()
                )));
            }
            for n in m.side.feature_names() {
                if !seen.insert(n.clone()) {
                    return Err(Error::SchemaError(format!("duplicate feature name `{n}`")));
                }
                frame.names.push(n.clone());
            }
        }
        frame.merges = merges;
        Ok(frame)
    }

    /// Restrict training or evaluation to a subset of main-table rows.
    pub fn with_rows(mut self, rows: &'a [u32]) -> Result<Self> {
        if let Some(&r) = rows.iter().find(|&&r| r as usize >= self.dataset.n_rows()) {
            return Err(Error::IndexOutOfRange { index: r as usize, len: self.dataset.n_rows() });
        }
        self.rows = Some(rows);
        Ok(self)
    }

    pub fn dataset(&self) -> &'a Dataset<'a> {
        self.dataset
    }

    pub fn rows(&self) -> Option<&'a [u32]> {
        self.rows
    }

    /// Number of rows in scope (the selection, or all rows).
    pub fn n_selected(&self) -> usize {
        self.rows.map_or(self.dataset.n_rows(), |r| r.len())
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.names
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn source(&self, feature: usize) -> FeatureSource<'a> {
        let n_main = self.dataset.n_features();
        if feature < n_main {
            return FeatureSource::Main(*self.dataset.column(feature));
        }
        let mut f = feature - n_main;
        for m in &self.merges {
            if f < m.side.n_features() {
                return FeatureSource::Merged { side: m.side, feature: f, join: m.join };
            }
            f -= m.side.n_features();
        }
        panic!("feature {feature} out of range");
    }

    /// Raw value of `feature` at main-table `row`; merged features read through the join.
    pub fn raw_value(&self, feature: usize, row: usize) -> f64 {
        self.source(feature).value(row)
    }

    pub fn sources(&self) -> Vec<FeatureSource<'a>> {
        (0..self.n_features()).map(|f| self.source(f)).collect()
    }
}
