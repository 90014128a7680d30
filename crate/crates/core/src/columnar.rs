//! Columnar storage over caller-owned buffers plus the memory audit.
//!
//! A [`FeatureColumn`] never owns raw values: it borrows the caller's
//! contiguous buffer and reads element `i` by offset. Everything the library
//! allocates on its own behalf is charged to a [`Session`] through an
//! [`Allocation`] guard, so a [`FootprintReport`] can be produced at any time.
//!
//! Per-row and per-key buffers are audited. Metadata bounded by `max_bins`
//! (bin boundaries, split counters, tree nodes) is not.

use std::collections::HashSet;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
enum RawSlice<'a> {
    F32(&'a [f32]),
    F64(&'a [f64]),
}

/// Read-only view of one caller-provided numeric column.
#[derive(Debug, Clone, Copy)]
pub struct FeatureColumn<'a> {
    data: RawSlice<'a>,
}

impl<'a> FeatureColumn<'a> {
    pub fn from_f64(values: &'a [f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyColumn);
        }
        Ok(Self { data: RawSlice::F64(values) })
    }

    pub fn from_f32(values: &'a [f32]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyColumn);
        }
        Ok(Self { data: RawSlice::F32(values) })
    }

    /// Attach a column from a raw buffer location.
    ///
    /// # Safety
    ///
    /// `ptr` must point to `length` initialized, properly aligned values of
    /// `element_width` bytes each, and the buffer must stay valid and
    /// unmodified for `'a`.
    pub unsafe fn attach_raw(ptr: *const u8, length: usize, element_width: usize) -> Result<Self> {
        if element_width != 4 && element_width != 8 {
            return Err(Error::UnsupportedWidth(element_width));
        }
        if length == 0 {
            return Err(Error::EmptyColumn);
        }
        if ptr.is_null() || (ptr as usize) % element_width != 0 {
            return Err(Error::ShapeMismatch("null or misaligned column buffer".into()));
        }
        let data = if element_width == 8 {
            RawSlice::F64(std::slice::from_raw_parts(ptr as *const f64, length))
        } else {
            RawSlice::F32(std::slice::from_raw_parts(ptr as *const f32, length))
        };
        Ok(Self { data })
    }

    pub fn len(&self) -> usize {
        match self.data {
            RawSlice::F32(s) => s.len(),
            RawSlice::F64(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn element_width(&self) -> usize {
        match self.data {
            RawSlice::F32(_) => 4,
            RawSlice::F64(_) => 8,
        }
    }

    /// Bounds-checked read. `Ok(None)` is the missing marker (any non-finite value).
    pub fn read_value(&self, row: usize) -> Result<Option<f64>> {
        if row >= self.len() {
            return Err(Error::IndexOutOfRange { index: row, len: self.len() });
        }
        let v = self.raw(row);
        Ok(v.is_finite().then_some(v))
    }

    /// The stored value widened to f64, non-finite values included. Panics when out of range.
    #[inline]
    pub fn raw(&self, row: usize) -> f64 {
        match self.data {
            RawSlice::F32(s) => s[row] as f64,
            RawSlice::F64(s) => s[row],
        }
    }

    /// Start address of the borrowed buffer.
    pub fn as_ptr(&self) -> *const u8 {
        match self.data {
            RawSlice::F32(s) => s.as_ptr() as *const u8,
            RawSlice::F64(s) => s.as_ptr() as *const u8,
        }
    }
}

/// Main-table features and labels, all of length `n_rows`.
#[derive(Debug, Clone)]
pub struct Dataset<'a> {
    columns: Vec<FeatureColumn<'a>>,
    feature_names: Vec<String>,
    labels: Option<FeatureColumn<'a>>,
    n_rows: usize,
}

impl<'a> Dataset<'a> {
    pub fn new(
        columns: Vec<FeatureColumn<'a>>,
        feature_names: Vec<String>,
        labels: Option<FeatureColumn<'a>>,
    ) -> Result<Self> {
        if columns.len() != feature_names.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} columns but {} feature names",
                columns.len(),
                feature_names.len()
            )));
        }
        let n_rows = match (columns.first(), &labels) {
            (Some(c), _) => c.len(),
            (None, Some(l)) => l.len(),
            (None, None) => return Err(Error::EmptyDataset),
        };
        for (name, c) in feature_names.iter().zip(&columns) {
            if c.len() != n_rows {
                return Err(Error::ShapeMismatch(format!(
                    "column `{name}` has {} rows, expected {n_rows}",
                    c.len()
                )));
            }
        }
        if let Some(l) = &labels {
            if l.len() != n_rows {
                return Err(Error::ShapeMismatch(format!(
                    "labels have {} rows, expected {n_rows}",
                    l.len()
                )));
            }
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::SchemaError(format!("duplicate feature name `{name}`")));
            }
        }
        Ok(Self { columns, feature_names, labels, n_rows })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[FeatureColumn<'a>] {
        &self.columns
    }

    pub fn column(&self, feature: usize) -> &FeatureColumn<'a> {
        &self.columns[feature]
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn labels(&self) -> Option<&FeatureColumn<'a>> {
        self.labels.as_ref()
    }
}

/// Allocation categories of the footprint audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    RawValueCopies,
    BinCache,
    Histograms,
    MergeStructures,
    /// Per-row training state: gradient pairs, running scores, row partitions.
    Gradients,
}

impl Category {
    const ALL: [Category; 5] = [
        Category::RawValueCopies,
        Category::BinCache,
        Category::Histograms,
        Category::MergeStructures,
        Category::Gradients,
    ];

    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FootprintReport {
    pub raw_value_bytes_copied: u64,
    pub bin_cache_bytes: u64,
    pub histogram_bytes: u64,
    pub merge_structure_bytes: u64,
    pub gradient_bytes: u64,
    pub total_library_bytes: u64,
}

impl FootprintReport {
    fn from_counters(c: &[u64; 5]) -> Self {
        Self {
            raw_value_bytes_copied: c[Category::RawValueCopies.slot()],
            bin_cache_bytes: c[Category::BinCache.slot()],
            histogram_bytes: c[Category::Histograms.slot()],
            merge_structure_bytes: c[Category::MergeStructures.slot()],
            gradient_bytes: c[Category::Gradients.slot()],
            total_library_bytes: c.iter().sum(),
        }
    }

    pub fn get(&self, category: Category) -> u64 {
        match category {
            Category::RawValueCopies => self.raw_value_bytes_copied,
            Category::BinCache => self.bin_cache_bytes,
            Category::Histograms => self.histogram_bytes,
            Category::MergeStructures => self.merge_structure_bytes,
            Category::Gradients => self.gradient_bytes,
        }
    }

    /// `(name, bytes)` pairs in report order, total last.
    pub fn entries(&self) -> [(&'static str, u64); 6] {
        [
            ("raw_value_bytes_copied", self.raw_value_bytes_copied),
            ("bin_cache_bytes", self.bin_cache_bytes),
            ("histogram_bytes", self.histogram_bytes),
            ("merge_structure_bytes", self.merge_structure_bytes),
            ("gradient_bytes", self.gradient_bytes),
            ("total_library_bytes", self.total_library_bytes),
        ]
    }

    pub fn is_consistent(&self) -> bool {
        Category::ALL.iter().map(|c| self.get(*c)).sum::<u64>() == self.total_library_bytes
    }
}

#[derive(Debug, Default)]
struct Counters {
    current: [u64; 5],
    peak: FootprintReport,
}

/// Owner of the footprint counters. Cloning shares the counters.
#[derive(Debug, Clone, Default)]
pub struct Session {
    counters: Arc<Mutex<Counters>>,
}

impl Session {
    pub fn new() -> Self {
        Self::default()
    }

    /// Current byte counts per category.
    pub fn memory_footprint(&self) -> FootprintReport {
        let c = self.counters.lock().unwrap();
        FootprintReport::from_counters(&c.current)
    }

    /// Category breakdown captured when the total was at its maximum.
    pub fn peak_footprint(&self) -> FootprintReport {
        self.counters.lock().unwrap().peak
    }

    /// Charge `bytes` to `category` until the returned guard is dropped.
    pub fn allocate(&self, category: Category, bytes: usize) -> Allocation {
        let bytes = bytes as u64;
        {
            let mut c = self.counters.lock().unwrap();
            c.current[category.slot()] += bytes;
            let now = FootprintReport::from_counters(&c.current);
            if now.total_library_bytes > c.peak.total_library_bytes {
                c.peak = now;
            }
        }
        Allocation { session: self.clone(), category, bytes }
    }

    fn release(&self, category: Category, bytes: u64) {
        let mut c = self.counters.lock().unwrap();
        c.current[category.slot()] -= bytes;
    }
}

/// RAII charge against a [`Session`]; cloning charges again.
#[derive(Debug)]
pub struct Allocation {
    session: Session,
    category: Category,
    bytes: u64,
}

impl Allocation {
    pub fn bytes(&self) -> u64 {
        self.bytes
    }

    pub fn category(&self) -> Category {
        self.category
    }

    pub fn session(&self) -> &Session {
        &self.session
    }
}

impl Clone for Allocation {
    fn clone(&self) -> Self {
        self.session.allocate(self.category, self.bytes as usize)
    }
}

impl Drop for Allocation {
    fn drop(&mut self) {
        self.session.release(self.category, self.bytes);
    }
}

/// A `Vec` whose heap bytes are charged to a session category.
#[derive(Debug, Clone)]
pub struct TrackedVec<T> {
    data: Vec<T>,
    _charge: Allocation,
}

impl<T: Clone> TrackedVec<T> {
    pub fn filled(session: &Session, category: Category, value: T, len: usize) -> Self {
        let charge = session.allocate(category, len * std::mem::size_of::<T>());
        Self { data: vec![value; len], _charge: charge }
    }
}

impl<T> TrackedVec<T> {
    pub fn from_vec(session: &Session, category: Category, data: Vec<T>) -> Self {
        let charge = session.allocate(category, data.len() * std::mem::size_of::<T>());
        Self { data, _charge: charge }
    }
}

impl<T> std::ops::Deref for TrackedVec<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.data
    }
}

impl<T> std::ops::DerefMut for TrackedVec<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
}
