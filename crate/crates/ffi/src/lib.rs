//! C ABI over `compact-gbdt`.
//!
//! Objects are opaque heap handles released with their `*_free` function.
//! Every fallible call returns a [`CgStatus`]; the message of the most recent
//! failure on the calling thread is available from [`cg_last_error_message`].
//!
//! Column buffers passed in are borrowed, not copied. They must stay valid and
//! unmodified for as long as any handle built from them is alive.

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use compact_gbdt::binning::BinningMode;
use compact_gbdt::boosting::{train, BoosterConfig, Model, Objective};
use compact_gbdt::columnar::{Dataset, FeatureColumn, FootprintReport, Session};
use compact_gbdt::merge::{build_join_index, register_side_table, Frame, JoinIndex, Merge, SideTable};
use compact_gbdt::persist::{load_model, save_model};
use compact_gbdt::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgStatus {
    Ok = 0,
    EmptyColumn,
    UnsupportedWidth,
    IndexOutOfRange,
    AllMissing,
    UnexpectedMissing,
    ResizeNoop,
    InvalidResizeTarget,
    StaleBinning,
    ShapeMismatch,
    InvalidLabel,
    EmptyDataset,
    DivergenceDetected,
    SchemaMismatch,
    DuplicateKey,
    DegenerateLabels,
    InvalidFoldCount,
    ConfigError,
    ParseError,
    SchemaError,
    VersionError,
    Io,
    /// A required pointer argument was null.
    NullArgument,
    /// A string argument was not valid UTF-8.
    InvalidUtf8,
    /// The library panicked; the handle involved should be considered unusable.
    Panic,
}

impl From<&Error> for CgStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::EmptyColumn => CgStatus::EmptyColumn,
            Error::UnsupportedWidth(_) => CgStatus::UnsupportedWidth,
            Error::IndexOutOfRange { .. } => CgStatus::IndexOutOfRange,
            Error::AllMissing => CgStatus::AllMissing,
            Error::UnexpectedMissing => CgStatus::UnexpectedMissing,
            Error::ResizeNoop(_) => CgStatus::ResizeNoop,
            Error::InvalidResizeTarget(_) => CgStatus::InvalidResizeTarget,
            Error::StaleBinning { .. } => CgStatus::StaleBinning,
            Error::ShapeMismatch(_) => CgStatus::ShapeMismatch,
            Error::InvalidLabel(_) => CgStatus::InvalidLabel,
            Error::EmptyDataset => CgStatus::EmptyDataset,
            Error::DivergenceDetected(_) => CgStatus::DivergenceDetected,
            Error::SchemaMismatch(_) => CgStatus::SchemaMismatch,
            Error::DuplicateKey(_) => CgStatus::DuplicateKey,
            Error::DegenerateLabels => CgStatus::DegenerateLabels,
            Error::InvalidFoldCount { .. } => CgStatus::InvalidFoldCount,
            Error::ConfigError(_) => CgStatus::ConfigError,
            Error::ParseError(_) => CgStatus::ParseError,
            Error::SchemaError(_) => CgStatus::SchemaError,
            Error::VersionError(_) => CgStatus::VersionError,
            Error::Io(_) => CgStatus::Io,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

enum Failure {
    Lib(Error),
    Null(&'static str),
    Utf8,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type FfiResult<T = ()> = Result<T, Failure>;

/// Run `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> FfiResult) -> CgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error(String::new());
            CgStatus::Ok
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(format!("{}: {e}", e.name()));
            CgStatus::from(&e)
        }
        Ok(Err(Failure::Null(arg))) => {
            set_last_error(format!("null argument `{arg}`"));
            CgStatus::NullArgument
        }
        Ok(Err(Failure::Utf8)) => {
            set_last_error("string argument is not valid UTF-8".into());
            CgStatus::InvalidUtf8
        }
        Err(_) => {
            set_last_error("internal panic".into());
            CgStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, arg: &'static str) -> FfiResult<&'a T> {
    p.as_ref().ok_or(Failure::Null(arg))
}

unsafe fn deref_mut<'a, T>(p: *mut T, arg: &'static str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or(Failure::Null(arg))
}

unsafe fn string(p: *const c_char, arg: &'static str) -> FfiResult<String> {
    if p.is_null() {
        return Err(Failure::Null(arg));
    }
    CStr::from_ptr(p).to_str().map(str::to_owned).map_err(|_| Failure::Utf8)
}

unsafe fn column(data: *const c_void, n_rows: usize, width: usize) -> FfiResult<FeatureColumn<'static>> {
    Ok(FeatureColumn::attach_raw(data as *const u8, n_rows, width)?)
}

unsafe fn out_ptr<T>(out: *mut *mut T, value: T) -> FfiResult {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Text of the most recent failure on this thread; empty after a success.
/// The pointer stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn cg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Owner of the memory-footprint counters.
pub struct CgSession(Session);

#[no_mangle]
pub extern "C" fn cg_session_new() -> *mut CgSession {
    Box::into_raw(Box::new(CgSession(Session::new())))
}

/// # Safety
/// `session` must come from [`cg_session_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cg_session_free(session: *mut CgSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Byte counts per allocation category.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CgFootprint {
    pub raw_value_bytes_copied: u64,
    pub bin_cache_bytes: u64,
    pub histogram_bytes: u64,
    pub merge_structure_bytes: u64,
    pub gradient_bytes: u64,
    pub total_library_bytes: u64,
}

impl From<FootprintReport> for CgFootprint {
    fn from(r: FootprintReport) -> Self {
        Self {
            raw_value_bytes_copied: r.raw_value_bytes_copied,
            bin_cache_bytes: r.bin_cache_bytes,
            histogram_bytes: r.histogram_bytes,
            merge_structure_bytes: r.merge_structure_bytes,
            gradient_bytes: r.gradient_bytes,
            total_library_bytes: r.total_library_bytes,
        }
    }
}

/// Current footprint, or the breakdown at peak when `peak` is true.
///
/// # Safety
/// `session` must be a live session handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cg_session_footprint(session: *const CgSession, peak: bool, out: *mut CgFootprint) -> CgStatus {
    guard(|| {
        let s = &deref(session, "session")?.0;
        let out = deref_mut(out, "out")?;
        *out = if peak { s.peak_footprint() } else { s.memory_footprint() }.into();
        Ok(())
    })
}

/// A side table keyed by a unique numeric key, joined to datasets by key.
pub struct CgSideTable(Arc<SideTable<'static>>);

/// Register a side table from `n_features` borrowed columns of `n_keys` values each.
///
/// # Safety
/// `keys` and each `columns[i]` must point to `n_keys` aligned values of `width`
/// bytes that outlive the handle; `names` must hold `n_features` C strings.
#[no_mangle]
pub unsafe extern "C" fn cg_side_table_new(
    session: *const CgSession,
    name: *const c_char,
    keys: *const c_void,
    n_keys: usize,
    columns: *const *const c_void,
    names: *const *const c_char,
    n_features: usize,
    width: usize,
    max_bins: usize,
    out: *mut *mut CgSideTable,
) -> CgStatus {
    guard(|| {
        let s = &deref(session, "session")?.0;
        let name = string(name, "name")?;
        let keys = column(keys, n_keys, width)?;
        if n_features > 0 && (columns.is_null() || names.is_null()) {
            return Err(Failure::Null("columns/names"));
        }
        let mut cols = Vec::with_capacity(n_features);
        let mut feature_names = Vec::with_capacity(n_features);
        for i in 0..n_features {
            cols.push(column(*columns.add(i), n_keys, width)?);
            feature_names.push(string(*names.add(i), "names")?);
        }
        let table = register_side_table(&name, &keys, cols, feature_names, max_bins, s)?;
        out_ptr(out, CgSideTable(Arc::new(table)))
    })
}

/// # Safety
/// `table` must come from [`cg_side_table_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cg_side_table_free(table: *mut CgSideTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Borrowed feature columns, optional labels and joined side tables.
pub struct CgDataset {
    columns: Vec<FeatureColumn<'static>>,
    names: Vec<String>,
    labels: Option<FeatureColumn<'static>>,
    merges: Vec<(Arc<SideTable<'static>>, JoinIndex)>,
}

impl CgDataset {
    fn with_frame<T>(&self, f: impl FnOnce(&Frame<'_>) -> compact_gbdt::Result<T>) -> compact_gbdt::Result<T> {
        let ds = Dataset::new(self.columns.clone(), self.names.clone(), self.labels)?;
        let merges = self.merges.iter().map(|(side, join)| Merge { side: &**side, join }).collect();
        let frame = Frame::with_merges(&ds, merges)?;
        f(&frame)
    }

    fn n_rows(&self) -> Option<usize> {
        self.columns.first().or(self.labels.as_ref()).map(FeatureColumn::len)
    }
}

#[no_mangle]
pub extern "C" fn cg_dataset_new() -> *mut CgDataset {
    Box::into_raw(Box::new(CgDataset { columns: Vec::new(), names: Vec::new(), labels: None, merges: Vec::new() }))
}

/// # Safety
/// `dataset` must come from [`cg_dataset_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cg_dataset_free(dataset: *mut CgDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

fn check_rows(ds: &CgDataset, n_rows: usize) -> FfiResult {
    match ds.n_rows() {
        Some(n) if n != n_rows => {
            Err(Error::ShapeMismatch(format!("column has {n_rows} rows, dataset has {n}")).into())
        }
        _ => Ok(()),
    }
}

/// Attach a feature column of `n_rows` values of `width` (4 or 8) bytes.
///
/// # Safety
/// `data` must point to `n_rows` aligned values that outlive the dataset.
#[no_mangle]
pub unsafe extern "C" fn cg_dataset_add_column(
    dataset: *mut CgDataset,
    name: *const c_char,
    data: *const c_void,
    n_rows: usize,
    width: usize,
) -> CgStatus {
    guard(|| {
        let ds = deref_mut(dataset, "dataset")?;
        let name = string(name, "name")?;
        let col = column(data, n_rows, width)?;
        check_rows(ds, n_rows)?;
        if ds.names.contains(&name) {
            return Err(Error::SchemaError(format!("duplicate feature name `{name}`")).into());
        }
        ds.columns.push(col);
        ds.names.push(name);
        Ok(())
    })
}

/// # Safety
/// As for [`cg_dataset_add_column`].
#[no_mangle]
pub unsafe extern "C" fn cg_dataset_set_labels(
    dataset: *mut CgDataset,
    data: *const c_void,
    n_rows: usize,
    width: usize,
) -> CgStatus {
    guard(|| {
        let ds = deref_mut(dataset, "dataset")?;
        let col = column(data, n_rows, width)?;
        check_rows(ds, n_rows)?;
        ds.labels = Some(col);
        Ok(())
    })
}

/// Join `table` to the dataset through a per-row key column; rows whose key
/// has no side row see missing values.
///
/// # Safety
/// `keys` must point to `n_rows` aligned values; the handles must be live.
#[no_mangle]
pub unsafe extern "C" fn cg_dataset_add_merge(
    dataset: *mut CgDataset,
    session: *const CgSession,
    table: *const CgSideTable,
    keys: *const c_void,
    n_rows: usize,
    width: usize,
) -> CgStatus {
    guard(|| {
        let ds = deref_mut(dataset, "dataset")?;
        let s = &deref(session, "session")?.0;
        let side = Arc::clone(&deref(table, "table")?.0);
        let keys = column(keys, n_rows, width)?;
        check_rows(ds, n_rows)?;
        let join = build_join_index(&keys, &side, s)?;
        ds.merges.push((side, join));
        Ok(())
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgObjective {
    Mse = 0,
    Logloss = 1,
}

/// Training parameters. Start from [`cg_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgConfig {
    pub num_trees: usize,
    pub learning_rate: f64,
    pub max_leaves: usize,
    pub max_bins: usize,
    pub min_data_in_leaf: usize,
    pub min_split_gain: f64,
    pub t_split: u32,
    pub adaptive_bins: bool,
    pub objective: CgObjective,
    pub seed: u64,
    /// 0 disables early stopping.
    pub early_stopping_rounds: usize,
    /// Store one bin index per row instead of searching boundaries on read.
    pub bin_cache: bool,
}

impl From<&CgConfig> for BoosterConfig {
    fn from(c: &CgConfig) -> Self {
        BoosterConfig {
            num_trees: c.num_trees,
            learning_rate: c.learning_rate,
            max_leaves: c.max_leaves,
            max_bins: c.max_bins,
            min_data_in_leaf: c.min_data_in_leaf,
            min_split_gain: c.min_split_gain,
            t_split: c.t_split,
            adaptive_bins: c.adaptive_bins,
            objective: match c.objective {
                CgObjective::Mse => Objective::Mse,
                CgObjective::Logloss => Objective::Logloss,
            },
            seed: c.seed,
            early_stopping_rounds: (c.early_stopping_rounds > 0).then_some(c.early_stopping_rounds),
            binning_mode: if c.bin_cache { BinningMode::Cache } else { BinningMode::ZeroCopy },
        }
    }
}

#[no_mangle]
pub extern "C" fn cg_config_default() -> CgConfig {
    let d = BoosterConfig::default();
    CgConfig {
        num_trees: d.num_trees,
        learning_rate: d.learning_rate,
        max_leaves: d.max_leaves,
        max_bins: d.max_bins,
        min_data_in_leaf: d.min_data_in_leaf,
        min_split_gain: d.min_split_gain,
        t_split: d.t_split,
        adaptive_bins: d.adaptive_bins,
        objective: CgObjective::Mse,
        seed: d.seed,
        early_stopping_rounds: 0,
        bin_cache: d.binning_mode == BinningMode::Cache,
    }
}

/// A trained model.
pub struct CgModel(Model);

/// Train on `train_set`, optionally monitoring `valid_set` (may be null).
///
/// # Safety
/// All non-null pointers must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cg_train(
    session: *const CgSession,
    config: *const CgConfig,
    train_set: *const CgDataset,
    valid_set: *const CgDataset,
    out: *mut *mut CgModel,
) -> CgStatus {
    guard(|| {
        let s = &deref(session, "session")?.0;
        let config = BoosterConfig::from(deref(config, "config")?);
        let train_set = deref(train_set, "train_set")?;
        let valid_set = valid_set.as_ref();
        let model = train_set.with_frame(|tf| match valid_set {
            Some(v) => v.with_frame(|vf| train(&config, tf, Some(vf), s)),
            None => train(&config, tf, None, s),
        })?;
        out_ptr(out, CgModel(model))
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cg_model_free(model: *mut CgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of trees in the model, 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn cg_model_num_trees(model: *const CgModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.trees.len())
}

/// Write one raw score per dataset row into `out` (length `out_len`).
/// With `probability` set, logistic models write probabilities instead.
///
/// # Safety
/// `out` must be writable for `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cg_model_predict(
    model: *const CgModel,
    dataset: *const CgDataset,
    probability: bool,
    out: *mut f64,
    out_len: usize,
) -> CgStatus {
    guard(|| {
        let m = &deref(model, "model")?.0;
        let ds = deref(dataset, "dataset")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let scores = ds.with_frame(|f| if probability { m.predict_proba(f) } else { m.predict(f) })?;
        if scores.len() != out_len {
            return Err(Error::ShapeMismatch(format!("{} predictions, buffer holds {out_len}", scores.len())).into());
        }
        std::slice::from_raw_parts_mut(out, out_len).copy_from_slice(&scores);
        Ok(())
    })
}

/// # Safety
/// `model` must be live and `path` a NUL-terminated UTF-8 path.
#[no_mangle]
pub unsafe extern "C" fn cg_model_save(model: *const CgModel, path: *const c_char) -> CgStatus {
    guard(|| {
        let m = &deref(model, "model")?.0;
        let path = string(path, "path")?;
        Ok(save_model(m, Path::new(&path))?)
    })
}

/// # Safety
/// `path` must be a NUL-terminated UTF-8 path and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cg_model_load(path: *const c_char, out: *mut *mut CgModel) -> CgStatus {
    guard(|| {
        let path = string(path, "path")?;
        let model = load_model(Path::new(&path))?;
        out_ptr(out, CgModel(model))
    })
}
