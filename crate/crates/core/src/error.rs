use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("column has no rows")]
    EmptyColumn,
    #[error("unsupported element width {0} (expected 4 or 8)")]
    UnsupportedWidth(usize),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("every value of the column is missing")]
    AllMissing,
    #[error("missing value but the bin mapper has no missing bin")]
    UnexpectedMissing,
    #[error("bin {0} holds fewer than two distinct values")]
    ResizeNoop(usize),
    #[error("bin {0} cannot be resized")]
    InvalidResizeTarget(usize),
    #[error("binned column version {binned} does not match mapper version {mapper}")]
    StaleBinning { binned: u64, mapper: u64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label {0} is not 0 or 1")]
    InvalidLabel(f64),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("non-finite loss at iteration {0}")]
    DivergenceDetected(usize),
    #[error("feature `{0}` not present in the data")]
    SchemaMismatch(String),
    #[error("duplicate key {0}")]
    DuplicateKey(f64),
    #[error("labels contain a single class")]
    DegenerateLabels,
    #[error("cannot split {n_rows} rows into {k} folds")]
    InvalidFoldCount { n_rows: usize, k: usize },
    #[error("invalid configuration: {0}")]
    ConfigError(String),
    #[error("parse error: {0}")]
    ParseError(String),
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("unsupported model format version {0}")]
    VersionError(u64),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Stable variant name, printed by the CLI and mirrored by FFI error codes.
    pub fn name(&self) -> &'static str {
        match self {
            Error::EmptyColumn => "EmptyColumn",
            Error::UnsupportedWidth(_) => "UnsupportedWidth",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::AllMissing => "AllMissing",
            Error::UnexpectedMissing => "UnexpectedMissing",
            Error::ResizeNoop(_) => "ResizeNoop",
            Error::InvalidResizeTarget(_) => "InvalidResizeTarget",
            Error::StaleBinning { .. } => "StaleBinning",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::InvalidLabel(_) => "InvalidLabel",
            Error::EmptyDataset => "EmptyDataset",
            Error::DivergenceDetected(_) => "DivergenceDetected",
            Error::SchemaMismatch(_) => "SchemaMismatch",
            Error::DuplicateKey(_) => "DuplicateKey",
            Error::DegenerateLabels => "DegenerateLabels",
            Error::InvalidFoldCount { .. } => "InvalidFoldCount",
            Error::ConfigError(_) => "ConfigError",
            Error::ParseError(_) => "ParseError",
            Error::SchemaError(_) => "SchemaError",
            Error::VersionError(_) => "VersionError",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
