use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("empty file: {}", .0.display())]
    EmptyFile(PathBuf),

    #[error("missing column: {0}")]
    MissingColumn(String),

    #[error("label not binary: column {column} has {count} distinct values")]
    LabelNotBinary { column: String, count: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty group {0}")]
    EmptyGroup(usize),

    #[error("numeric failure in {block}: {detail}")]
    NumericFailure { block: String, detail: String },

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("unsupported model format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("schema fingerprint mismatch: model {model}, data {data}")]
    FingerprintMismatch { model: String, data: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numeric(block: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::NumericFailure {
            block: block.into(),
            detail: detail.into(),
        }
    }

    /// Process exit code: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => 1,
            Error::NumericFailure { .. } => 3,
            _ => 2,
        }
    }

    /// Stable machine-readable kind tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::MissingFile(_) => "missing_file",
            Error::EmptyFile(_) => "empty_file",
            Error::MissingColumn(_) => "missing_column",
            Error::LabelNotBinary { .. } => "label_not_binary",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::EmptyGroup(_) => "empty_group",
            Error::NumericFailure { .. } => "numeric_failure",
            Error::CorruptModel(_) => "corrupt_model",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::FingerprintMismatch { .. } => "fingerprint_mismatch",
            Error::Csv(_) => "csv",
            Error::Io(_) => "io",
            Error::Config(_) => "config",
        }
    }
}
