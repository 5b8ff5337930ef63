use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("header mismatch: expected column `{expected}` at position {position}, found `{found}`")]
    HeaderMismatch {
        position: usize,
        expected: String,
        found: String,
    },

    #[error("row {row}: expected {expected} columns, found {found}")]
    ColumnCount {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}: cannot parse `{value}` in numerical column `{column}`")]
    ParseNumber {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: unknown label value `{value}` (labels seen: `{positive}`, `{negative}`)")]
    UnknownLabel {
        row: usize,
        value: String,
        positive: String,
        negative: String,
    },

    #[error("label column `{0}` missing from table")]
    LabelColumnMissing(String),

    #[error("every row of `{0}` contains a missing value")]
    AllRowsDropped(String),

    #[error("dimension mismatch: expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("delegation cycle detected starting at voter {0}")]
    Cycle(usize),

    #[error("illegal delegation from {delegator} to {target}: {reason}")]
    IllegalDelegation {
        delegator: usize,
        target: usize,
        reason: &'static str,
    },

    #[error("ensemble invariant violated: {0}")]
    Invariant(String),

    #[error("instance too large for exhaustive enumeration: {0}")]
    TooLarge(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
