use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the publication library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("ragged row at line {line}: expected {expected} fields, found {found}")]
    RaggedRow { line: u64, expected: usize, found: usize },

    #[error("unknown category {value:?} for attribute {attribute:?}")]
    UnknownCategory { attribute: String, value: String },

    #[error("empty data section")]
    EmptyData,

    #[error("header does not match schema: expected {expected:?}, found {found:?}")]
    HeaderMismatch { expected: Vec<String>, found: Vec<String> },

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("invalid attribute selection: {0}")]
    InvalidAttributes(String),

    #[error("joint domain of {cells} cells exceeds the cap of {cap}")]
    CellCapExceeded { cells: u128, cap: usize },

    #[error("degenerate entropies: every attribute has zero entropy")]
    DegenerateEntropies,

    #[error("cluster {0} has zero importance")]
    ZeroImportance(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("transition matrix is singular")]
    SingularMatrix,

    #[error("zero posterior denominator for output category {0}")]
    ZeroDenominator(usize),

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("category index {index} out of range for domain of size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("at least two attributes are required, found {0}")]
    TooFewAttributes(usize),

    #[error("{count} subsets exceed the enumeration cap of {cap}")]
    SubsetCapExceeded { count: u128, cap: usize },
}

impl Error {
    /// Short machine-readable category used in CLI diagnostics.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv(_) | Error::RaggedRow { .. } | Error::EmptyData => "csv",
            Error::Json(_) => "json",
            Error::UnknownCategory { .. }
            | Error::HeaderMismatch { .. }
            | Error::InvalidSchema(_)
            | Error::SchemaMismatch(_) => "schema",
            Error::InvalidParameter(_) => "parameter",
            Error::InvalidAttributes(_)
            | Error::IndexOutOfRange { .. }
            | Error::TooFewAttributes(_)
            | Error::DomainMismatch(_) => "data",
            Error::CellCapExceeded { .. } | Error::SubsetCapExceeded { .. } => "limit",
            Error::DegenerateEntropies
            | Error::ZeroImportance(_)
            | Error::SingularMatrix
            | Error::ZeroDenominator(_) => "numeric",
        }
    }

    /// Whether the error stems from caller-supplied parameters rather than data.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::InvalidParameter(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
