use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum EscError {
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("invalid dimension: {0}")]
    Dimension(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("weight vector is not strictly inside the simplex: {0}")]
    OutsideSimplex(String),

    #[error("no exceedance of the VaR estimate in the estimation window")]
    NoExceedance,

    #[error("too few exceedances: need at least {needed}, found {found}")]
    TooFewExceedances { needed: usize, found: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("curves come from different panels or periods")]
    FingerprintMismatch,

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("benchmark model `{0}` is missing from the forecasts")]
    MissingBenchmark(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, EscError>;

impl EscError {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        EscError::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        EscError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
