use thiserror::Error;

/// Errors raised by learners, stream sources and the evaluation harness.
#[derive(Debug, Error)]
pub enum Error {
    /// The estimator does not implement the requested operation.
    #[error("{estimator} does not support {operation}")]
    Unsupported { estimator: String, operation: &'static str },

    /// A structural precondition was violated (bad pipeline, non-partition, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A value entering the stream was rejected (non-finite number, missing label, ...).
    #[error("invalid value: {0}")]
    Value(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn unsupported(estimator: &str, operation: &'static str) -> Self {
        Error::Unsupported {
            estimator: estimator.to_string(),
            operation,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
