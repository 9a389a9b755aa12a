//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller passed an out-of-contract argument.
    #[error("argument error: {0}")]
    Argument(String),

    /// A file could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Data violates a dataset invariant.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// A numerical routine failed to produce a usable result.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The sampler could not start or make progress.
    #[error("sampler error: {0}")]
    Sampler(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
