//! Shared error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid input: unknown labels, violated preconditions, bad arguments.
    #[error("input error: {0}")]
    Input(String),
    /// Structural validation failure (cycles, schema violations, bad specs).
    #[error("validation error: {0}")]
    Validation(String),
    /// Sampling or evaluation produced a non-finite value.
    #[error("numeric error at node `{node}`: {message}")]
    Numeric { node: String, message: String },
    /// Requested computation is not supported for this model.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// State space or iteration budget exceeded.
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
