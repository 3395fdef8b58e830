//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the library.
///
/// The variants are grouped by how a batch front-end should treat them:
/// `InvalidArgument`, `UnknownVariable` and `Parse` indicate bad input,
/// `Capability` indicates a sampler/operation was asked to work on a target
/// it does not support, and the rest are runtime failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("matrix is not positive definite: nonpositive pivot at index {pivot}")]
    NotPositiveDefinite { pivot: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown variable '{name}'; valid names: {valid:?}")]
    UnknownVariable { name: String, valid: Vec<String> },

    #[error("capability error: {0}")]
    Capability(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn dim(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            actual,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn capability(msg: impl Into<String>) -> Self {
        Error::Capability(msg.into())
    }
}
