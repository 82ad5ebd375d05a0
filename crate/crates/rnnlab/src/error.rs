//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by dataset construction, training, prediction and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad dataset spec, bad train config, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Shape or length mismatch between caller data and model/operation.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Malformed model file, dataset CSV or other persisted artifact.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}
