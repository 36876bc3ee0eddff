use std::io;

use thiserror::Error;

/// Errors surfaced by the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("could not place base station outdoors after {tries} attempts")]
    Placement { tries: usize },

    #[error("location ({row}, {col}) is inside a building")]
    IndoorLocation { row: usize, col: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("stale forward cache: parameters changed since the forward pass")]
    StaleCache,

    #[error("malformed file: {0}")]
    Format(String),

    #[error("zero-norm reference: {0}")]
    ZeroNorm(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// True for errors caused by diverging numerics rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
