use std::path::PathBuf;
use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes are inconsistent with the requested operation.
    #[error("shape error: {0}")]
    Shape(String),

    /// An operation produced a non-finite value (NaN or infinity).
    #[error("numerics error: {0}")]
    Numerics(String),

    /// Invalid configuration (bad hyperparameters, missing inputs, ...).
    #[error("config error: {0}")]
    Config(String),

    /// Checkpoint file is malformed or does not match the model architecture.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Dataset-level problem (missing ground truth, degenerate mask, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A file on disk has contents outside the documented encoding.
    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn numerics(msg: impl Into<String>) -> Self {
        Error::Numerics(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn checkpoint(msg: impl Into<String>) -> Self {
        Error::Checkpoint(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
