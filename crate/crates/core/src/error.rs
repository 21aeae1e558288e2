use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by tensor construction, layer operations and data handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("latency {latency} at index {index} is not below t_max = {t_max}")]
    InvalidLatency {
        index: usize,
        latency: u32,
        t_max: usize,
    },

    #[error("malformed spike-wave: {0}")]
    MalformedSpikeWave(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("bad IDX file {path}: {message}")]
    Idx { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
