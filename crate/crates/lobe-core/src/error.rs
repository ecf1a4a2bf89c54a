//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

/// Errors produced by scene construction, I/O, and partition optimization.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate scene: {0}")]
    DegenerateScene(String),

    #[error("block index out of grid: {0}")]
    InvalidIndex(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("format error: missing required property `{property}`")]
    MissingProperty { property: String },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("unsupported camera model `{0}` (expected PINHOLE or SIMPLE_PINHOLE)")]
    UnsupportedCameraModel(String),

    #[error("images.txt references camera id {0} that is not in cameras.txt")]
    DanglingCameraId(u32),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unknown camera id {0}")]
    UnknownCameraId(u32),

    #[error("invalid cuts: {0}")]
    InvalidCuts(String),

    #[error("kernel matrix ill-conditioned even with jitter {jitter:e}")]
    IllConditioned { jitter: f64 },

    #[error("merge integrity: origin index {0} appears in more than one block (was delta zeroed before pruning?)")]
    MergeIntegrity(i64),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
