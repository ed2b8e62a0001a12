use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("incomplete bundle: {0}")]
    IncompleteBundle(String),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("config value out of range: {key} = {value} ({expected})")]
    ConfigOutOfRange {
        key: String,
        value: String,
        expected: String,
    },

    #[error("cloud too small: need at least {need} points, have {have}")]
    CloudTooSmall { need: usize, have: usize },

    #[error("empty mask")]
    EmptyMask,

    #[error("embedding dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("zero-length embedding vector")]
    ZeroEmbedding,

    #[error("no instances")]
    NoInstances,

    #[error("degenerate contour: {0}")]
    DegenerateContour(String),

    #[error("no ground truth")]
    NoGroundTruth,

    #[error("fixture error: {0}")]
    Fixture(String),

    #[error("parse error in {path}: {detail}")]
    Parse { path: PathBuf, detail: String },

    #[error("{context}: {source}")]
    IoContext {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn parse(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            detail: detail.into(),
        }
    }

    pub fn io_ctx(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::IoContext {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
