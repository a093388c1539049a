use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("invalid tiling: {0}")]
    InvalidTiling(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("duplicate slide id `{0}`")]
    DuplicateSlide(String),

    #[error("unknown id `{0}`")]
    UnknownId(String),

    #[error("no score for active record `{0}`")]
    MissingScore(String),

    #[error("training set has no active records")]
    EmptyActiveSet,

    #[error("malformed file {path}: {reason} (at byte offset {offset})")]
    Malformed {
        path: PathBuf,
        offset: usize,
        reason: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
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
