use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {primitive} primitive: {reason}")]
    InvalidPrimitive {
        primitive: &'static str,
        reason: String,
    },
    #[error("unknown filter `{name}`; valid names: {}", valid.join(", "))]
    UnknownFilter { name: String, valid: Vec<String> },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("training diverged at step {step}: non-finite `{component}` loss")]
    Divergence {
        step: u64,
        component: &'static str,
        last_checkpoint: Option<PathBuf>,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image codec error on {path}: {source}")]
    Codec {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Torch(#[from] tch::TchError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(primitive: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidPrimitive {
            primitive,
            reason: reason.into(),
        }
    }
}
