use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: invalid PNM at byte {offset}: {msg}")]
    Pnm {
        path: PathBuf,
        offset: usize,
        msg: String,
    },

    #[error("{path}: {msg}")]
    ImageFormat { path: PathBuf, msg: String },

    #[error("{what}: dimensions {a:?} vs {b:?}")]
    DimensionMismatch {
        what: &'static str,
        a: (usize, usize),
        b: (usize, usize),
    },

    #[error("{0}")]
    Data(String),

    #[error("non-finite {what} at {context}")]
    NonFinite { what: &'static str, context: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Tensor(#[from] docbin_tensor::TensorError),
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        CoreError::Data(msg.into())
    }
}
