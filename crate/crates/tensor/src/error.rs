use thiserror::Error;

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op} expects a {expected}-d tensor, got shape {shape:?}")]
    BadRank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },

    #[error("invalid argument to {op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("backward requires a scalar loss, got {numel} elements of shape {shape:?}")]
    NonScalarLoss { numel: usize, shape: Vec<usize> },

    #[error("backward called twice without clearing gradients (tensor id {id})")]
    GradAlreadyPresent { id: u64 },

    #[error("parameter {index} has no gradient; run backward before the optimizer step")]
    GradMissing { index: usize },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
}
