//! Dense N-D tensors with reverse-mode automatic differentiation.
//!
//! This crate is the numerical substrate for the binarization networks: a
//! row-major f32 tensor (NCHW convention for images) that records the ops
//! applied to it and can replay them in reverse to populate gradients.
//! The op set is exactly what the encoder/decoder/discriminator stacks
//! need: conv2d, transposed conv2d, batch norm, pointwise activations,
//! channel concatenation, matmul, reductions and a guarded log.
//!
//! Storage is `f32` by default; every op is generic over [`Scalar`] so the
//! gradient-check tests can run the same code at `f64`.

mod autograd;
mod error;
mod gemm;
pub mod gradcheck;
mod ops;
mod optim;
mod scalar;
mod tensor;

pub use autograd::{backward, no_grad};
pub use error::{Result, TensorError};
pub use ops::conv::{conv2d, conv_transpose2d};
pub use ops::matmul::{gram, matmul};
pub use ops::norm::{batch_norm, BnStats, Mode};
pub use ops::shape::{concat_channels, slice_channels};
pub use optim::Adam;
pub use scalar::Scalar;
pub use tensor::Tensor;
