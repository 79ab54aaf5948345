//! Differentiable operator set.
//!
//! Each op computes its forward value eagerly, then attaches a backward
//! closure over the saved state it needs. Ops executed under `no_grad`,
//! or on inputs that do not require grad, skip the closure entirely.

pub mod conv;
pub mod elementwise;
pub mod matmul;
pub mod norm;
pub mod reduce;
pub mod shape;
