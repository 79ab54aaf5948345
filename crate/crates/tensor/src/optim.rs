//! Adam with bias correction.
//!
//! Parameters are immutable tensors, so a step swaps each handle for a new
//! leaf built from the updated buffer. Moment buffers are keyed by slot
//! position: callers must pass the same parameter list, in the same order,
//! on every step (networks expose their parameters in declaration order,
//! which makes that automatic).

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// First and second moment buffers for one parameter slot.
pub type MomentPair<T> = (Vec<T>, Vec<T>);

pub struct Adam<T: Scalar = f32> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    t: u64,
    moments: Vec<MomentPair<T>>,
}

impl<T: Scalar> Adam<T> {
    /// Standard defaults: β1 0.9, β2 0.999, ε 1e-8.
    pub fn new(lr: f64) -> Self {
        Self::with_betas(lr, 0.9, 0.999)
    }

    /// GAN training conventionally lowers β1 to 0.5; the trainers do.
    pub fn with_betas(lr: f64, beta1: f64, beta2: f64) -> Self {
        Adam {
            lr: T::from_f64(lr),
            beta1: T::from_f64(beta1),
            beta2: T::from_f64(beta2),
            eps: T::from_f64(1e-8),
            t: 0,
            moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Applies one update to every parameter and replaces each handle with
    /// a fresh grad-requiring leaf (no gradient attached).
    pub fn step(&mut self, params: &mut [&mut Tensor<T>]) -> Result<()> {
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| (vec![T::zero(); p.numel()], vec![T::zero(); p.numel()]))
                .collect();
        } else if self.moments.len() != params.len() {
            return Err(TensorError::InvalidArgument {
                op: "Adam::step",
                msg: format!(
                    "optimizer tracks {} parameters, got {}",
                    self.moments.len(),
                    params.len()
                ),
            });
        }
        self.t += 1;
        let bc1 = T::one() - self.beta1.powi(self.t as i32);
        let bc2 = T::one() - self.beta2.powi(self.t as i32);
        let one = T::one();
        for (idx, p) in params.iter_mut().enumerate() {
            let grad = p.grad().ok_or(TensorError::GradMissing { index: idx })?;
            if grad.len() != p.numel() {
                return Err(TensorError::InvalidArgument {
                    op: "Adam::step",
                    msg: format!(
                        "parameter {} has {} elements but grad has {}",
                        idx,
                        p.numel(),
                        grad.len()
                    ),
                });
            }
            let (m, v) = &mut self.moments[idx];
            let mut data = p.data().to_vec();
            for j in 0..data.len() {
                let g = grad[j];
                m[j] = self.beta1 * m[j] + (one - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (one - self.beta2) * g * g;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                data[j] = data[j] - self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            **p = Tensor::leaf(data, p.shape().to_vec(), true);
        }
        Ok(())
    }

    /// Moment buffers and step counter, for checkpointing.
    pub fn state(&self) -> (u64, &[MomentPair<T>]) {
        (self.t, &self.moments)
    }

    pub fn load_state(&mut self, t: u64, moments: Vec<MomentPair<T>>) {
        self.t = t;
        self.moments = moments;
    }
}
