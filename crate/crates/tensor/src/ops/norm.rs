//! Batch normalization over NCHW inputs.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const EPS: f64 = 1e-5;
const MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-channel running statistics. Interior mutability lets a forward pass
/// in train mode fold its batch statistics in while layers stay shareable
/// behind plain references; eval mode never writes.
pub struct BnStats<T: Scalar = f32> {
    mean: RefCell<Vec<T>>,
    var: RefCell<Vec<T>>,
}

impl<T: Scalar> BnStats<T> {
    pub fn new(channels: usize) -> Self {
        BnStats {
            mean: RefCell::new(vec![T::zero(); channels]),
            var: RefCell::new(vec![T::one(); channels]),
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.borrow().len()
    }

    pub fn snapshot(&self) -> (Vec<T>, Vec<T>) {
        (self.mean.borrow().clone(), self.var.borrow().clone())
    }

    pub fn restore(&self, mean: Vec<T>, var: Vec<T>) -> Result<()> {
        if mean.len() != self.channels() || var.len() != self.channels() {
            return Err(TensorError::InvalidArgument {
                op: "BnStats::restore",
                msg: format!(
                    "expected {} channels, got mean {} / var {}",
                    self.channels(),
                    mean.len(),
                    var.len()
                ),
            });
        }
        *self.mean.borrow_mut() = mean;
        *self.var.borrow_mut() = var;
        Ok(())
    }
}

/// Normalizes each channel, then applies the learned affine map.
///
/// Train mode normalizes by batch statistics (biased variance) and updates
/// the running statistics with momentum 0.1 (unbiased variance when the
/// per-channel count exceeds one). Eval mode reads the running statistics
/// and writes nothing, so it is a pure function of input and stats.
pub fn batch_norm<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    stats: &BnStats<T>,
    mode: Mode,
) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.dims4("batch_norm")?;
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(TensorError::ShapeMismatch {
            op: "batch_norm",
            lhs: gamma.shape().to_vec(),
            rhs: vec![c],
        });
    }
    if stats.channels() != c {
        return Err(TensorError::InvalidArgument {
            op: "batch_norm",
            msg: format!("stats track {} channels, input has {}", stats.channels(), c),
        });
    }
    let hw = h * w;
    let m = n * hw;
    if m == 0 {
        return Err(TensorError::InvalidArgument {
            op: "batch_norm",
            msg: "empty batch".to_string(),
        });
    }
    let eps = T::from_f64(EPS);
    let x = input.data();

    let (mean, var) = match mode {
        Mode::Train => {
            let m_t = T::from_f64(m as f64);
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            for ci in 0..c {
                let mut s = T::zero();
                for i in 0..n {
                    let base = (i * c + ci) * hw;
                    for &v in &x[base..base + hw] {
                        s += v;
                    }
                }
                let mu = s / m_t;
                let mut sq = T::zero();
                for i in 0..n {
                    let base = (i * c + ci) * hw;
                    for &v in &x[base..base + hw] {
                        let d = v - mu;
                        sq = d.mul_add(d, sq);
                    }
                }
                mean[ci] = mu;
                var[ci] = sq / m_t;
            }
            let mom = T::from_f64(MOMENTUM);
            let keep = T::one() - mom;
            let mut rm = stats.mean.borrow_mut();
            let mut rv = stats.var.borrow_mut();
            for ci in 0..c {
                let unbiased = if m > 1 {
                    var[ci] * T::from_f64(m as f64 / (m - 1) as f64)
                } else {
                    var[ci]
                };
                rm[ci] = keep * rm[ci] + mom * mean[ci];
                rv[ci] = keep * rv[ci] + mom * unbiased;
            }
            (mean, var)
        }
        Mode::Eval => stats.snapshot(),
    };

    let mut invstd = vec![T::zero(); c];
    for ci in 0..c {
        invstd[ci] = T::one() / (var[ci] + eps).sqrt();
    }

    let mut xhat = vec![T::zero(); input.numel()];
    let mut out = vec![T::zero(); input.numel()];
    for i in 0..n {
        for ci in 0..c {
            let base = (i * c + ci) * hw;
            let (g, b) = (gamma.data()[ci], beta.data()[ci]);
            for j in base..base + hw {
                let xh = (x[j] - mean[ci]) * invstd[ci];
                xhat[j] = xh;
                out[j] = xh.mul_add(g, b);
            }
        }
    }

    let xhat = Rc::new(xhat);
    let invstd = Rc::new(invstd);
    let gamma_data = gamma.data_rc();
    Ok(Tensor::from_op(
        out,
        input.shape().to_vec(),
        vec![input.clone(), gamma.clone(), beta.clone()],
        move || {
            Box::new(move |g: &[T]| {
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for i in 0..n {
                    for ci in 0..c {
                        let base = (i * c + ci) * hw;
                        let mut sg = T::zero();
                        let mut sgx = T::zero();
                        for j in base..base + hw {
                            sg += g[j];
                            sgx = g[j].mul_add(xhat[j], sgx);
                        }
                        dbeta[ci] += sg;
                        dgamma[ci] += sgx;
                    }
                }
                let mut dx = vec![T::zero(); n * c * hw];
                match mode {
                    Mode::Train => {
                        // dx = γ·invstd/m · (m·g − Σg − x̂·Σ(g·x̂)),
                        // the standard whitening backward collapsed to the
                        // three per-channel sums above.
                        let m_t = T::from_f64(m as f64);
                        for i in 0..n {
                            for ci in 0..c {
                                let base = (i * c + ci) * hw;
                                let scale = gamma_data[ci] * invstd[ci] / m_t;
                                for j in base..base + hw {
                                    dx[j] = scale * (m_t * g[j] - dbeta[ci] - xhat[j] * dgamma[ci]);
                                }
                            }
                        }
                    }
                    Mode::Eval => {
                        // Running stats are constants here.
                        for i in 0..n {
                            for ci in 0..c {
                                let base = (i * c + ci) * hw;
                                let scale = gamma_data[ci] * invstd[ci];
                                for j in base..base + hw {
                                    dx[j] = scale * g[j];
                                }
                            }
                        }
                    }
                }
                vec![Some(dx), Some(dgamma), Some(dbeta)]
            })
        },
    ))
}
