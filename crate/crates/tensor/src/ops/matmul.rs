//! Matrix product and the per-image Gram matrix.

use crate::error::{Result, TensorError};
use crate::gemm::{gemm_nn, gemm_nt, transpose};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// a (m×k) · b (k×n) → (m×n).
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, ka) = match a.shape() {
        &[m, k] => (m, k),
        s => {
            return Err(TensorError::BadRank {
                op: "matmul",
                expected: 2,
                shape: s.to_vec(),
            })
        }
    };
    let (kb, n) = match b.shape() {
        &[k, n] => (k, n),
        s => {
            return Err(TensorError::BadRank {
                op: "matmul",
                expected: 2,
                shape: s.to_vec(),
            })
        }
    };
    if ka != kb {
        return Err(TensorError::ShapeMismatch {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let k = ka;
    let mut out = vec![T::zero(); m * n];
    gemm_nn(m, k, n, a.data(), b.data(), &mut out);
    let a_data = a.data_rc();
    let b_data = b.data_rc();
    Ok(Tensor::from_op(
        out,
        vec![m, n],
        vec![a.clone(), b.clone()],
        move || {
            Box::new(move |g: &[T]| {
                // dA = dC·Bᵀ, dB = Aᵀ·dC.
                let mut da = vec![T::zero(); m * k];
                gemm_nt(m, n, k, g, &b_data, &mut da);
                let mut at = vec![T::zero(); m * k];
                transpose(m, k, &a_data, &mut at);
                let mut db = vec![T::zero(); k * n];
                gemm_nn(k, m, n, &at, g, &mut db);
                vec![Some(da), Some(db)]
            })
        },
    ))
}

/// Per-image feature correlation: for x of shape [N,C,H,W], each output
/// item is G = V·Vᵀ / (C·H·W) where V is the [C, H·W] feature matrix.
///
/// The C·H·W normalization keeps loss weights meaningful across layers of
/// different sizes; comparisons of Gram matrices only ever happen between
/// features of identical shape, so the scale choice cancels structurally.
pub fn gram<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4("gram")?;
    let hw = h * w;
    let norm = T::one() / T::from_f64((c * hw) as f64);
    let mut out = vec![T::zero(); n * c * c];
    for i in 0..n {
        let v = &x.data()[i * c * hw..(i + 1) * c * hw];
        let g = &mut out[i * c * c..(i + 1) * c * c];
        gemm_nt(c, hw, c, v, v, g);
        for e in g.iter_mut() {
            *e = *e * norm;
        }
    }
    let x_data = x.data_rc();
    Ok(Tensor::from_op(
        out,
        vec![n, c, c],
        vec![x.clone()],
        move || {
            Box::new(move |g: &[T]| {
                // G = α·V·Vᵀ with α = 1/(C·H·W), so dV = α·(dG + dGᵀ)·V.
                let mut dx = vec![T::zero(); n * c * hw];
                let mut sym = vec![T::zero(); c * c];
                for i in 0..n {
                    let gi = &g[i * c * c..(i + 1) * c * c];
                    for r in 0..c {
                        for s in 0..c {
                            sym[r * c + s] = (gi[r * c + s] + gi[s * c + r]) * norm;
                        }
                    }
                    let v = &x_data[i * c * hw..(i + 1) * c * hw];
                    let dv = &mut dx[i * c * hw..(i + 1) * c * hw];
                    gemm_nn(c, c, hw, &sym, v, dv);
                }
                vec![Some(dx)]
            })
        },
    ))
}
