//! Channel-axis concatenation and slicing for NCHW tensors.

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Stacks b's channels after a's. N, H, W must agree.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (na, ca, ha, wa) = a.dims4("concat_channels")?;
    let (nb, cb, hb, wb) = b.dims4("concat_channels")?;
    if na != nb || ha != hb || wa != wb {
        return Err(TensorError::ShapeMismatch {
            op: "concat_channels",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let (n, h, w) = (na, ha, wa);
    let hw = h * w;
    let mut out = Vec::with_capacity(n * (ca + cb) * hw);
    for i in 0..n {
        out.extend_from_slice(&a.data()[i * ca * hw..(i + 1) * ca * hw]);
        out.extend_from_slice(&b.data()[i * cb * hw..(i + 1) * cb * hw]);
    }
    Ok(Tensor::from_op(
        out,
        vec![n, ca + cb, h, w],
        vec![a.clone(), b.clone()],
        move || {
            Box::new(move |g: &[T]| {
                let mut da = Vec::with_capacity(n * ca * hw);
                let mut db = Vec::with_capacity(n * cb * hw);
                let item = (ca + cb) * hw;
                for i in 0..n {
                    let gi = &g[i * item..(i + 1) * item];
                    da.extend_from_slice(&gi[..ca * hw]);
                    db.extend_from_slice(&gi[ca * hw..]);
                }
                vec![Some(da), Some(db)]
            })
        },
    ))
}

/// Extracts channels [start, end) of an NCHW tensor. Backward scatters the
/// gradient back into a zero buffer of the input shape.
pub fn slice_channels<T: Scalar>(x: &Tensor<T>, start: usize, end: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4("slice_channels")?;
    if start >= end || end > c {
        return Err(TensorError::InvalidArgument {
            op: "slice_channels",
            msg: format!("range {}..{} out of {} channels", start, end, c),
        });
    }
    let hw = h * w;
    let cs = end - start;
    let mut out = Vec::with_capacity(n * cs * hw);
    for i in 0..n {
        let base = i * c * hw;
        out.extend_from_slice(&x.data()[base + start * hw..base + end * hw]);
    }
    Ok(Tensor::from_op(
        out,
        vec![n, cs, h, w],
        vec![x.clone()],
        move || {
            Box::new(move |g: &[T]| {
                let mut dx = vec![T::zero(); n * c * hw];
                for i in 0..n {
                    let src = &g[i * cs * hw..(i + 1) * cs * hw];
                    let base = i * c * hw + start * hw;
                    dx[base..base + cs * hw].copy_from_slice(src);
                }
                vec![Some(dx)]
            })
        },
    ))
}
