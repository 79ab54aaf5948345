//! Convolution and transposed convolution via im2col + GEMM.
//!
//! Both directions of both ops reduce to the same two primitives: `im2col`
//! gathers sliding windows into a matrix, `col2im` scatter-adds a matrix
//! back into an image. conv2d forward pairs im2col with a GEMM; its input
//! gradient pairs a GEMM with col2im. conv_transpose2d is exactly the
//! mirror image, which is what makes the adjoint identity hold to within
//! rounding rather than approximately.
//!
//! Backward passes recompute im2col instead of saving the column matrix;
//! the columns are k² times the activation size and dominate memory if
//! kept.

use crate::error::{Result, TensorError};
use crate::gemm::{gemm_nn, gemm_nt, transpose};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Number of sliding-window placements along one axis.
fn conv_extent(size: usize, k: usize, stride: usize, pad: usize) -> usize {
    (size + 2 * pad - k) / stride + 1
}

/// Gathers windows of `im` ([c,h,w], row-major) into `cols`
/// ([c·k·k, ho·wo]): cols[(ci·k+ki)·k+kj][oh·wo+ow] = im[ci, oh·s+ki−p, ow·s+kj−p],
/// zero outside free bounds.
#[allow(clippy::too_many_arguments)] // the window geometry is the signature
fn im2col<T: Scalar>(
    im: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    cols: &mut [T],
) {
    debug_assert_eq!(im.len(), c * h * w);
    debug_assert_eq!(cols.len(), c * k * k * ho * wo);
    for ci in 0..c {
        let plane = &im[ci * h * w..(ci + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = ((ci * k + ki) * k + kj) * (ho * wo);
                for oh in 0..ho {
                    let ih = (oh * stride + ki) as isize - pad as isize;
                    let dst = &mut cols[row + oh * wo..row + (oh + 1) * wo];
                    if ih < 0 || ih >= h as isize {
                        for v in dst.iter_mut() {
                            *v = T::zero();
                        }
                        continue;
                    }
                    let src = &plane[ih as usize * w..(ih as usize + 1) * w];
                    for (ow, v) in dst.iter_mut().enumerate() {
                        let iw = (ow * stride + kj) as isize - pad as isize;
                        *v = if iw < 0 || iw >= w as isize {
                            T::zero()
                        } else {
                            src[iw as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of `im2col`: scatter-adds `cols` back into `im` (accumulates,
/// caller zeroes the buffer when needed).
#[allow(clippy::too_many_arguments)]
fn col2im<T: Scalar>(
    cols: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    im: &mut [T],
) {
    debug_assert_eq!(im.len(), c * h * w);
    debug_assert_eq!(cols.len(), c * k * k * ho * wo);
    for ci in 0..c {
        let plane = &mut im[ci * h * w..(ci + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = ((ci * k + ki) * k + kj) * (ho * wo);
                for oh in 0..ho {
                    let ih = (oh * stride + ki) as isize - pad as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[ih as usize * w..(ih as usize + 1) * w];
                    let src = &cols[row + oh * wo..row + (oh + 1) * wo];
                    for (ow, &v) in src.iter().enumerate() {
                        let iw = (ow * stride + kj) as isize - pad as isize;
                        if iw >= 0 && iw < w as isize {
                            dst[iw as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

fn check_bias<T: Scalar>(op: &'static str, bias: Option<&Tensor<T>>, cout: usize) -> Result<()> {
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: b.shape().to_vec(),
                rhs: vec![cout],
            });
        }
    }
    Ok(())
}

/// 2D convolution: input [N,Cin,H,W], weight [Cout,Cin,k,k], bias [Cout].
/// Output is [N,Cout,H',W'] with H' = (H + 2·padding − k)/stride + 1.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let (n, cin, h, w) = input.dims4("conv2d")?;
    let (cout, wcin, k, k2) = weight.dims4("conv2d")?;
    if wcin != cin || k != k2 {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            lhs: input.shape().to_vec(),
            rhs: weight.shape().to_vec(),
        });
    }
    check_bias("conv2d", bias, cout)?;
    if stride < 1 {
        return Err(TensorError::InvalidArgument {
            op: "conv2d",
            msg: "stride must be at least 1".to_string(),
        });
    }
    if h + 2 * padding < k || w + 2 * padding < k {
        return Err(TensorError::InvalidArgument {
            op: "conv2d",
            msg: format!(
                "kernel {} exceeds padded input {}x{}",
                k,
                h + 2 * padding,
                w + 2 * padding
            ),
        });
    }
    let ho = conv_extent(h, k, stride, padding);
    let wo = conv_extent(w, k, stride, padding);
    let ckk = cin * k * k;
    let howo = ho * wo;

    let mut out = vec![T::zero(); n * cout * howo];
    let mut cols = vec![T::zero(); ckk * howo];
    for i in 0..n {
        im2col(
            &input.data()[i * cin * h * w..(i + 1) * cin * h * w],
            cin,
            h,
            w,
            k,
            stride,
            padding,
            ho,
            wo,
            &mut cols,
        );
        let out_i = &mut out[i * cout * howo..(i + 1) * cout * howo];
        gemm_nn(cout, ckk, howo, weight.data(), &cols, out_i);
        if let Some(b) = bias {
            for co in 0..cout {
                let bv = b.data()[co];
                for v in &mut out_i[co * howo..(co + 1) * howo] {
                    *v += bv;
                }
            }
        }
    }

    let x_data = input.data_rc();
    let w_data = weight.data_rc();
    let mut parents = vec![input.clone(), weight.clone()];
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    let has_bias = bias.is_some();
    Ok(Tensor::from_op(
        out,
        vec![n, cout, ho, wo],
        parents,
        move || {
            Box::new(move |g: &[T]| {
                let mut dx = vec![T::zero(); n * cin * h * w];
                let mut dw = vec![T::zero(); cout * ckk];
                let mut db = if has_bias {
                    Some(vec![T::zero(); cout])
                } else {
                    None
                };
                let mut wt = vec![T::zero(); ckk * cout];
                transpose(cout, ckk, &w_data, &mut wt);
                let mut cols = vec![T::zero(); ckk * howo];
                let mut colsg = vec![T::zero(); ckk * howo];
                for i in 0..n {
                    let g_i = &g[i * cout * howo..(i + 1) * cout * howo];
                    im2col(
                        &x_data[i * cin * h * w..(i + 1) * cin * h * w],
                        cin,
                        h,
                        w,
                        k,
                        stride,
                        padding,
                        ho,
                        wo,
                        &mut cols,
                    );
                    gemm_nt(cout, howo, ckk, g_i, &cols, &mut dw);
                    for v in colsg.iter_mut() {
                        *v = T::zero();
                    }
                    gemm_nn(ckk, cout, howo, &wt, g_i, &mut colsg);
                    col2im(
                        &colsg,
                        cin,
                        h,
                        w,
                        k,
                        stride,
                        padding,
                        ho,
                        wo,
                        &mut dx[i * cin * h * w..(i + 1) * cin * h * w],
                    );
                    if let Some(db) = db.as_mut() {
                        for co in 0..cout {
                            let mut s = T::zero();
                            for &v in &g_i[co * howo..(co + 1) * howo] {
                                s += v;
                            }
                            db[co] += s;
                        }
                    }
                }
                let mut grads = vec![Some(dx), Some(dw)];
                if let Some(db) = db {
                    grads.push(Some(db));
                }
                grads
            })
        },
    ))
}

/// Transposed 2D convolution: input [N,Cin,H,W], weight [Cin,Cout,k,k],
/// bias [Cout]. Output is [N,Cout,H',W'] with
/// H' = (H−1)·stride − 2·padding + k + output_padding.
///
/// `output_padding` grows the output on the bottom/right without receiving
/// any kernel contributions there, which is required for stride-2 blocks
/// to exactly double odd bookkeeping chains (5×5, stride 2, padding 2,
/// output_padding 1 maps H to 2H). The adjoint identity against conv2d
/// holds for output_padding 0.
pub fn conv_transpose2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Result<Tensor<T>> {
    let (n, cin, h, w) = input.dims4("conv_transpose2d")?;
    let (wcin, cout, k, k2) = weight.dims4("conv_transpose2d")?;
    if wcin != cin || k != k2 {
        return Err(TensorError::ShapeMismatch {
            op: "conv_transpose2d",
            lhs: input.shape().to_vec(),
            rhs: weight.shape().to_vec(),
        });
    }
    check_bias("conv_transpose2d", bias, cout)?;
    if stride < 1 {
        return Err(TensorError::InvalidArgument {
            op: "conv_transpose2d",
            msg: "stride must be at least 1".to_string(),
        });
    }
    if output_padding >= stride {
        return Err(TensorError::InvalidArgument {
            op: "conv_transpose2d",
            msg: format!(
                "output_padding {} must be smaller than stride {}",
                output_padding, stride
            ),
        });
    }
    let ho_signed = (h as isize - 1) * stride as isize - 2 * padding as isize
        + k as isize
        + output_padding as isize;
    let wo_signed = (w as isize - 1) * stride as isize - 2 * padding as isize
        + k as isize
        + output_padding as isize;
    if ho_signed < 1 || wo_signed < 1 {
        return Err(TensorError::InvalidArgument {
            op: "conv_transpose2d",
            msg: format!("output extent {}x{} is empty", ho_signed, wo_signed),
        });
    }
    let (ho, wo) = (ho_signed as usize, wo_signed as usize);
    let ckk = cout * k * k;
    let hw = h * w;

    // Forward is the adjoint of a conv2d that maps [Cout,ho,wo] to
    // [Cin,h,w]: lift the input through Wᵀ, then scatter with col2im.
    let mut out = vec![T::zero(); n * cout * ho * wo];
    let mut wt = vec![T::zero(); ckk * cin];
    transpose(cin, ckk, weight.data(), &mut wt);
    let mut cols = vec![T::zero(); ckk * hw];
    for i in 0..n {
        let x_i = &input.data()[i * cin * hw..(i + 1) * cin * hw];
        for v in cols.iter_mut() {
            *v = T::zero();
        }
        gemm_nn(ckk, cin, hw, &wt, x_i, &mut cols);
        let out_i = &mut out[i * cout * ho * wo..(i + 1) * cout * ho * wo];
        col2im(&cols, cout, ho, wo, k, stride, padding, h, w, out_i);
        if let Some(b) = bias {
            for co in 0..cout {
                let bv = b.data()[co];
                for v in &mut out_i[co * ho * wo..(co + 1) * ho * wo] {
                    *v += bv;
                }
            }
        }
    }

    let x_data = input.data_rc();
    let w_data = weight.data_rc();
    let mut parents = vec![input.clone(), weight.clone()];
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    let has_bias = bias.is_some();
    Ok(Tensor::from_op(
        out,
        vec![n, cout, ho, wo],
        parents,
        move || {
            Box::new(move |g: &[T]| {
                // Input gradient is a plain conv2d of the output gradient
                // with the same kernel; weight gradient correlates the
                // input with the gathered output-gradient windows.
                let mut dx = vec![T::zero(); n * cin * hw];
                let mut dw = vec![T::zero(); cin * ckk];
                let mut db = if has_bias {
                    Some(vec![T::zero(); cout])
                } else {
                    None
                };
                let mut colsg = vec![T::zero(); ckk * hw];
                for i in 0..n {
                    let g_i = &g[i * cout * ho * wo..(i + 1) * cout * ho * wo];
                    im2col(g_i, cout, ho, wo, k, stride, padding, h, w, &mut colsg);
                    gemm_nn(
                        cin,
                        ckk,
                        hw,
                        &w_data,
                        &colsg,
                        &mut dx[i * cin * hw..(i + 1) * cin * hw],
                    );
                    let x_i = &x_data[i * cin * hw..(i + 1) * cin * hw];
                    gemm_nt(cin, hw, ckk, x_i, &colsg, &mut dw);
                    if let Some(db) = db.as_mut() {
                        for co in 0..cout {
                            let mut s = T::zero();
                            for &v in &g_i[co * ho * wo..(co + 1) * ho * wo] {
                                s += v;
                            }
                            db[co] += s;
                        }
                    }
                }
                let mut grads = vec![Some(dx), Some(dw)];
                if let Some(db) = db {
                    grads.push(Some(db));
                }
                grads
            })
        },
    ))
}
