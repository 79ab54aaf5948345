//! Single-threaded matrix kernels.
//!
//! Convolution, its adjoints, and the Gram op all lower to these routines.
//! Loop orders put a contiguous axpy or a blocked dot in the hot path so
//! the compiler can vectorize, and every reduction runs in a fixed order,
//! which keeps results bit-for-bit reproducible across runs.

use crate::scalar::Scalar;

/// c += a · b with a m×k, b k×n, c m×n, all row-major.
///
/// Accumulates into `c`; pass a zeroed buffer for a plain product.
pub fn gemm_nn<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for (kk, &aik) in a[i * k..(i + 1) * k].iter().enumerate() {
            let b_row = &b[kk * n..(kk + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv = aik.mul_add(bv, *cv);
            }
        }
    }
}

/// c += a · bᵀ with a m×k, b n×k, c m×n, all row-major.
///
/// Accumulates into `c`; pass a zeroed buffer for a plain product.
pub fn gemm_nt<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            c[i * n + j] += dot(a_row, b_row);
        }
    }
}

/// Blocked dot product with a fixed reduction order.
///
/// Sixteen independent accumulators keep several FMA chains in flight;
/// without them a float dot is a serial dependency the compiler must not
/// reassociate, and throughput drops roughly eightfold.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    const LANES: usize = 16;
    let mut acc = [T::zero(); LANES];
    let a_blocks = a.chunks_exact(LANES);
    let b_blocks = b.chunks_exact(LANES);
    let a_tail = a_blocks.remainder();
    let b_tail = b_blocks.remainder();
    for (ab, bb) in a_blocks.zip(b_blocks) {
        for lane in 0..LANES {
            acc[lane] = ab[lane].mul_add(bb[lane], acc[lane]);
        }
    }
    let mut sum = T::zero();
    for (&av, &bv) in a_tail.iter().zip(b_tail) {
        sum = av.mul_add(bv, sum);
    }
    for lane_sum in acc {
        sum += lane_sum;
    }
    sum
}

/// out = inpᵀ for a rows×cols row-major matrix.
pub fn transpose<T: Scalar>(rows: usize, cols: usize, inp: &[T], out: &mut [T]) {
    debug_assert_eq!(inp.len(), rows * cols);
    debug_assert_eq!(out.len(), rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = inp[i * cols + j];
        }
    }
}
