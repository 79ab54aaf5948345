//! Finite-difference verification harness.
//!
//! Public so the crate's integration tests and downstream acceptance
//! checks share one implementation. The classic recipe: perturb every
//! input element by ±eps, compare the central difference of a scalar loss
//! against the gradient the graph recorded. Losses are weighted sums with
//! fixed pseudo-random weights so gradient entries stay O(1) and relative
//! comparison is meaningful.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{
    backward, batch_norm, concat_channels, conv2d, conv_transpose2d, gram, matmul, no_grad,
    slice_channels, BnStats, Mode, Scalar, Tensor,
};

pub type CaseFn<T> = Box<dyn Fn(&[Tensor<T>]) -> Tensor<T>>;

pub struct Case<T: Scalar> {
    pub name: &'static str,
    pub inputs: Vec<Tensor<T>>,
    pub f: CaseFn<T>,
}

#[derive(Debug)]
pub struct CaseReport {
    pub name: &'static str,
    pub checked: usize,
    pub failures: usize,
    pub max_abs_diff: f64,
    /// Max relative error over elements whose magnitude clears the noise
    /// floor (a tenth of the case's largest gradient entry).
    pub max_rel: f64,
}

pub struct Tolerance {
    /// Central-difference step.
    pub eps: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Tolerance {
    pub fn f32_default() -> Self {
        Tolerance {
            eps: 1e-2,
            rtol: 1e-2,
            atol: 2e-3,
        }
    }

    pub fn f64_default() -> Self {
        Tolerance {
            eps: 1e-6,
            rtol: 1e-5,
            atol: 1e-9,
        }
    }
}

fn rt<T: Scalar, R: Rng>(rng: &mut R, shape: &[usize], map: impl Fn(f64) -> f64) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data: Vec<T> = (0..n)
        .map(|_| {
            let u: f64 = rng.sample(rand_distr::StandardNormal);
            T::from_f64(map(u))
        })
        .collect();
    Tensor::from_vec(data, shape).unwrap().requires_grad(true)
}

/// Deterministic weighted sum: same weights for the same tensor shape and
/// seed, so finite-difference re-evaluations see the identical loss.
fn wsum<T: Scalar>(y: &Tensor<T>, seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (y.numel() as u64).wrapping_mul(0x9E37_79B9));
    let w: Vec<T> = (0..y.numel())
        .map(|_| {
            let mag = rng.gen_range(0.5..1.5);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            T::from_f64(mag * sign)
        })
        .collect();
    let w = Tensor::from_vec(w, y.shape()).unwrap();
    y.mul(&w).unwrap().sum()
}

/// Every differentiable op in the crate, exercised on small random inputs.
pub fn all_cases<T: Scalar>(seed: u64) -> Vec<Case<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases: Vec<Case<T>> = Vec::new();

    let a = rt(&mut rng, &[2, 3], |v| v);
    let b = rt(&mut rng, &[2, 3], |v| v);
    cases.push(Case {
        name: "add",
        inputs: vec![a, b],
        f: Box::new(move |x| wsum(&x[0].add(&x[1]).unwrap(), seed)),
    });

    let a = rt(&mut rng, &[2, 3], |v| v);
    let b = rt(&mut rng, &[2, 3], |v| v);
    cases.push(Case {
        name: "sub",
        inputs: vec![a, b],
        f: Box::new(move |x| wsum(&x[0].sub(&x[1]).unwrap(), seed)),
    });

    let a = rt(&mut rng, &[2, 3], |v| v);
    let b = rt(&mut rng, &[2, 3], |v| v);
    cases.push(Case {
        name: "mul",
        inputs: vec![a, b],
        f: Box::new(move |x| wsum(&x[0].mul(&x[1]).unwrap(), seed)),
    });

    let x = rt(&mut rng, &[5], |v| v);
    cases.push(Case {
        name: "neg_scale_add_scalar",
        inputs: vec![x],
        f: Box::new(move |x| {
            wsum(
                &x[0]
                    .neg()
                    .scale(T::from_f64(1.7))
                    .add_scalar(T::from_f64(0.3)),
                seed,
            )
        }),
    });

    let x = rt(&mut rng, &[6], |v| v.abs() + 0.5);
    cases.push(Case {
        name: "ln",
        inputs: vec![x],
        f: Box::new(move |x| wsum(&x[0].ln(), seed)),
    });

    let x = rt(&mut rng, &[6], |v| 0.5 * v);
    cases.push(Case {
        name: "exp",
        inputs: vec![x],
        f: Box::new(move |x| wsum(&x[0].exp(), seed)),
    });

    let x = rt(&mut rng, &[6], |v| v);
    cases.push(Case {
        name: "tanh",
        inputs: vec![x],
        f: Box::new(move |x| wsum(&x[0].tanh(), seed)),
    });

    let x = rt(&mut rng, &[6], |v| v);
    cases.push(Case {
        name: "sigmoid",
        inputs: vec![x],
        f: Box::new(move |x| wsum(&x[0].sigmoid(), seed)),
    });

    // The kink at zero breaks finite differences; keep samples clear of it.
    let x = rt(&mut rng, &[8], |v| if v >= 0.0 { v + 0.3 } else { v - 0.3 });
    cases.push(Case {
        name: "leaky_relu",
        inputs: vec![x],
        f: Box::new(move |x| wsum(&x[0].leaky_relu(T::from_f64(0.2)), seed)),
    });

    let x = rt(&mut rng, &[7], |v| v);
    cases.push(Case {
        name: "mean",
        inputs: vec![x],
        f: Box::new(|x| x[0].mean()),
    });

    let x = rt(&mut rng, &[7], |v| v);
    cases.push(Case {
        name: "sum",
        inputs: vec![x],
        f: Box::new(|x| x[0].sum()),
    });

    let x = rt(&mut rng, &[2, 6], |v| v);
    cases.push(Case {
        name: "reshape",
        inputs: vec![x],
        f: Box::new(move |x| wsum(&x[0].reshape(&[3, 4]).unwrap(), seed)),
    });

    let a = rt(&mut rng, &[3, 4], |v| v);
    let b = rt(&mut rng, &[4, 2], |v| v);
    cases.push(Case {
        name: "matmul",
        inputs: vec![a, b],
        f: Box::new(move |x| wsum(&matmul(&x[0], &x[1]).unwrap(), seed)),
    });

    let x = rt(&mut rng, &[2, 3, 2, 2], |v| 0.7 * v);
    cases.push(Case {
        name: "gram",
        inputs: vec![x],
        f: Box::new(move |x| wsum(&gram(&x[0]).unwrap(), seed)),
    });

    let a = rt(&mut rng, &[1, 2, 2, 2], |v| v);
    let b = rt(&mut rng, &[1, 3, 2, 2], |v| v);
    cases.push(Case {
        name: "concat_channels",
        inputs: vec![a, b],
        f: Box::new(move |x| wsum(&concat_channels(&x[0], &x[1]).unwrap(), seed)),
    });

    let x = rt(&mut rng, &[1, 4, 2, 2], |v| v);
    cases.push(Case {
        name: "slice_channels",
        inputs: vec![x],
        f: Box::new(move |x| wsum(&slice_channels(&x[0], 1, 3).unwrap(), seed)),
    });

    let x = rt(&mut rng, &[2, 2, 5, 5], |v| v);
    let w = rt(&mut rng, &[3, 2, 3, 3], |v| 0.5 * v);
    let b = rt(&mut rng, &[3], |v| 0.2 * v);
    cases.push(Case {
        name: "conv2d_s2p1",
        inputs: vec![x, w, b],
        f: Box::new(move |x| wsum(&conv2d(&x[0], &x[1], Some(&x[2]), 2, 1).unwrap(), seed)),
    });

    let x = rt(&mut rng, &[1, 1, 6, 6], |v| v);
    let w = rt(&mut rng, &[2, 1, 5, 5], |v| 0.3 * v);
    let b = rt(&mut rng, &[2], |v| 0.2 * v);
    cases.push(Case {
        name: "conv2d_s1p2_k5",
        inputs: vec![x, w, b],
        f: Box::new(move |x| wsum(&conv2d(&x[0], &x[1], Some(&x[2]), 1, 2).unwrap(), seed)),
    });

    let x = rt(&mut rng, &[2, 2, 3, 3], |v| v);
    let w = rt(&mut rng, &[2, 3, 3, 3], |v| 0.5 * v);
    let b = rt(&mut rng, &[3], |v| 0.2 * v);
    cases.push(Case {
        name: "conv_transpose2d_s2p1op1",
        inputs: vec![x, w, b],
        f: Box::new(move |x| {
            wsum(
                &conv_transpose2d(&x[0], &x[1], Some(&x[2]), 2, 1, 1).unwrap(),
                seed,
            )
        }),
    });

    let x = rt(&mut rng, &[1, 2, 3, 3], |v| v);
    let w = rt(&mut rng, &[2, 2, 3, 3], |v| 0.5 * v);
    cases.push(Case {
        name: "conv_transpose2d_s1p0",
        inputs: vec![x, w],
        f: Box::new(move |x| {
            wsum(
                &conv_transpose2d(&x[0], &x[1], None, 1, 0, 0).unwrap(),
                seed,
            )
        }),
    });

    let x = rt(&mut rng, &[2, 3, 2, 2], |v| v);
    let g = rt(&mut rng, &[3], |v| 1.0 + 0.2 * v);
    let bt = rt(&mut rng, &[3], |v| 0.3 * v);
    cases.push(Case {
        name: "batch_norm_train",
        inputs: vec![x, g, bt],
        f: Box::new(move |x| {
            let stats = BnStats::new(3);
            wsum(
                &batch_norm(&x[0], &x[1], &x[2], &stats, Mode::Train).unwrap(),
                seed,
            )
        }),
    });

    let x = rt(&mut rng, &[2, 3, 2, 2], |v| v);
    let g = rt(&mut rng, &[3], |v| 1.0 + 0.2 * v);
    let bt = rt(&mut rng, &[3], |v| 0.3 * v);
    cases.push(Case {
        name: "batch_norm_eval",
        inputs: vec![x, g, bt],
        f: Box::new(move |x| {
            let stats = BnStats::new(3);
            stats
                .restore(
                    vec![T::from_f64(0.1), T::from_f64(-0.2), T::from_f64(0.3)],
                    vec![T::from_f64(0.9), T::from_f64(1.2), T::from_f64(0.7)],
                )
                .unwrap();
            wsum(
                &batch_norm(&x[0], &x[1], &x[2], &stats, Mode::Eval).unwrap(),
                seed,
            )
        }),
    });

    cases
}

fn eval_with<T: Scalar>(case: &Case<T>, which: usize, data: Vec<T>) -> f64 {
    let mut inputs: Vec<Tensor<T>> = case.inputs.to_vec();
    inputs[which] = Tensor::from_vec(data, case.inputs[which].shape()).unwrap();
    let loss = no_grad(|| (case.f)(&inputs));
    loss.item().unwrap().to_f64()
}

/// Checks one case. Panics on structural problems (unreachable inputs);
/// tolerance violations are counted, not panicked, so callers can report.
pub fn run_case<T: Scalar>(case: &Case<T>, tol: &Tolerance) -> CaseReport {
    let loss = (case.f)(&case.inputs);
    backward(&loss).unwrap_or_else(|e| panic!("{}: backward failed: {}", case.name, e));

    let mut report = CaseReport {
        name: case.name,
        checked: 0,
        failures: 0,
        max_abs_diff: 0.0,
        max_rel: 0.0,
    };

    for (i, input) in case.inputs.iter().enumerate() {
        let ad = input
            .grad()
            .unwrap_or_else(|| panic!("{}: input {} received no gradient", case.name, i));
        let grad_scale = ad
            .iter()
            .map(|v| v.to_f64().abs())
            .fold(0.0f64, f64::max)
            .max(1e-3);
        for j in 0..input.numel() {
            let base = input.data()[j].to_f64();
            let mut plus = input.data().to_vec();
            plus[j] = T::from_f64(base + tol.eps);
            let mut minus = input.data().to_vec();
            minus[j] = T::from_f64(base - tol.eps);
            let fd = (eval_with(case, i, plus) - eval_with(case, i, minus)) / (2.0 * tol.eps);
            let an = ad[j].to_f64();
            let diff = (an - fd).abs();
            report.checked += 1;
            report.max_abs_diff = report.max_abs_diff.max(diff);
            if diff > tol.atol + tol.rtol * an.abs().max(fd.abs()) {
                report.failures += 1;
            }
            if an.abs().max(fd.abs()) > 0.1 * grad_scale {
                report.max_rel = report.max_rel.max(diff / an.abs().max(fd.abs()));
            }
        }
    }
    report
}

/// Max relative inner-product mismatch of ⟨conv(x,w), y⟩ vs
/// ⟨x, conv_transpose(y,w)⟩ over a few random shapes.
pub fn adjoint_max_rel_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for &(cin, cout, h, k, s, p) in &[
        (2usize, 3usize, 7usize, 3usize, 1usize, 1usize),
        (1, 2, 8, 5, 2, 2),
        (3, 2, 9, 5, 2, 2),
        (2, 1, 6, 3, 2, 0),
    ] {
        let x = Tensor::<f32>::randn(&mut rng, 1.0, &[2, cin, h, h]);
        let w = Tensor::<f32>::randn(&mut rng, 1.0, &[cout, cin, k, k]);
        let cx = conv2d(&x, &w, None, s, p).unwrap();
        let y = Tensor::<f32>::randn(&mut rng, 1.0, cx.shape());
        let opad = (h + 2 * p - k) % s;
        let back = conv_transpose2d(&y, &w, None, s, p, opad).unwrap();
        let lhs: f64 = cx
            .data()
            .iter()
            .zip(y.data())
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum();
        let rhs: f64 = x
            .data()
            .iter()
            .zip(back.data())
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum();
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-12));
    }
    worst
}
