//! Strategies and property checks shared by the operator suite and the
//! acceptance run.

#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use rgmca::datagen::{gen_mixing, rng_from_seed};
use rgmca::linalg::DEFAULT_PINV_TOL;
use rgmca::linalg::{mad_sigma, median, pseudo_inverse, soft_threshold, soft_threshold_uniform, svd};
use rgmca::metrics::delta_a;
use rgmca::pcp::singular_value_threshold;
use rgmca::Matrix;

pub type Checked = Result<(), TestCaseError>;

pub fn matrix(
    rows: std::ops::RangeInclusive<usize>,
    cols: std::ops::RangeInclusive<usize>,
    bound: f64,
) -> impl Strategy<Value = Matrix<f64>> {
    (rows, cols).prop_flat_map(move |(r, c)| {
        prop::collection::vec(-bound..bound, r * c).prop_map(move |v| Matrix::new(r, c, v).unwrap())
    })
}

/// Two matrices of one shape.
pub fn matrix_pair(bound: f64) -> impl Strategy<Value = (Matrix<f64>, Matrix<f64>)> {
    (1usize..=6, 1usize..=12).prop_flat_map(move |(r, c)| {
        let one = || prop::collection::vec(-bound..bound, r * c).prop_map(move |v| Matrix::new(r, c, v).unwrap());
        (one(), one())
    })
}

/// `U diag(s) V^T` with orthonormal `U`, `V`, singular values in
/// `[0.1, 10]` and a random number of exact zeros. Returns the matrix and its
/// pseudo-inverse `V diag(1/s) U^T` built from the same factors.
#[derive(Clone, Debug)]
pub struct Factored {
    pub m: Matrix<f64>,
    pub pinv: Matrix<f64>,
}

fn orthonormal(rows: usize, k: usize, seed: u64) -> Matrix<f64> {
    let mut rng = rng_from_seed(seed);
    let g: Matrix<f64> = gen_mixing(rows, k, &mut rng).unwrap();
    svd(&g).unwrap().u
}

pub fn factored() -> impl Strategy<Value = Factored> {
    (1usize..=8, 1usize..=8)
        .prop_flat_map(|(r, c)| {
            let k = r.min(c);
            (Just((r, c)), prop::collection::vec(0.1f64..10.0, k), 0..k, any::<u64>())
        })
        .prop_map(|((r, c), mut s, zeros, seed)| {
            let k = s.len();
            for v in s.iter_mut().take(zeros) {
                *v = 0.0;
            }
            let u = orthonormal(r, k, seed);
            let v = orthonormal(c, k, seed ^ 0x9E37_79B9);
            let m = u.scale_columns(&s).unwrap().matmul(&v.transpose()).unwrap();
            let inv: Vec<f64> = s.iter().map(|&x| if x > 0.0 { 1.0 / x } else { 0.0 }).collect();
            let pinv = v.scale_columns(&inv).unwrap().matmul(&u.transpose()).unwrap();
            Factored { m, pinv }
        })
}

fn max_gap(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    a.sub(b).unwrap().max_abs()
}

pub fn soft_threshold_properties(pair: &(Matrix<f64>, Matrix<f64>), a: f64, b: f64) -> Checked {
    let (x, y) = pair;
    let sa = soft_threshold_uniform(x, a).unwrap();
    let sab = soft_threshold_uniform(&soft_threshold_uniform(x, b).unwrap(), a).unwrap();
    let direct = soft_threshold_uniform(x, a + b).unwrap();
    let scale = 1e-12 * (1.0 + x.max_abs());
    prop_assert!(max_gap(&sab, &direct) <= scale, "semigroup gap {}", max_gap(&sab, &direct));

    let sy = soft_threshold_uniform(y, a).unwrap();
    for ((&u, &v), (&su, &sv)) in x.as_slice().iter().zip(y.as_slice()).zip(sa.as_slice().iter().zip(sy.as_slice())) {
        prop_assert!((su - sv).abs() <= (u - v).abs() + 1e-12 * (u.abs() + v.abs()), "not a contraction at {u}, {v}");
        prop_assert!(su.abs() <= u.abs());
        if u.abs() <= a {
            prop_assert_eq!(su, 0.0);
        } else {
            prop_assert!((su - (u - a * u.signum())).abs() <= 1e-12 * u.abs());
        }
    }
    prop_assert!(sa.sub(&sy).unwrap().frobenius_norm() <= x.sub(y).unwrap().frobenius_norm() * (1.0 + 1e-12));

    let rows = vec![a; x.rows()];
    prop_assert_eq!(soft_threshold(x, &rows).unwrap(), sa);
    Ok(())
}

pub fn moore_penrose_properties(f: &Factored) -> Checked {
    let a = &f.m;
    let p = pseudo_inverse(a, DEFAULT_PINV_TOL).unwrap();
    let tol = 1e-8;
    let ap = a.matmul(&p).unwrap();
    let pa = p.matmul(a).unwrap();
    prop_assert!(max_gap(&ap.matmul(a).unwrap(), a) <= tol, "A A+ A != A");
    prop_assert!(max_gap(&pa.matmul(&p).unwrap(), &p) <= tol, "A+ A A+ != A+");
    prop_assert!(max_gap(&ap, &ap.transpose()) <= tol, "A A+ not symmetric");
    prop_assert!(max_gap(&pa, &pa.transpose()) <= tol, "A+ A not symmetric");
    prop_assert!(max_gap(&p, &f.pinv) <= tol, "differs from the factored inverse");
    let back = pseudo_inverse(&p, DEFAULT_PINV_TOL).unwrap();
    prop_assert!(max_gap(&back, a) <= tol, "pinv(pinv(A)) != A");
    Ok(())
}

pub fn mad_properties(v: &[f64], scale: f64, shift: f64) -> Checked {
    let base = mad_sigma(v).unwrap();
    let moved: Vec<f64> = v.iter().map(|x| scale * x + shift).collect();
    let got = mad_sigma(&moved).unwrap();
    let magnitude = scale.abs() * v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + shift.abs();
    let tol = 1e-12 * (1.0 + magnitude);
    prop_assert!((got - scale.abs() * base).abs() <= tol, "MAD {got} vs {}", scale.abs() * base);
    let med = median(&moved).unwrap();
    prop_assert!((med - (scale * median(v).unwrap() + shift)).abs() <= tol);
    let mut reversed = v.to_vec();
    reversed.reverse();
    prop_assert_eq!(mad_sigma(&reversed).unwrap(), base);
    Ok(())
}

fn nuclear(m: &Matrix<f64>) -> f64 {
    svd(m).unwrap().singular_values.iter().sum()
}

pub fn svt_properties(m: &Matrix<f64>, tau_lo: f64, tau_hi: f64) -> Checked {
    let (lo, hi) = if tau_lo <= tau_hi { (tau_lo, tau_hi) } else { (tau_hi, tau_lo) };
    let sigma = svd(m).unwrap().singular_values;
    let smax = sigma[0].max(1.0);
    let out_lo = singular_value_threshold(m, lo).unwrap();
    let out_hi = singular_value_threshold(m, hi).unwrap();
    let got = svd(&out_lo).unwrap().singular_values;
    for (g, s) in got.iter().zip(&sigma) {
        prop_assert!((g - (s - lo).max(0.0)).abs() <= 1e-9 * smax, "singular value {g} vs {s} - {lo}");
    }
    prop_assert!(nuclear(&out_hi) <= nuclear(&out_lo) + 1e-9 * smax);
    prop_assert!(out_hi.frobenius_norm() <= out_lo.frobenius_norm() + 1e-9 * smax);
    let rank = |x: &Matrix<f64>| svd(x).unwrap().rank(1e-9);
    prop_assert!(rank(&out_hi) <= rank(&out_lo) || out_hi.max_abs() <= 1e-9 * smax);
    let dist = |x: &Matrix<f64>| m.sub(x).unwrap().frobenius_norm();
    prop_assert!(dist(&out_hi) + 1e-9 * smax >= dist(&out_lo));
    Ok(())
}

/// Random mixing matrix with `n <= 8`, a column permutation and sign flips.
pub fn mixing_with_ambiguity() -> impl Strategy<Value = (Matrix<f64>, Vec<usize>, Vec<bool>)> {
    (1usize..=8).prop_flat_map(|n| (n..=16usize, Just(n), any::<u64>())).prop_flat_map(|(m, n, seed)| {
        let mut rng = rng_from_seed(seed);
        let a: Matrix<f64> = gen_mixing(m, n, &mut rng).unwrap();
        (Just(a), Just((0..n).collect::<Vec<_>>()).prop_shuffle(), prop::collection::vec(any::<bool>(), n))
    })
}

pub fn delta_invariance(a: &Matrix<f64>, perm: &[usize], flips: &[bool]) -> Checked {
    let moved = Matrix::from_fn(a.rows(), a.cols(), |i, j| {
        let v = a[(i, perm[j])];
        if flips[j] {
            -v
        } else {
            v
        }
    });
    let d = delta_a(&moved, a).unwrap();
    prop_assert!(d <= 1e-12, "delta_A = {d:e}");
    let d = delta_a(a, &moved).unwrap();
    prop_assert!(d <= 1e-12, "reverse delta_A = {d:e}");
    Ok(())
}
