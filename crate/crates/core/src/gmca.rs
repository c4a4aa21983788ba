//! Generalized Morphological Component Analysis.
//!
//! Alternates a soft-thresholded projection of the data onto the current
//! mixing matrix (source update) with a least-squares refit of the mixing
//! matrix (mixing update), while the per-source thresholds decrease from a
//! large starting value down to `multiplier * sigma`.

use rand::Rng;

use crate::datagen::{gen_mixing, rng_from_seed};
use crate::error::{invalid, Error, Result};
use crate::linalg::{mad_sigma, pseudo_inverse, soft_threshold, Matrix};
use crate::model::{Diagnostics, IterationCounts, ScheduleRule, SeparationResult, SolverParams};
use crate::scalar::Scalar;

/// Decreasing per-source thresholds over `steps` iterations. The value at
/// the last step is exactly `floor`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdSchedule<T> {
    initial: Vec<T>,
    floor: T,
    steps: usize,
    rule: ScheduleRule,
}

// dynamic range of the exponential rule
const EXP_DECADES: f64 = 3.0;

impl<T: Scalar> ThresholdSchedule<T> {
    /// Initial values below `floor` are raised to it.
    pub fn new(initial: &[T], floor: T, steps: usize, rule: ScheduleRule) -> Result<Self> {
        if steps == 0 {
            return invalid("threshold schedule needs at least one step");
        }
        if !(floor >= T::zero()) || !floor.is_finite() {
            return invalid(format!("threshold floor {floor} must be finite and non-negative"));
        }
        let initial = initial.iter().map(|&v| v.max(floor)).collect();
        Ok(Self { initial, floor, steps, rule })
    }

    pub fn initial(&self) -> &[T] {
        &self.initial
    }

    pub fn floor(&self) -> T {
        self.floor
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn value(&self, step: usize) -> Vec<T> {
        if step + 1 >= self.steps {
            return vec![self.floor; self.initial.len()];
        }
        let frac = T::lit(step as f64 / (self.steps - 1) as f64);
        let weight = match self.rule {
            ScheduleRule::Linear => T::one() - frac,
            ScheduleRule::Exponential => {
                let base = T::lit(10f64.powf(-EXP_DECADES));
                (T::lit(10.0).powf(-T::lit(EXP_DECADES) * frac) - base) / (T::one() - base)
            }
        };
        self.initial.iter().map(|&l0| self.floor + (l0 - self.floor) * weight).collect()
    }
}

/// MAD noise estimate over the flattened entries of `x`.
pub fn estimate_noise_sigma<T: Scalar>(x: &Matrix<T>) -> Result<T> {
    mad_sigma(x.as_slice())
}

/// `soft_threshold(pinv(A) * X, thresholds)`.
pub fn update_sources<T: Scalar>(
    x_eff: &Matrix<T>,
    a_cur: &Matrix<T>,
    thresholds: &[T],
    pinv_tol: T,
) -> Result<Matrix<T>> {
    if a_cur.rows() != x_eff.rows() {
        return invalid(format!("mixing matrix has {} rows but data has {}", a_cur.rows(), x_eff.rows()));
    }
    let proj = pseudo_inverse(a_cur, pinv_tol)?.matmul(x_eff)?;
    soft_threshold(&proj, thresholds)
}

/// Least-squares mixing refit `X diag(w) (S diag(w))^+` restricted to the
/// active source rows.
///
/// Columns belonging to all-zero source rows keep their value from
/// `previous`; refitted columns are renormalised, and a column that comes out
/// exactly zero is replaced by a random unit vector. So is any column whose
/// absolute cosine with an earlier column exceeds `max_coherence`: two
/// estimates locked onto the same direction otherwise stay merged for good.
/// An entirely zero `S` yields [`Error::DegenerateUpdate`].
pub fn update_mixing<T: Scalar, R: Rng>(
    x_eff: &Matrix<T>,
    s_cur: &Matrix<T>,
    weights: Option<&[T]>,
    previous: &Matrix<T>,
    pinv_tol: T,
    max_coherence: T,
    rng: &mut R,
) -> Result<Matrix<T>> {
    let (m, t) = x_eff.shape();
    let n = s_cur.rows();
    if s_cur.cols() != t || previous.shape() != (m, n) {
        return invalid(format!(
            "update_mixing shapes: X {:?}, S {:?}, previous A {:?}",
            x_eff.shape(),
            s_cur.shape(),
            previous.shape()
        ));
    }
    if let Some(w) = weights {
        if w.len() != t || w.iter().any(|&v| !(v > T::zero()) || !v.is_finite()) {
            return invalid("weights must be positive with one entry per sample");
        }
    }
    let active: Vec<usize> = (0..n).filter(|&r| s_cur.row(r).iter().any(|&v| v != T::zero())).collect();
    if active.is_empty() {
        return Err(Error::DegenerateUpdate);
    }
    let s_act = if active.len() == n { s_cur.clone() } else { s_cur.select_rows(&active) };
    let refit = match weights {
        Some(w) => x_eff.scale_columns(w)?.matmul(&pseudo_inverse(&s_act.scale_columns(w)?, pinv_tol)?)?,
        None => x_eff.matmul(&pseudo_inverse(&s_act, pinv_tol)?)?,
    };

    let mut a = previous.clone();
    let norms = refit.column_l2_norms();
    for (k, &col) in active.iter().enumerate() {
        if norms[k] > T::zero() {
            for i in 0..m {
                a[(i, col)] = refit[(i, k)] / norms[k];
            }
        } else {
            a.set_column(col, &random_unit_vector(m, rng));
        }
    }
    for i in 1..n {
        let merged = (0..i).any(|j| {
            let dot: T = (0..m).map(|r| a[(r, i)] * a[(r, j)]).sum();
            dot.abs() > max_coherence
        });
        if merged {
            a.set_column(i, &random_unit_vector(m, rng));
        }
    }
    Ok(a)
}

fn random_unit_vector<T: Scalar, R: Rng>(m: usize, rng: &mut R) -> Vec<T> {
    loop {
        let v: Vec<f64> = (0..m).map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)).collect();
        let nrm = v.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
        if nrm > 0.0 {
            return v.into_iter().map(|x| T::lit(x / nrm)).collect();
        }
    }
}

/// Number of retained samples per source at the first iteration.
pub fn initial_order_statistic(t: usize) -> usize {
    (t as f64 * 0.01).ceil().max(2.0).min(t as f64) as usize
}

/// Starting thresholds: for each row of `pinv(A) X`, the `q`-th largest
/// magnitude with `q = max(2, ceil(0.01 t))`, raised to at least `floor`.
pub fn initial_thresholds<T: Scalar>(x_eff: &Matrix<T>, a_cur: &Matrix<T>, floor: T, pinv_tol: T) -> Result<Vec<T>> {
    let proj = pseudo_inverse(a_cur, pinv_tol)?.matmul(x_eff)?;
    Ok(projection_thresholds(&proj, floor))
}

pub(crate) fn projection_thresholds<T: Scalar>(proj: &Matrix<T>, floor: T) -> Vec<T> {
    let q = initial_order_statistic(proj.cols());
    (0..proj.rows())
        .map(|r| {
            let mut mags: Vec<T> = proj.row(r).iter().map(|v| v.abs()).collect();
            let (_, &mut kth, _) =
                mags.select_nth_unstable_by(q - 1, |a, b| b.partial_cmp(a).expect("finite projection"));
            kth.max(floor)
        })
        .collect()
}

/// Outcome of one decreasing-threshold pass.
#[derive(Clone, Debug)]
pub(crate) struct Refinement<T> {
    pub a: Matrix<T>,
    pub s: Matrix<T>,
    pub degenerate_updates: usize,
}

/// `schedule.steps()` alternations of source and mixing updates on a fixed
/// data matrix, followed by a last source update at the floor so the
/// returned sources are the sparse projection on the returned mixing matrix.
pub(crate) fn refine<T: Scalar, R: Rng>(
    x_eff: &Matrix<T>,
    a_init: Matrix<T>,
    schedule: &ThresholdSchedule<T>,
    weights: Option<&[T]>,
    pinv_tol: T,
    max_coherence: T,
    rng: &mut R,
) -> Result<Refinement<T>> {
    let mut a = a_init;
    let mut degenerate_updates = 0;
    for step in 0..schedule.steps() {
        let s = update_sources(x_eff, &a, &schedule.value(step), pinv_tol)?;
        match update_mixing(x_eff, &s, weights, &a, pinv_tol, max_coherence, rng) {
            Ok(next) => a = next,
            Err(Error::DegenerateUpdate) => degenerate_updates += 1,
            Err(e) => return Err(e),
        }
    }
    let s = update_sources(x_eff, &a, &vec![schedule.floor(); a.cols()], pinv_tol)?;
    Ok(Refinement { a, s, degenerate_updates })
}

pub(crate) fn check_problem<T: Scalar>(x: &Matrix<T>, n: usize, params: &SolverParams) -> Result<()> {
    params.validate()?;
    if n == 0 || x.rows() < n {
        return invalid(format!("need 1 <= n <= m (n = {n}, m = {})", x.rows()));
    }
    if !x.is_finite() {
        return invalid("observations contain non-finite entries");
    }
    Ok(())
}

/// Plain GMCA from a random Gaussian initialisation drawn with
/// `params.rng_seed`. The decreasing-threshold pass is run
/// `params.outer_iters` times, each restarting from the same initial
/// thresholds. The outlier estimate of the result is zero.
pub fn gmca<T: Scalar>(x: &Matrix<T>, n: usize, params: &SolverParams) -> Result<SeparationResult<T>> {
    check_problem(x, n, params)?;
    let mut rng = rng_from_seed(params.rng_seed);
    let a0 = gen_mixing(x.rows(), n, &mut rng)?;
    gmca_from(x, a0, params, &mut rng)
}

/// GMCA from a caller-supplied initial mixing matrix.
pub fn gmca_from<T: Scalar, R: Rng>(
    x: &Matrix<T>,
    a0: Matrix<T>,
    params: &SolverParams,
    rng: &mut R,
) -> Result<SeparationResult<T>> {
    let n = a0.cols();
    check_problem(x, n, params)?;
    if a0.rows() != x.rows() {
        return invalid("initial mixing matrix does not match the data");
    }
    let pinv_tol = T::lit(params.pinv_tol);
    let sigma = estimate_noise_sigma(x)?;
    let floor = T::lit(params.final_threshold_multiplier) * sigma;
    let max_coherence = T::lit(params.max_coherence);
    let lambda0 = initial_thresholds(x, &a0, floor, pinv_tol)?;
    let schedule = ThresholdSchedule::new(&lambda0, floor, params.inner_iters, params.schedule)?;
    let mut a = a0;
    let mut s = Matrix::zeros(n, x.cols());
    let mut degenerate_updates = 0;
    for _ in 0..params.outer_iters {
        let pass = refine(x, a, &schedule, None, pinv_tol, max_coherence, rng)?;
        a = pass.a;
        s = pass.s;
        degenerate_updates += pass.degenerate_updates;
    }
    let o = Matrix::zeros(x.rows(), x.cols());
    let diagnostics =
        Diagnostics { degenerate_updates, final_sigma: sigma.to_f64_lossy(), converged: true, ..Default::default() };
    SeparationResult::assemble(
        x,
        a,
        s,
        o,
        IterationCounts { outer: params.outer_iters, inner: params.outer_iters * params.inner_iters },
        diagnostics,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_sources, SourceSpec};

    #[test]
    fn schedule_endpoints_and_monotonicity() {
        for rule in [ScheduleRule::Linear, ScheduleRule::Exponential] {
            let s = ThresholdSchedule::new(&[10.0, 0.5, 4.0], 1.0, 7, rule).unwrap();
            assert_eq!(s.value(0), vec![10.0, 1.0, 4.0]);
            assert_eq!(s.value(6), vec![1.0; 3]);
            for k in 1..7 {
                let (a, b) = (s.value(k - 1), s.value(k));
                assert!(a.iter().zip(&b).all(|(x, y)| y <= x));
            }
        }
        let single = ThresholdSchedule::new(&[5.0], 2.0, 1, ScheduleRule::Linear).unwrap();
        assert_eq!(single.value(0), vec![2.0]);
        assert!(ThresholdSchedule::new(&[5.0], 2.0, 0, ScheduleRule::Linear).is_err());
    }

    #[test]
    fn noise_sigma_examples() {
        let c = Matrix::from_fn(4, 5, |_, _| 3.0);
        assert_eq!(estimate_noise_sigma(&c).unwrap(), 0.0);
        let mut rng = rng_from_seed(21);
        let noise = crate::datagen::gen_noise::<f64>(16, 1024, 0.1, &mut rng).unwrap();
        let s = estimate_noise_sigma(&noise).unwrap();
        assert!((s - 0.1).abs() < 0.005, "{s}");
        // noiseless sparse mixture: most entries are exactly zero
        let a = gen_mixing::<f64>(16, 8, &mut rng).unwrap();
        let src = gen_sources::<f64>(8, 1024, &SourceSpec { activation: 0.05, peak: 100.0 }, &mut rng).unwrap();
        let x = a.matmul(&src).unwrap();
        assert!(estimate_noise_sigma(&x).unwrap() < 1e-12);
    }

    #[test]
    fn source_update_examples() {
        let x = Matrix::from_rows(&[vec![1.5, -2.0], vec![0.25, 3.0]]).unwrap();
        let id = Matrix::identity(2);
        assert_eq!(update_sources(&x, &id, &[0.0, 0.0], 1e-10).unwrap(), x);
        let x = Matrix::from_rows(&[vec![5.0, 0.5], vec![0.0, 0.0]]).unwrap();
        let s = update_sources(&x, &id, &[1.0, 1.0], 1e-10).unwrap();
        assert_eq!(s.row(0), &[4.0, 0.0]);
        assert!(update_sources(&x, &Matrix::identity(3), &[0.0; 3], 1e-10).is_err());
    }

    #[test]
    fn exact_least_squares_source_recovery() {
        let mut rng = rng_from_seed(8);
        let a = gen_mixing::<f64>(6, 3, &mut rng).unwrap();
        let s = gen_sources::<f64>(3, 40, &SourceSpec { activation: 0.5, peak: 10.0 }, &mut rng).unwrap();
        let x = a.matmul(&s).unwrap();
        let est = update_sources(&x, &a, &[0.0; 3], 1e-10).unwrap();
        assert!(est.sub(&s).unwrap().max_abs() < 1e-8);
    }

    #[test]
    fn mixing_update_examples() {
        let mut rng = rng_from_seed(1);
        // S = I, t = n
        let x = Matrix::from_rows(&[vec![3.0, 0.0], vec![4.0, 2.0], vec![0.0, 0.0]]).unwrap();
        let prev = Matrix::from_fn(3, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        let a = update_mixing(&x, &Matrix::identity(2), None, &prev, 1e-10, 0.99, &mut rng).unwrap();
        assert!((a[(0, 0)] - 0.6f64).abs() < 1e-14 && (a[(1, 0)] - 0.8f64).abs() < 1e-14);
        assert!((a[(1, 1)] - 1.0f64).abs() < 1e-14);

        // uniform weights cancel
        let s = gen_sources::<f64>(2, 30, &SourceSpec { activation: 0.4, peak: 5.0 }, &mut rng).unwrap();
        let x = Matrix::from_fn(3, 30, |i, j| ((i * 13 + j * 7) % 9) as f64 - 4.0);
        let plain = update_mixing(&x, &s, None, &prev, 1e-10, 0.99, &mut rng).unwrap();
        let w = vec![2.5; 30];
        let weighted = update_mixing(&x, &s, Some(&w), &prev, 1e-10, 0.99, &mut rng).unwrap();
        assert!(plain.sub(&weighted).unwrap().max_abs() < 1e-12);

        // all-zero S is degenerate; a single zero row keeps the previous column
        let zero = Matrix::zeros(2, 30);
        assert!(matches!(update_mixing(&x, &zero, None, &prev, 1e-10, 0.99, &mut rng), Err(Error::DegenerateUpdate)));
        let mut half = s.clone();
        half.row_mut(1).iter_mut().for_each(|v| *v = 0.0);
        let a = update_mixing(&x, &half, None, &prev, 1e-10, 0.99, &mut rng).unwrap();
        assert_eq!(a.column(1), prev.column(1));

        assert!(update_mixing(&x, &s, Some(&[1.0; 29]), &prev, 1e-10, 0.99, &mut rng).is_err());
        assert!(update_mixing(&x, &s, Some(&vec![0.0; 30]), &prev, 1e-10, 0.99, &mut rng).is_err());
    }

    #[test]
    fn exact_least_squares_mixing_recovery() {
        let mut rng = rng_from_seed(17);
        let a_true = gen_mixing::<f64>(16, 8, &mut rng).unwrap();
        let s = gen_sources::<f64>(8, 1024, &SourceSpec { activation: 0.05, peak: 100.0 }, &mut rng).unwrap();
        let x = a_true.matmul(&s).unwrap();
        let prev = gen_mixing::<f64>(16, 8, &mut rng).unwrap();
        let a = update_mixing(&x, &s, None, &prev, 1e-10, 0.99, &mut rng).unwrap();
        for j in 0..8 {
            let d: f64 = a.column(j).iter().zip(a_true.column(j)).map(|(p, q)| p * q).sum();
            let sign = d.signum();
            for i in 0..16 {
                assert!((a[(i, j)] * sign - a_true[(i, j)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn initial_threshold_order_statistic() {
        let mut row = vec![0.0; 100];
        row[98] = 10.0;
        row[99] = 9.0;
        let x = Matrix::new(1, 100, row).unwrap();
        let id = Matrix::identity(1);
        assert_eq!(initial_thresholds(&x, &id, 0.0, 1e-10).unwrap(), vec![9.0]);
        assert_eq!(initial_thresholds(&x, &id, 9.5, 1e-10).unwrap(), vec![9.5]);
        let zero = Matrix::zeros(1, 100);
        assert_eq!(initial_thresholds(&zero, &id, 0.3, 1e-10).unwrap(), vec![0.3]);
    }

    #[test]
    fn initial_threshold_matches_full_sort() {
        let mut rng = rng_from_seed(99);
        let x = crate::datagen::gen_noise::<f64>(3, 517, 2.0, &mut rng).unwrap();
        let id = Matrix::identity(3);
        let got = initial_thresholds(&x, &id, 0.0, 1e-10).unwrap();
        let q = 6; // ceil(5.17)
        for (r, &g) in got.iter().enumerate() {
            let mut mags: Vec<f64> = x.row(r).iter().map(|v| v.abs()).collect();
            mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert_eq!(g, mags[q - 1]);
        }
    }

    #[test]
    fn scalar_problem() {
        let x = Matrix::new(1, 20, (0..20).map(|i| (i as f64 - 9.5) * 0.3).collect()).unwrap();
        let params = SolverParams { inner_iters: 10, ..Default::default() };
        let r = gmca(&x, 1, &params).unwrap();
        assert_eq!(r.a_est[(0, 0)].abs(), 1.0);
        let sign = r.a_est[(0, 0)];
        let floor = 3.0 * r.diagnostics.final_sigma;
        let expect = soft_threshold(&x.scale(sign), &[floor]).unwrap();
        assert!(r.s_est.sub(&expect).unwrap().max_abs() < 1e-12);
        assert_eq!(r.o_est.count_nonzero(), 0);
    }
}
