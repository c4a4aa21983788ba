//! Robust separation with an explicit sparse outlier term.
//!
//! Each outer iteration runs a full decreasing-threshold GMCA pass on the
//! outlier-cleaned data `X - O`, then re-estimates `O` by soft thresholding
//! the residual `X - A S`. The robust variant additionally down-weights
//! samples (columns) in the mixing update according to the `l1` mass of
//! their current outlier estimate, `w_i = 1 / (eps + ||O^i||_1)`.

use crate::datagen::{gen_mixing, rng_from_seed};
use crate::error::Result;
use crate::gmca::{check_problem, estimate_noise_sigma, projection_thresholds, refine, ThresholdSchedule};
use crate::linalg::{column_l1_norms, median, pseudo_inverse, soft_threshold, soft_threshold_uniform, Matrix};
use crate::model::{Diagnostics, IterationCounts, SeparationResult, SolverParams};
use crate::scalar::Scalar;

/// Diagonal of the sample-weighting matrix, one entry per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector<T>(pub Vec<T>);

impl<T: Scalar> WeightVector<T> {
    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> T {
        self.0.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, &w) in self.0.iter().enumerate() {
            if w < self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// Source amplitude scale used as the weight regulariser.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eps<T> {
    pub value: T,
    /// Set when the source estimate was all-zero.
    pub fallback: bool,
}

/// Initial outlier estimate: `alpha0` is the median of the entries of `|X|`
/// above `3 sigma`; `O0 = soft_threshold(X, alpha0)`. When no entry exceeds
/// `3 sigma` the estimate is zero and `alpha0 = 3 sigma`.
pub fn init_outliers<T: Scalar>(x: &Matrix<T>, sigma: T) -> Result<(Matrix<T>, T)> {
    let cut = T::lit(3.0) * sigma;
    let large: Vec<T> = x.as_slice().iter().map(|v| v.abs()).filter(|&v| v > cut).collect();
    if large.is_empty() {
        return Ok((Matrix::zeros(x.rows(), x.cols()), cut));
    }
    let alpha0 = median(&large)?;
    Ok((soft_threshold_uniform(x, alpha0)?, alpha0))
}

/// `median(|S| over nonzero entries) / 10`, or `1e-6 * (1 + max|S|)` for an
/// all-zero estimate.
pub fn compute_eps<T: Scalar>(s_est: &Matrix<T>) -> Eps<T> {
    let nz: Vec<T> = s_est.as_slice().iter().filter(|&&v| v != T::zero()).map(|v| v.abs()).collect();
    if nz.is_empty() {
        return Eps { value: T::lit(1e-6) * (T::one() + s_est.max_abs()), fallback: true };
    }
    let med = median(&nz).expect("non-empty");
    Eps { value: med / T::lit(10.0), fallback: false }
}

/// `w_i = 1 / (eps + ||O^i||_1)` for every sample column `i`.
pub fn compute_weights<T: Scalar>(o_est: &Matrix<T>, eps: T) -> Result<WeightVector<T>> {
    if !(eps > T::zero()) || !eps.is_finite() {
        return crate::error::invalid(format!("eps {eps} must be positive"));
    }
    Ok(WeightVector(column_l1_norms(o_est).into_iter().map(|l1| T::one() / (eps + l1)).collect()))
}

/// `soft_threshold(X - A S, alpha)` entrywise.
pub fn update_outliers<T: Scalar>(x: &Matrix<T>, a_est: &Matrix<T>, s_est: &Matrix<T>, alpha: T) -> Result<Matrix<T>> {
    let residual = x.sub(&a_est.matmul(s_est)?)?;
    soft_threshold_uniform(&residual, alpha)
}

/// Which parts of the robust machinery are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RobustOptions {
    /// Down-weight corrupted samples in the mixing update.
    pub weighting: bool,
    /// Estimate the outlier term; when false it stays at zero.
    pub estimate_outliers: bool,
}

impl RobustOptions {
    pub const RGMCA: Self = Self { weighting: true, estimate_outliers: true };
    pub const NRGMCA: Self = Self { weighting: false, estimate_outliers: true };
}

/// Per-outer-iteration record of the robust loop.
#[derive(Clone, Debug, Default)]
pub struct RobustTrace<T> {
    /// Outlier threshold used at each outer iteration.
    pub alphas: Vec<T>,
    /// Noise estimate on `X - O` at each outer iteration.
    pub sigmas: Vec<T>,
    /// Weights in force at the start of the run, then after each outer iteration.
    pub weights: Vec<WeightVector<T>>,
    pub eps: Vec<T>,
}

/// Outlier threshold for outer iteration `k`: linear from `alpha0` to the
/// current floor, never increasing and never below the floor.
fn alpha_at<T: Scalar>(k: usize, outer: usize, alpha0: T, prev: Option<T>, floor: T) -> T {
    if k + 1 >= outer {
        return floor;
    }
    let frac = T::lit(k as f64 / (outer - 1) as f64);
    let lin = alpha0 + (floor - alpha0) * frac;
    let capped = prev.map_or(lin, |p| lin.min(p));
    capped.max(floor)
}

/// Generic robust loop behind [`nrgmca`] and [`rgmca`].
pub fn robust_gmca<T: Scalar>(
    x: &Matrix<T>,
    n: usize,
    params: &SolverParams,
    opts: RobustOptions,
) -> Result<(SeparationResult<T>, RobustTrace<T>)> {
    check_problem(x, n, params)?;
    let (m, t) = x.shape();
    let pinv_tol = T::lit(params.pinv_tol);
    let mult = T::lit(params.final_threshold_multiplier);
    let max_coherence = T::lit(params.max_coherence);
    let mut rng = rng_from_seed(params.rng_seed);
    let mut trace = RobustTrace::default();
    let mut diag = Diagnostics { converged: true, ..Default::default() };

    let sigma0 = estimate_noise_sigma(x)?;
    let (mut o, alpha0) =
        if opts.estimate_outliers { init_outliers(x, sigma0)? } else { (Matrix::zeros(m, t), mult * sigma0) };
    let mut a = gen_mixing(m, n, &mut rng)?;

    // lambda0 is fixed for the whole run; each inner pass restarts from it.
    let x_eff = x.sub(&o)?;
    let floor0 = mult * estimate_noise_sigma(&x_eff)?;
    let proj0 = pseudo_inverse(&a, pinv_tol)?.matmul(&x_eff)?;
    let lambda0 = projection_thresholds(&proj0, floor0);
    let mut weights = if opts.weighting {
        let s0 = soft_threshold(&proj0, &lambda0)?;
        let eps = compute_eps(&s0);
        diag.eps_fallbacks += eps.fallback as usize;
        trace.eps.push(eps.value);
        let w = compute_weights(&o, eps.value)?;
        trace.weights.push(w.clone());
        Some(w)
    } else {
        None
    };

    let mut s = Matrix::zeros(n, t);
    let mut alpha_prev = None;
    let mut sigma = sigma0;
    let mut alpha = alpha0;
    for k in 0..params.outer_iters {
        let x_eff = x.sub(&o)?;
        sigma = estimate_noise_sigma(&x_eff)?;
        let floor = mult * sigma;
        let schedule = ThresholdSchedule::new(&lambda0, floor, params.inner_iters, params.schedule)?;
        let pass = refine(
            &x_eff,
            a,
            &schedule,
            weights.as_ref().map(WeightVector::as_slice),
            pinv_tol,
            max_coherence,
            &mut rng,
        )?;
        a = pass.a;
        s = pass.s;
        diag.degenerate_updates += pass.degenerate_updates;

        alpha = alpha_at(k, params.outer_iters, alpha0, alpha_prev, floor);
        alpha_prev = Some(alpha);
        trace.alphas.push(alpha);
        trace.sigmas.push(sigma);
        if opts.estimate_outliers {
            o = update_outliers(x, &a, &s, alpha)?;
        }
        if opts.weighting {
            let eps = compute_eps(&s);
            diag.eps_fallbacks += eps.fallback as usize;
            trace.eps.push(eps.value);
            let w = compute_weights(&o, eps.value)?;
            trace.weights.push(w.clone());
            weights = Some(w);
        }
    }

    diag.final_sigma = sigma.to_f64_lossy();
    diag.final_alpha = opts.estimate_outliers.then(|| alpha.to_f64_lossy());
    let iterations = IterationCounts { outer: params.outer_iters, inner: params.outer_iters * params.inner_iters };
    let result = SeparationResult::assemble(x, a, s, o, iterations, diag)?;
    Ok((result, trace))
}

/// Naive robust GMCA: sparse outlier term, no sample weighting.
pub fn nrgmca<T: Scalar>(x: &Matrix<T>, n: usize, params: &SolverParams) -> Result<SeparationResult<T>> {
    robust_gmca(x, n, params, RobustOptions::NRGMCA).map(|(r, _)| r)
}

/// Robust GMCA with outlier-driven sample weighting.
pub fn rgmca<T: Scalar>(x: &Matrix<T>, n: usize, params: &SolverParams) -> Result<SeparationResult<T>> {
    robust_gmca(x, n, params, RobustOptions::RGMCA).map(|(r, _)| r)
}
