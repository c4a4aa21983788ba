//! Principal Component Pursuit by inexact augmented Lagrangian, and the
//! two-stage PCP+GMCA baseline (remove the sparse part, then separate the
//! low-rank part).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gmca::gmca;
use crate::linalg::{soft_threshold_uniform, svd, Matrix};
use crate::model::{SeparationResult, SolverParams};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcpParams {
    /// Sparsity weight; `None` selects `1 / sqrt(max(m, t))`.
    pub lambda_pcp: Option<f64>,
    /// Stop once `||X - L - O||_F / ||X||_F <= tol`.
    pub tol: f64,
    pub max_iters: usize,
    /// Initial penalty; `None` selects `1.25 / ||X||_2`.
    pub mu0: Option<f64>,
    pub rho: f64,
}

impl Default for PcpParams {
    fn default() -> Self {
        Self { lambda_pcp: None, tol: 1e-7, max_iters: 500, mu0: None, rho: 1.1 }
    }
}

impl PcpParams {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_pcp.is_some_and(|l| !(l > 0.0)) {
            return invalid("lambda_pcp must be positive");
        }
        if !(self.tol > 0.0) {
            return invalid("pcp tol must be positive");
        }
        if !(self.rho > 1.0) {
            return invalid("pcp rho must exceed 1");
        }
        if self.mu0.is_some_and(|m| !(m > 0.0)) {
            return invalid("pcp mu0 must be positive");
        }
        if self.max_iters == 0 {
            return invalid("pcp max_iters must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PcpResult<T> {
    pub low_rank: Matrix<T>,
    pub sparse: Matrix<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Relative constraint residual after every iteration.
    pub residuals: Vec<T>,
}

/// Shrinks every singular value of `m` by `tau`, clamping at zero.
pub fn singular_value_threshold<T: Scalar>(m: &Matrix<T>, tau: T) -> Result<Matrix<T>> {
    if !(tau >= T::zero()) {
        return invalid(format!("singular value threshold {tau} must be non-negative"));
    }
    let mut f = svd(m)?;
    for s in f.singular_values.iter_mut() {
        *s = (*s - tau).max(T::zero());
    }
    Ok(f.reconstruct())
}

/// Low-rank plus sparse split `X = L + O` minimising `||L||_* + lambda ||O||_1`.
pub fn pcp<T: Scalar>(x: &Matrix<T>, params: &PcpParams) -> Result<PcpResult<T>> {
    params.validate()?;
    let (m, t) = x.shape();
    let x_norm = x.frobenius_norm();
    if x_norm == T::zero() {
        return Ok(PcpResult {
            low_rank: Matrix::zeros(m, t),
            sparse: Matrix::zeros(m, t),
            iterations: 0,
            converged: true,
            residuals: Vec::new(),
        });
    }
    let lambda = T::lit(params.lambda_pcp.unwrap_or(1.0 / (m.max(t) as f64).sqrt()));
    let spectral = svd(x)?.singular_values[0];
    let mut mu = params.mu0.map_or(T::lit(1.25) / spectral, T::lit);
    let mu_max = mu * T::lit(1e7);
    let rho = T::lit(params.rho);
    let tol = T::lit(params.tol);

    // dual initialisation Y = X / max(||X||_2, ||X||_inf / lambda)
    let dual_scale = spectral.max(x.max_abs() / lambda);
    let mut y = x.scale(T::one() / dual_scale);
    let mut sparse = Matrix::zeros(m, t);
    let mut low_rank = Matrix::zeros(m, t);
    let mut residuals = Vec::new();
    let mut converged = false;

    for _ in 0..params.max_iters {
        let inv_mu = T::one() / mu;
        let target_l = x.sub(&sparse)?.add(&y.scale(inv_mu))?;
        low_rank = singular_value_threshold(&target_l, inv_mu)?;
        let target_s = x.sub(&low_rank)?.add(&y.scale(inv_mu))?;
        sparse = soft_threshold_uniform(&target_s, lambda * inv_mu)?;
        let z = x.sub(&low_rank)?.sub(&sparse)?;
        y = y.add(&z.scale(mu))?;
        mu = (mu * rho).min(mu_max);
        let rel = z.frobenius_norm() / x_norm;
        residuals.push(rel);
        if rel <= tol {
            converged = true;
            break;
        }
    }
    Ok(PcpResult { iterations: residuals.len(), low_rank, sparse, converged, residuals })
}

/// PCP to strip the sparse part, then GMCA on the low-rank remainder. The
/// PCP sparse estimate becomes the outlier estimate of the result.
pub fn pcp_gmca<T: Scalar>(
    x: &Matrix<T>,
    n: usize,
    params: &SolverParams,
    pcp_params: &PcpParams,
) -> Result<SeparationResult<T>> {
    let split = pcp(x, pcp_params)?;
    let sep = gmca(&split.low_rank, n, params)?;
    let mut diagnostics = sep.diagnostics;
    diagnostics.converged = split.converged;
    SeparationResult::assemble(x, sep.a_est, sep.s_est, split.sparse, sep.iterations, diagnostics)
}
