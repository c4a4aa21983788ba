//! Mixing-matrix error `Delta_A = ||pinv(A_est) A - I||_1 / n^2` after
//! resolving the permutation and sign ambiguity of the estimate.

use crate::error::{invalid, Result};
use crate::linalg::{pseudo_inverse, svd, Matrix, DEFAULT_PINV_TOL};
use crate::scalar::Scalar;

/// Trials with `Delta_A` strictly below this count as successes.
pub const SUCCESS_THRESHOLD: f64 = 5e-3;

/// Maps every true column `j` to estimated column `permutation[j]`,
/// multiplied by `signs[j]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alignment {
    pub permutation: Vec<usize>,
    pub signs: Vec<i8>,
}

impl Alignment {
    pub fn apply<T: Scalar>(&self, a_est: &Matrix<T>) -> Matrix<T> {
        Matrix::from_fn(a_est.rows(), self.permutation.len(), |i, j| {
            let v = a_est[(i, self.permutation[j])];
            if self.signs[j] < 0 {
                -v
            } else {
                v
            }
        })
    }
}

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian
/// method with potentials, O(n^3)). Returns `assign[row] = col`.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based arrays, index 0 is the virtual start column
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    assign
}

fn check_pair<T: Scalar>(a_est: &Matrix<T>, a_true: &Matrix<T>) -> Result<()> {
    if a_est.shape() != a_true.shape() {
        return invalid(format!(
            "estimated mixing {:?} and reference {:?} differ in shape",
            a_est.shape(),
            a_true.shape()
        ));
    }
    Ok(())
}

/// Permutation and signs maximising `sum_j |<A_est[:, pi(j)], A_true[:, j]>|`.
pub fn align_columns<T: Scalar>(a_est: &Matrix<T>, a_true: &Matrix<T>) -> Result<Alignment> {
    check_pair(a_est, a_true)?;
    let corr = a_true.transpose().matmul(a_est)?;
    let n = corr.rows();
    let cost: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|k| -corr[(j, k)].abs().to_f64_lossy()).collect()).collect();
    let permutation = min_cost_assignment(&cost);
    let signs = permutation.iter().enumerate().map(|(j, &k)| if corr[(j, k)] < T::zero() { -1 } else { 1 }).collect();
    Ok(Alignment { permutation, signs })
}

/// How `||pinv(A_est) A - I||_1` is read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeltaNorm {
    /// Sum of absolute entries.
    Entrywise,
    /// Maximum absolute column sum.
    Induced,
}

/// Alignment-invariant mixing error with the entrywise norm. Estimates that
/// are rank-deficient after alignment give `+inf`.
pub fn delta_a<T: Scalar>(a_est: &Matrix<T>, a_true: &Matrix<T>) -> Result<T> {
    delta_a_with(a_est, a_true, DeltaNorm::Entrywise)
}

pub fn delta_a_with<T: Scalar>(a_est: &Matrix<T>, a_true: &Matrix<T>, norm: DeltaNorm) -> Result<T> {
    check_pair(a_est, a_true)?;
    if !a_est.is_finite() {
        return Ok(T::infinity());
    }
    let aligned = align_columns(a_est, a_true)?.apply(a_est);
    let n = aligned.cols();
    let tol = T::lit(DEFAULT_PINV_TOL);
    if svd(&aligned)?.rank(tol) < n {
        return Ok(T::infinity());
    }
    let gap = pseudo_inverse(&aligned, tol)?.matmul(a_true)?.sub(&Matrix::identity(n))?;
    let total = match norm {
        DeltaNorm::Entrywise => gap.l1_norm(),
        DeltaNorm::Induced => (0..n).map(|j| gap.column(j).iter().map(|v| v.abs()).sum::<T>()).fold(T::zero(), T::max),
    };
    Ok(total / T::lit((n * n) as f64))
}

/// `delta < 5e-3`; the infinite sentinel is a failure.
pub fn success(delta: f64) -> bool {
    delta < SUCCESS_THRESHOLD
}
