//! Thin singular value decomposition and the Moore-Penrose pseudo-inverse.
//!
//! Tall inputs are first reduced with a Householder QR so the one-sided
//! Jacobi sweeps only run on the small `n x n` triangular factor. Wide
//! inputs are handled through their transpose.

use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 80;

/// `M = U * diag(singular_values) * Vt` with `k = min(rows, cols)`.
#[derive(Clone, Debug)]
pub struct SvdFactors<T> {
    /// `rows x k`, orthonormal columns.
    pub u: Matrix<T>,
    /// Non-negative, non-increasing.
    pub singular_values: Vec<T>,
    /// `k x cols`, orthonormal rows.
    pub vt: Matrix<T>,
}

impl<T: Scalar> SvdFactors<T> {
    pub fn reconstruct(&self) -> Matrix<T> {
        let us = self.u.scale_columns(&self.singular_values).expect("conformable factors");
        us.matmul(&self.vt).expect("conformable factors")
    }

    /// Number of singular values strictly above `rel_tol * s_max`.
    pub fn rank(&self, rel_tol: T) -> usize {
        let smax = self.singular_values.first().copied().unwrap_or_else(T::zero);
        if smax == T::zero() {
            return 0;
        }
        self.singular_values.iter().filter(|&&s| s > rel_tol * smax).count()
    }
}

/// Thin SVD of an arbitrary finite matrix.
pub fn svd<T: Scalar>(m: &Matrix<T>) -> Result<SvdFactors<T>> {
    if !m.is_finite() {
        return invalid("svd input contains non-finite entries");
    }
    if m.rows() < m.cols() {
        let t = svd_tall(&m.transpose())?;
        return Ok(SvdFactors { u: t.vt.transpose(), singular_values: t.singular_values, vt: t.u.transpose() });
    }
    svd_tall(m)
}

fn svd_tall<T: Scalar>(m: &Matrix<T>) -> Result<SvdFactors<T>> {
    let (rows, cols) = m.shape();
    if rows > cols {
        let (q, r) = householder_qr(m);
        let inner = jacobi_svd(&r)?;
        let u = q.matmul(&inner.u)?;
        Ok(SvdFactors { u, singular_values: inner.singular_values, vt: inner.vt })
    } else {
        jacobi_svd(m)
    }
}

/// Thin Householder QR of a tall matrix: `m = q * r` with `q` of shape
/// `rows x cols` and `r` upper triangular `cols x cols`.
pub(crate) fn householder_qr<T: Scalar>(m: &Matrix<T>) -> (Matrix<T>, Matrix<T>) {
    let (rows, cols) = m.shape();
    debug_assert!(rows >= cols);
    let mut a: Vec<Vec<T>> = (0..cols).map(|j| m.column(j)).collect();
    let mut reflectors: Vec<Vec<T>> = Vec::with_capacity(cols);
    let two = T::lit(2.0);

    for k in 0..cols {
        let norm = a[k][k..].iter().map(|&v| v * v).sum::<T>().sqrt();
        let mut v: Vec<T> = a[k][k..].to_vec();
        if norm == T::zero() {
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if v[0] >= T::zero() { -norm } else { norm };
        v[0] -= alpha;
        let vnorm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
        if vnorm == T::zero() {
            reflectors.push(Vec::new());
            continue;
        }
        for x in v.iter_mut() {
            *x /= vnorm;
        }
        for col in a.iter_mut().skip(k) {
            let dot: T = v.iter().zip(&col[k..]).map(|(&x, &y)| x * y).sum();
            for (c, &x) in col[k..].iter_mut().zip(&v) {
                *c -= two * dot * x;
            }
        }
        reflectors.push(v);
    }

    let r = Matrix::from_fn(cols, cols, |i, j| if i <= j { a[j][i] } else { T::zero() });

    // Q = H_0 H_1 ... H_{n-1} applied to the first `cols` columns of I.
    let mut q_cols: Vec<Vec<T>> = (0..cols)
        .map(|j| {
            let mut e = vec![T::zero(); rows];
            e[j] = T::one();
            e
        })
        .collect();
    for (k, v) in reflectors.iter().enumerate().rev() {
        if v.is_empty() {
            continue;
        }
        for col in q_cols.iter_mut() {
            let dot: T = v.iter().zip(&col[k..]).map(|(&x, &y)| x * y).sum();
            for (c, &x) in col[k..].iter_mut().zip(v) {
                *c -= two * dot * x;
            }
        }
    }
    let q = Matrix::from_fn(rows, cols, |i, j| q_cols[j][i]);
    (q, r)
}

/// One-sided (Hestenes) Jacobi SVD for `rows >= cols`.
fn jacobi_svd<T: Scalar>(m: &Matrix<T>) -> Result<SvdFactors<T>> {
    let (rows, cols) = m.shape();
    let mut g: Vec<Vec<T>> = (0..cols).map(|j| m.column(j)).collect();
    let mut v: Vec<Vec<T>> = (0..cols)
        .map(|j| {
            let mut e = vec![T::zero(); cols];
            e[j] = T::one();
            e
        })
        .collect();
    let tol = T::epsilon() * T::lit(rows as f64).sqrt();
    // columns whose squared norm is below this are numerically zero; rotating
    // them against each other only churns rounding noise
    let total: T = g.iter().flatten().map(|&x| x * x).sum();
    let negligible = total * T::epsilon() * T::epsilon();

    let mut converged = cols < 2;
    let mut residual = T::zero();
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        residual = T::zero();
        for i in 0..cols {
            for j in (i + 1)..cols {
                let (alpha, beta, gamma) = dot3(&g[i], &g[j]);
                if alpha <= negligible || beta <= negligible || gamma == T::zero() {
                    continue;
                }
                let off = gamma.abs() / (alpha * beta).sqrt();
                residual = residual.max(off);
                if off <= tol {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut g, i, j, c, s);
                rotate(&mut v, i, j, c, s);
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            routine: "jacobi svd",
            iterations: MAX_SWEEPS,
            residual: residual.to_f64_lossy(),
        });
    }

    let norms: Vec<T> = g.iter().map(|c| c.iter().map(|&x| x * x).sum::<T>().sqrt()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).expect("finite norms"));

    let smax = norms[order[0]];
    let tiny = smax * T::epsilon() * T::lit(rows.max(cols) as f64);
    let mut u_cols: Vec<Vec<T>> = Vec::with_capacity(cols);
    let mut pending = Vec::new();
    for (slot, &idx) in order.iter().enumerate() {
        let s = norms[idx];
        if s > tiny && s > T::zero() {
            u_cols.push(g[idx].iter().map(|&x| x / s).collect());
        } else {
            u_cols.push(vec![T::zero(); rows]);
            pending.push(slot);
        }
    }
    complete_orthonormal(&mut u_cols, &pending);

    let singular_values = order.iter().map(|&i| norms[i]).collect();
    let u = Matrix::from_fn(rows, cols, |i, j| u_cols[j][i]);
    let vt = Matrix::from_fn(cols, cols, |i, j| v[order[i]][j]);
    Ok(SvdFactors { u, singular_values, vt })
}

#[inline]
fn dot3<T: Scalar>(x: &[T], y: &[T]) -> (T, T, T) {
    let mut a = T::zero();
    let mut b = T::zero();
    let mut c = T::zero();
    for (&p, &q) in x.iter().zip(y) {
        a += p * p;
        b += q * q;
        c += p * q;
    }
    (a, b, c)
}

#[inline]
fn rotate<T: Scalar>(cols: &mut [Vec<T>], i: usize, j: usize, c: T, s: T) {
    let (left, right) = cols.split_at_mut(j);
    for (p, q) in left[i].iter_mut().zip(right[0].iter_mut()) {
        let (x, y) = (*p, *q);
        *p = c * x - s * y;
        *q = s * x + c * y;
    }
}

/// Fills the columns listed in `pending` (currently zero) with unit vectors
/// orthogonal to every other column, by Gram-Schmidt over the standard basis.
fn complete_orthonormal<T: Scalar>(cols: &mut [Vec<T>], pending: &[usize]) {
    if pending.is_empty() {
        return;
    }
    let dim = cols[0].len();
    let mut basis = 0;
    for &slot in pending {
        while basis < dim {
            let mut cand = vec![T::zero(); dim];
            cand[basis] = T::one();
            basis += 1;
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for (k, other) in cols.iter().enumerate() {
                    if k == slot {
                        continue;
                    }
                    let d: T = cand.iter().zip(other).map(|(&a, &b)| a * b).sum();
                    for (c, &o) in cand.iter_mut().zip(other) {
                        *c -= d * o;
                    }
                }
            }
            let n = cand.iter().map(|&x| x * x).sum::<T>().sqrt();
            if n > T::lit(1e-3) {
                cols[slot] = cand.into_iter().map(|x| x / n).collect();
                break;
            }
        }
    }
}

/// Moore-Penrose pseudo-inverse. Singular values at or below
/// `rel_tol * s_max` are treated as zero.
pub fn pseudo_inverse<T: Scalar>(m: &Matrix<T>, rel_tol: T) -> Result<Matrix<T>> {
    if !(rel_tol > T::zero() && rel_tol < T::one()) {
        return invalid(format!("pseudo-inverse tolerance {rel_tol} outside (0, 1)"));
    }
    let f = svd(m)?;
    let smax = f.singular_values[0];
    let inv: Vec<T> = f
        .singular_values
        .iter()
        .map(|&s| if smax > T::zero() && s > rel_tol * smax { T::one() / s } else { T::zero() })
        .collect();
    // V * diag(inv) * U^T
    let v_scaled = f.vt.transpose().scale_columns(&inv)?;
    v_scaled.matmul(&f.u.transpose())
}
