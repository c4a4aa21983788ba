use crate::error::{invalid, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[inline]
pub(crate) fn shrink<T: Scalar>(x: T, lambda: T) -> T {
    let mag = x.abs() - lambda;
    if mag > T::zero() {
        x.signum() * mag
    } else {
        T::zero()
    }
}

/// Entrywise soft thresholding with one threshold per row:
/// `sign(m[i,j]) * max(0, |m[i,j]| - thresholds[i])`.
pub fn soft_threshold<T: Scalar>(m: &Matrix<T>, thresholds: &[T]) -> Result<Matrix<T>> {
    if thresholds.len() != m.rows() {
        return invalid(format!("{} thresholds for a matrix with {} rows", thresholds.len(), m.rows()));
    }
    if let Some(bad) = thresholds.iter().find(|t| !(**t >= T::zero()) || !t.is_finite()) {
        return invalid(format!("threshold {bad} must be finite and non-negative"));
    }
    let mut out = m.clone();
    for (i, &lambda) in thresholds.iter().enumerate() {
        for v in out.row_mut(i) {
            *v = shrink(*v, lambda);
        }
    }
    Ok(out)
}

/// Soft thresholding with a single scalar level for every entry.
pub fn soft_threshold_uniform<T: Scalar>(m: &Matrix<T>, lambda: T) -> Result<Matrix<T>> {
    if !(lambda >= T::zero()) || !lambda.is_finite() {
        return invalid(format!("threshold {lambda} must be finite and non-negative"));
    }
    Ok(m.map(|v| shrink(v, lambda)))
}

/// `l1` norm of every column.
pub fn column_l1_norms<T: Scalar>(m: &Matrix<T>) -> Vec<T> {
    let mut acc = vec![T::zero(); m.cols()];
    for i in 0..m.rows() {
        for (a, &v) in acc.iter_mut().zip(m.row(i)) {
            *a += v.abs();
        }
    }
    acc
}
