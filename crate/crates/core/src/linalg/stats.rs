use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// `1 / Phi^{-1}(3/4)`: makes the MAD a consistent estimator of a
/// Gaussian standard deviation.
pub const MAD_CONSISTENCY: f64 = 1.4826;

/// Median of a non-empty slice (mean of the two central order statistics
/// for even lengths).
pub fn median<T: Scalar>(values: &[T]) -> Result<T> {
    if values.is_empty() {
        return invalid("median of an empty sample");
    }
    let mut v = values.to_vec();
    Ok(median_in_place(&mut v))
}

pub(crate) fn median_in_place<T: Scalar>(v: &mut [T]) -> T {
    let n = v.len();
    let cmp = |a: &T, b: &T| a.partial_cmp(b).expect("median of NaN");
    let (_, &mut hi, _) = v.select_nth_unstable_by(n / 2, cmp);
    if n % 2 == 1 {
        hi
    } else {
        let lo = v[..n / 2].iter().copied().fold(T::neg_infinity(), T::max);
        (lo + hi) / T::lit(2.0)
    }
}

/// Robust noise level: `1.4826 * median(|v - median(v)|)`.
pub fn mad_sigma<T: Scalar>(values: &[T]) -> Result<T> {
    if values.is_empty() {
        return invalid("MAD of an empty sample");
    }
    if values.iter().any(|v| !v.is_finite()) {
        return invalid("MAD of a sample with non-finite entries");
    }
    let mut buf = values.to_vec();
    let med = median_in_place(&mut buf);
    for (b, &v) in buf.iter_mut().zip(values) {
        *b = (v - med).abs();
    }
    Ok(T::lit(MAD_CONSISTENCY) * median_in_place(&mut buf))
}
