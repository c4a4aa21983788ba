//! Seeded synthetic scenes: Bernoulli-Gaussian sources, Gaussian mixing
//! matrices with unit columns, sparse outliers (scattered entries plus fully
//! corrupted columns) and white Gaussian noise.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{svd, Matrix};
use crate::model::{assemble_scene, MixingScene};
use crate::scalar::Scalar;

/// Generator used for scenes and solver initialisation.
pub type SceneRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SceneRng {
    ChaCha8Rng::seed_from_u64(seed)
}

const MAX_REDRAWS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    /// Bernoulli activation probability.
    pub activation: f64,
    /// Largest absolute entry after rescaling.
    pub peak: f64,
}

impl SourceSpec {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.activation) {
            return invalid(format!("activation {} outside [0, 1]", self.activation));
        }
        if !(self.peak > 0.0) || !self.peak.is_finite() {
            return invalid(format!("peak {} must be positive", self.peak));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutlierSpec {
    /// Entries corrupted at uniformly random positions.
    pub n_scattered: usize,
    /// Columns corrupted in every observation.
    pub n_corrupted_columns: usize,
    pub amplitude_std: f64,
}

impl OutlierSpec {
    pub fn none() -> Self {
        Self { n_scattered: 0, n_corrupted_columns: 0, amplitude_std: 0.0 }
    }

    pub fn validate(&self, m: usize, t: usize) -> Result<()> {
        if !(self.amplitude_std >= 0.0) || !self.amplitude_std.is_finite() {
            return invalid(format!("outlier std {} must be non-negative", self.amplitude_std));
        }
        if self.n_corrupted_columns > t {
            return invalid(format!("{} corrupted columns exceed t = {t}", self.n_corrupted_columns));
        }
        if self.n_scattered + m * self.n_corrupted_columns > m * t {
            return invalid(format!(
                "{} scattered + {} column outliers exceed {} entries",
                self.n_scattered,
                m * self.n_corrupted_columns,
                m * t
            ));
        }
        Ok(())
    }
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn bernoulli_gaussian(n: usize, t: usize, activation: f64, rng: &mut impl Rng) -> Vec<f64> {
    (0..n * t).map(|_| if rng.random::<f64>() < activation { normal(rng) } else { 0.0 }).collect()
}

/// Rescales so the largest magnitude equals `peak` exactly.
fn rescale_to_peak(data: &mut [f64], peak: f64) -> bool {
    let (imax, vmax) = data
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
    if vmax == 0.0 {
        return false;
    }
    let k = peak / vmax;
    for v in data.iter_mut() {
        *v *= k;
    }
    data[imax] = peak.copysign(data[imax]);
    true
}

fn to_matrix<T: Scalar>(rows: usize, cols: usize, data: Vec<f64>) -> Matrix<T> {
    Matrix::from_fn(rows, cols, |i, j| T::lit(data[i * cols + j]))
}

/// Bernoulli-Gaussian sources scaled so that `max |S| = spec.peak`.
pub fn gen_sources<T: Scalar>(n: usize, t: usize, spec: &SourceSpec, rng: &mut impl Rng) -> Result<Matrix<T>> {
    if n == 0 || t == 0 {
        return invalid("source dimensions must be positive");
    }
    spec.validate()?;
    for _ in 0..MAX_REDRAWS {
        let mut data = bernoulli_gaussian(n, t, spec.activation, rng);
        if rescale_to_peak(&mut data, spec.peak) {
            return Ok(to_matrix(n, t, data));
        }
    }
    invalid(format!("all-zero source draw after {MAX_REDRAWS} attempts (activation {})", spec.activation))
}

/// Gaussian `m x n` matrix with unit-norm columns and full column rank.
pub fn gen_mixing<T: Scalar>(m: usize, n: usize, rng: &mut impl Rng) -> Result<Matrix<T>> {
    if n == 0 || m < n {
        return invalid(format!("mixing matrix needs m >= n >= 1 (got {m}x{n})"));
    }
    for _ in 0..MAX_REDRAWS {
        let mut a = Matrix::<f64>::from_fn(m, n, |_, _| normal(rng));
        let norms = a.column_l2_norms();
        if norms.contains(&0.0) {
            continue;
        }
        for i in 0..m {
            for (v, &nrm) in a.row_mut(i).iter_mut().zip(&norms) {
                *v /= nrm;
            }
        }
        if svd(&a)?.rank(1e-10) == n {
            return Ok(a.cast());
        }
    }
    invalid(format!("rank-deficient {m}x{n} mixing draw after {MAX_REDRAWS} attempts"))
}

/// Sparse outliers: `n_corrupted_columns` distinct full columns plus
/// `n_scattered` further entries drawn without replacement outside them.
pub fn gen_outliers<T: Scalar>(m: usize, t: usize, spec: &OutlierSpec, rng: &mut impl Rng) -> Result<Matrix<T>> {
    spec.validate(m, t)?;
    let mut o = Matrix::<f64>::zeros(m, t);
    let mut corrupted = vec![false; t];
    let mut cols = index::sample(rng, t, spec.n_corrupted_columns).into_vec();
    cols.sort_unstable();
    for &j in &cols {
        corrupted[j] = true;
        for i in 0..m {
            o[(i, j)] = spec.amplitude_std * normal(rng);
        }
    }
    let clean: Vec<usize> = (0..t).filter(|&j| !corrupted[j]).collect();
    let mut picks = index::sample(rng, m * clean.len(), spec.n_scattered).into_vec();
    picks.sort_unstable();
    for p in picks {
        let (i, j) = (p / clean.len(), clean[p % clean.len()]);
        o[(i, j)] = spec.amplitude_std * normal(rng);
    }
    Ok(o.cast())
}

/// i.i.d. `N(0, sigma^2)` entries.
pub fn gen_noise<T: Scalar>(m: usize, t: usize, sigma: f64, rng: &mut impl Rng) -> Result<Matrix<T>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return invalid(format!("noise level {sigma} must be non-negative"));
    }
    let data = (0..m * t).map(|_| sigma * normal(rng)).collect();
    Ok(to_matrix(m, t, data))
}

/// Two-sided exponential kernel `exp(-|k| * 2 ln2 / fwhm)`, truncated where
/// the weight drops below 1e-6. Returned unnormalised with the centre at
/// index `len / 2`.
pub fn laplacian_kernel(fwhm: f64) -> Result<Vec<f64>> {
    if !(fwhm > 0.0) || !fwhm.is_finite() {
        return invalid(format!("kernel width {fwhm} must be positive"));
    }
    let rate = 2.0 * std::f64::consts::LN_2 / fwhm;
    let half = (0..).take_while(|&k| (-(k as f64) * rate).exp() >= 1e-6).last().unwrap_or(0);
    Ok((-(half as isize)..=half as isize).map(|k| (-(k.unsigned_abs() as f64) * rate).exp()).collect())
}

/// Zero-padded "same" convolution of every row with an odd-length kernel.
pub(crate) fn convolve_rows(data: &[f64], rows: usize, cols: usize, kernel: &[f64]) -> Vec<f64> {
    let half = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let row = &data[r * cols..(r + 1) * cols];
        for (j, &v) in row.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            for (k, &w) in kernel.iter().enumerate() {
                let pos = j as isize + k as isize - half;
                if pos >= 0 && (pos as usize) < cols {
                    out[r * cols + pos as usize] += v * w;
                }
            }
        }
    }
    out
}

/// Spectrum-like sources: Bernoulli-Gaussian spike trains convolved with an
/// l1-normalised Laplacian line shape, then rescaled to `spec.peak`.
pub fn gen_spectra_like<T: Scalar>(
    n: usize,
    t: usize,
    spec: &SourceSpec,
    kernel_fwhm: f64,
    rng: &mut impl Rng,
) -> Result<Matrix<T>> {
    if n == 0 || t == 0 {
        return invalid("source dimensions must be positive");
    }
    spec.validate()?;
    let mut kernel = laplacian_kernel(kernel_fwhm)?;
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|w| *w /= total);
    for _ in 0..MAX_REDRAWS {
        let spikes = bernoulli_gaussian(n, t, spec.activation, rng);
        let mut data = convolve_rows(&spikes, n, t, &kernel);
        if rescale_to_peak(&mut data, spec.peak) {
            return Ok(to_matrix(n, t, data));
        }
    }
    invalid(format!("all-zero spike draw after {MAX_REDRAWS} attempts (activation {})", spec.activation))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceKind {
    BernoulliGaussian,
    SpectraLike { kernel_fwhm: f64 },
}

/// Everything needed to draw one scene.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneSpec {
    pub m: usize,
    pub n: usize,
    pub t: usize,
    pub sources: SourceSpec,
    pub kind: SourceKind,
    pub outliers: OutlierSpec,
    pub sigma: f64,
}

/// Draws `A`, `S`, `O`, `N` in that order from a generator seeded with `seed`.
pub fn generate_scene<T: Scalar>(spec: &SceneSpec, seed: u64) -> Result<MixingScene<T>> {
    let mut rng = rng_from_seed(seed);
    let a = gen_mixing(spec.m, spec.n, &mut rng)?;
    let s = match spec.kind {
        SourceKind::BernoulliGaussian => gen_sources(spec.n, spec.t, &spec.sources, &mut rng)?,
        SourceKind::SpectraLike { kernel_fwhm } => {
            gen_spectra_like(spec.n, spec.t, &spec.sources, kernel_fwhm, &mut rng)?
        }
    };
    let o = gen_outliers(spec.m, spec.t, &spec.outliers, &mut rng)?;
    let noise = gen_noise(spec.m, spec.t, spec.sigma, &mut rng)?;
    assemble_scene(a, s, o, noise, T::lit(spec.sigma))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sources_degenerate_and_dense() {
        let mut rng = rng_from_seed(1);
        let spec = SourceSpec { activation: 0.0, peak: 100.0 };
        assert!(gen_sources::<f64>(3, 10, &spec, &mut rng).is_err());
        let spec = SourceSpec { activation: 1.0, peak: 100.0 };
        let s = gen_sources::<f64>(3, 10, &spec, &mut rng).unwrap();
        assert_eq!(s.count_nonzero(), 30);
        assert_eq!(s.max_abs(), 100.0);
    }

    #[test]
    fn sources_activation_rate() {
        let mut rng = rng_from_seed(5);
        let spec = SourceSpec { activation: 0.05, peak: 100.0 };
        let s = gen_sources::<f64>(8, 1024, &spec, &mut rng).unwrap();
        let frac = s.count_nonzero() as f64 / (8.0 * 1024.0);
        // binomial 3-sigma band: 0.05 +- 3 sqrt(0.05 * 0.95 / 8192) = [0.043, 0.057]
        assert!((0.03..=0.07).contains(&frac), "{frac}");
        assert!((s.max_abs() - 100.0).abs() <= 1e-12 * 100.0);
    }

    #[test]
    fn mixing_scalar_and_norms() {
        let mut rng = rng_from_seed(2);
        let a = gen_mixing::<f64>(1, 1, &mut rng).unwrap();
        assert_eq!(a[(0, 0)].abs(), 1.0);
        let a = gen_mixing::<f64>(16, 8, &mut rng).unwrap();
        for nrm in a.column_l2_norms() {
            assert!((nrm - 1.0).abs() <= 1e-12);
        }
        assert!(gen_mixing::<f64>(2, 3, &mut rng).is_err());
    }

    #[test]
    fn mixing_determinism() {
        let a1 = gen_mixing::<f64>(16, 8, &mut rng_from_seed(9)).unwrap();
        let a2 = gen_mixing::<f64>(16, 8, &mut rng_from_seed(9)).unwrap();
        let b = gen_mixing::<f64>(16, 8, &mut rng_from_seed(10)).unwrap();
        assert_eq!(a1, a2);
        assert_ne!(a1, b);
    }

    #[test]
    fn outlier_supports() {
        let mut rng = rng_from_seed(3);
        let o = gen_outliers::<f64>(4, 10, &OutlierSpec::none(), &mut rng).unwrap();
        assert_eq!(o.count_nonzero(), 0);

        let spec = OutlierSpec { n_scattered: 0, n_corrupted_columns: 2, amplitude_std: 1.0 };
        let o = gen_outliers::<f64>(4, 10, &spec, &mut rng).unwrap();
        assert_eq!(o.count_nonzero(), 8);
        let full_cols = (0..10).filter(|&j| o.column(j).iter().all(|&v| v != 0.0)).count();
        assert_eq!(full_cols, 2);

        let spec = OutlierSpec { n_scattered: 160, n_corrupted_columns: 10, amplitude_std: 100.0 };
        let o = gen_outliers::<f64>(16, 1024, &spec, &mut rng).unwrap();
        assert_eq!(o.count_nonzero(), 160 + 16 * 10);

        let spec = OutlierSpec { n_scattered: 41, n_corrupted_columns: 0, amplitude_std: 1.0 };
        assert!(gen_outliers::<f64>(4, 10, &spec, &mut rng).is_err());
    }

    #[test]
    fn noise_level_and_determinism() {
        let z = gen_noise::<f64>(3, 3, 0.0, &mut rng_from_seed(1)).unwrap();
        assert_eq!(z.count_nonzero(), 0);
        let n1 = gen_noise::<f64>(16, 1024, 1.0, &mut rng_from_seed(4)).unwrap();
        let n2 = gen_noise::<f64>(16, 1024, 1.0, &mut rng_from_seed(4)).unwrap();
        assert_eq!(n1, n2);
        let v = n1.as_slice();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        assert!((0.97..=1.03).contains(&std), "{std}");
    }

    #[test]
    fn kernel_shape() {
        let k = laplacian_kernel(2.0).unwrap();
        let c = k.len() / 2;
        assert_eq!(k[c], 1.0);
        assert!((k[c - 1] - 0.5).abs() < 1e-15);
        assert!((k[c + 1] - 0.5).abs() < 1e-15);
        assert!(k.iter().all(|&w| w >= 1e-6));
        assert!(laplacian_kernel(0.0).is_err());
    }

    #[test]
    fn single_impulse_reproduces_kernel() {
        let t = 41;
        let mut spike = vec![0.0; t];
        spike[20] = 1.0;
        let k = laplacian_kernel(2.0).unwrap();
        let out = convolve_rows(&spike, 1, t, &k);
        let half = k.len() / 2;
        for (off, &w) in k.iter().enumerate() {
            assert_eq!(out[20 + off - half], w);
        }
        assert!(out.iter().enumerate().all(|(i, &v)| (v - out[40 - i]).abs() < 1e-15));
        assert_eq!(out.iter().cloned().fold(0.0, f64::max), out[20]);
    }

    #[test]
    fn spectra_degenerate() {
        let spec = SourceSpec { activation: 0.0, peak: 1.0 };
        assert!(gen_spectra_like::<f64>(2, 50, &spec, 2.0, &mut rng_from_seed(1)).is_err());
        let spec = SourceSpec { activation: 0.02, peak: 100.0 };
        let s = gen_spectra_like::<f64>(4, 1024, &spec, 2.0, &mut rng_from_seed(1)).unwrap();
        assert_eq!(s.max_abs(), 100.0);
    }
}
