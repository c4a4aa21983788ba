//! Problem and result types: observations `X = A S + O + N`, solver
//! parameters and the common separation output.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{Matrix, DEFAULT_PINV_TOL};
use crate::scalar::Scalar;

/// Ground truth together with the assembled observations.
#[derive(Clone, Debug, PartialEq)]
pub struct MixingScene<T> {
    /// Observations, `m x t`.
    pub x: Matrix<T>,
    /// Mixing matrix, `m x n`, unit-norm columns.
    pub a: Matrix<T>,
    /// Sources, `n x t`.
    pub s: Matrix<T>,
    /// Outliers, `m x t`.
    pub o: Matrix<T>,
    /// Gaussian noise, `m x t`.
    pub noise: Matrix<T>,
    pub sigma: T,
}

impl<T: Scalar> MixingScene<T> {
    pub fn n_observations(&self) -> usize {
        self.x.rows()
    }

    pub fn n_sources(&self) -> usize {
        self.a.cols()
    }

    pub fn n_samples(&self) -> usize {
        self.x.cols()
    }
}

pub(crate) fn unit_norm_tolerance<T: Scalar>() -> T {
    T::lit(1e-12).max(T::epsilon() * T::lit(1e3))
}

/// Assembles `X = A S + O + N` and validates shapes and the unit-norm
/// columns of `A`.
pub fn assemble_scene<T: Scalar>(
    a: Matrix<T>,
    s: Matrix<T>,
    o: Matrix<T>,
    noise: Matrix<T>,
    sigma: T,
) -> Result<MixingScene<T>> {
    let (m, n) = a.shape();
    let t = s.cols();
    if s.rows() != n {
        return invalid(format!("sources have {} rows but A has {n} columns", s.rows()));
    }
    if o.shape() != (m, t) || noise.shape() != (m, t) {
        return invalid(format!("outliers {:?} and noise {:?} must both be {m}x{t}", o.shape(), noise.shape()));
    }
    if m < n {
        return invalid(format!("need at least as many observations as sources ({m} < {n})"));
    }
    if !(sigma >= T::zero()) {
        return invalid(format!("noise level {sigma} must be non-negative"));
    }
    let tol = unit_norm_tolerance::<T>();
    if let Some((j, nrm)) = a.column_l2_norms().into_iter().enumerate().find(|(_, nrm)| (*nrm - T::one()).abs() > tol) {
        return invalid(format!("column {j} of A has norm {nrm}, expected 1"));
    }
    let x = a.matmul(&s)?.add(&o)?.add(&noise)?;
    Ok(MixingScene { x, a, s, o, noise, sigma })
}

/// Threshold decrease rule shared by the source and outlier schedules.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleRule {
    #[default]
    Linear,
    Exponential,
}

/// Iteration counts, threshold floor and seeding for every solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    /// Outer (outlier) iterations `K`.
    pub outer_iters: usize,
    /// Inner (source/mixing) iterations `J`.
    pub inner_iters: usize,
    /// Thresholds decrease towards `multiplier * sigma`.
    pub final_threshold_multiplier: f64,
    pub rng_seed: u64,
    pub pinv_tol: f64,
    pub schedule: ScheduleRule,
    /// A refitted mixing column whose absolute cosine with an earlier column
    /// exceeds this value is redrawn at random.
    pub max_coherence: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            outer_iters: 20,
            inner_iters: 100,
            final_threshold_multiplier: 3.0,
            rng_seed: 0,
            pinv_tol: DEFAULT_PINV_TOL,
            schedule: ScheduleRule::Linear,
            max_coherence: 0.99,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if self.outer_iters == 0 || self.inner_iters == 0 {
            return invalid("outer_iters and inner_iters must be at least 1");
        }
        if !(self.final_threshold_multiplier > 0.0) || !self.final_threshold_multiplier.is_finite() {
            return invalid("final_threshold_multiplier must be positive");
        }
        if !(self.pinv_tol > 0.0 && self.pinv_tol < 1.0) {
            return invalid("pinv_tol must lie in (0, 1)");
        }
        if !(self.max_coherence > 0.0 && self.max_coherence <= 1.0) {
            return invalid("max_coherence must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IterationCounts {
    pub outer: usize,
    pub inner: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    /// Mixing updates skipped because every source row was zero.
    pub degenerate_updates: usize,
    /// Times the source-amplitude scale fell back to its floor value.
    pub eps_fallbacks: usize,
    /// Noise level used for the final thresholds.
    pub final_sigma: f64,
    /// Final outlier threshold, for solvers that estimate outliers.
    pub final_alpha: Option<f64>,
    /// False only when an inner solver (PCP) hit its iteration cap.
    pub converged: bool,
}

/// Estimated `(A, S, O)`; `o_est` is all-zero for solvers without an
/// outlier term.
#[derive(Clone, Debug)]
pub struct SeparationResult<T> {
    pub a_est: Matrix<T>,
    pub s_est: Matrix<T>,
    pub o_est: Matrix<T>,
    pub iterations: IterationCounts,
    /// `||X - A S - O||_F`.
    pub residual_norm: T,
    pub diagnostics: Diagnostics,
}

impl<T: Scalar> SeparationResult<T> {
    pub(crate) fn assemble(
        x: &Matrix<T>,
        a_est: Matrix<T>,
        s_est: Matrix<T>,
        o_est: Matrix<T>,
        iterations: IterationCounts,
        diagnostics: Diagnostics,
    ) -> Result<Self> {
        let residual_norm = x.sub(&a_est.matmul(&s_est)?)?.sub(&o_est)?.frobenius_norm();
        Ok(Self { a_est, s_est, o_est, iterations, residual_norm, diagnostics })
    }
}

// ---- scene persistence ------------------------------------------------------

const SCENE_FILES: [&str; 5] = ["X.csv", "A.csv", "S.csv", "O.csv", "N.csv"];

/// Writes a matrix as text: a `rows,cols` header line followed by one
/// comma-separated line per row. Values use the shortest representation that
/// round-trips exactly.
pub fn write_matrix<T: Scalar>(m: &Matrix<T>, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(m.rows() * m.cols() * 12);
    out.push_str(&format!("{},{}\n", m.rows(), m.cols()));
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|v| format!("{}", v.to_f64_lossy())).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

pub fn read_matrix<T: Scalar>(path: &Path) -> Result<Matrix<T>> {
    let ctx = || path.display().to_string();
    let parse_err = |message: String| Error::Parse { context: ctx(), message };
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| parse_err("empty file".into()))??;
    let dims: Vec<usize> = header
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(format!("bad header {header:?}: {e}")))?;
    let [rows, cols] = dims[..] else {
        return Err(parse_err(format!("header {header:?} must be `rows,cols`")));
    };
    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        for tok in line.split(',') {
            let v: f64 = tok.trim().parse().map_err(|e| parse_err(format!("row {i}: bad value {tok:?}: {e}")))?;
            data.push(T::lit(v));
        }
    }
    Matrix::new(rows, cols, data).map_err(|e| parse_err(e.to_string()))
}

/// Saves every component of a scene into `dir` (created if missing).
pub fn save_scene<T: Scalar>(scene: &MixingScene<T>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mats = [&scene.x, &scene.a, &scene.s, &scene.o, &scene.noise];
    for (name, m) in SCENE_FILES.iter().zip(mats) {
        write_matrix(m, &dir.join(name))?;
    }
    fs::write(dir.join("sigma.txt"), format!("{}\n", scene.sigma.to_f64_lossy()))?;
    Ok(())
}

pub fn load_scene<T: Scalar>(dir: &Path) -> Result<MixingScene<T>> {
    let x = read_matrix(&dir.join("X.csv"))?;
    let a: Matrix<T> = read_matrix(&dir.join("A.csv"))?;
    let s: Matrix<T> = read_matrix(&dir.join("S.csv"))?;
    let o = read_matrix(&dir.join("O.csv"))?;
    let noise = read_matrix(&dir.join("N.csv"))?;
    let sigma_txt = fs::read_to_string(dir.join("sigma.txt"))?;
    let sigma: f64 = sigma_txt
        .trim()
        .parse()
        .map_err(|e| Error::Parse { context: dir.join("sigma.txt").display().to_string(), message: format!("{e}") })?;
    if a.rows() != x.rows() || s.rows() != a.cols() || s.cols() != x.cols() {
        return invalid(format!("inconsistent scene shapes: X {:?}, A {:?}, S {:?}", x.shape(), a.shape(), s.shape()));
    }
    if o.shape() != x.shape() || noise.shape() != x.shape() {
        return invalid("outlier and noise matrices must match X");
    }
    Ok(MixingScene { x, a, s, o, noise, sigma: T::lit(sigma) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_mixing_examples() {
        let a = Matrix::<f64>::identity(2);
        let z = Matrix::zeros(2, 2);
        let sc = assemble_scene(a.clone(), z.clone(), z.clone(), z.clone(), 0.0).unwrap();
        assert_eq!(sc.x, z);
        let s = Matrix::identity(2);
        let sc = assemble_scene(a, s.clone(), z.clone(), z, 0.0).unwrap();
        assert_eq!(sc.x, s);
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = Matrix::<f64>::identity(2);
        let s = Matrix::zeros(2, 5);
        let z = Matrix::zeros(2, 5);
        assert!(assemble_scene(a.clone(), Matrix::zeros(3, 5), z.clone(), z.clone(), 0.0).is_err());
        assert!(assemble_scene(a.clone(), s.clone(), Matrix::zeros(2, 4), z.clone(), 0.0).is_err());
        assert!(assemble_scene(a.scale(2.0), s.clone(), z.clone(), z.clone(), 0.0).is_err());
        // more sources than observations
        let wide = Matrix::from_fn(1, 2, |_, _| 1.0);
        assert!(assemble_scene(wide, s, Matrix::zeros(1, 5), Matrix::zeros(1, 5), 0.0).is_err());
    }

    #[test]
    fn solver_params_validation() {
        assert!(SolverParams::default().validate().is_ok());
        let bad = SolverParams { inner_iters: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolverParams { final_threshold_multiplier: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
