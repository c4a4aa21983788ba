//! Monte-Carlo experiment harness: preset sweeps over outlier amplitude,
//! corruption fraction and number of observations, paired scenes across
//! algorithms, and CSV persistence of per-trial records and summaries.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{generate_scene, OutlierSpec, SceneSpec, SourceKind, SourceSpec};
use crate::error::{invalid, Error, Result};
use crate::gmca::gmca;
use crate::metrics::{delta_a, success};
use crate::model::{SeparationResult, SolverParams};
use crate::pcp::{pcp_gmca, PcpParams};
use crate::robust::{nrgmca, rgmca};
use crate::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Gmca,
    Nrgmca,
    Rgmca,
    PcpGmca,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Gmca, Algorithm::Nrgmca, Algorithm::Rgmca, Algorithm::PcpGmca];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Gmca => "gmca",
            Algorithm::Nrgmca => "nrgmca",
            Algorithm::Rgmca => "rgmca",
            Algorithm::PcpGmca => "pcp_gmca",
        }
    }

    pub fn run(
        self,
        x: &Matrix<f64>,
        n: usize,
        solver: &SolverParams,
        pcp: &PcpParams,
    ) -> Result<SeparationResult<f64>> {
        match self {
            Algorithm::Gmca => gmca(x, n, solver),
            Algorithm::Nrgmca => nrgmca(x, n, solver),
            Algorithm::Rgmca => rgmca(x, n, solver),
            Algorithm::PcpGmca => pcp_gmca(x, n, solver, pcp),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Standard deviation of the outlier amplitudes.
    OutlierStd,
    /// Fraction of corrupted entries, split evenly between scattered entries
    /// and fully corrupted columns.
    CorruptionFraction,
    /// Number of observations `m`.
    NObservations,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::OutlierStd => "outlier_std",
            SweepParam::CorruptionFraction => "corruption_fraction",
            SweepParam::NObservations => "n_observations",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParam,
    pub values: Vec<f64>,
}

/// One Monte-Carlo experiment: a scene family, a swept parameter and the
/// algorithms compared on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub m: usize,
    pub n: usize,
    pub t: usize,
    pub sources: SourceSpec,
    pub source_kind: SourceKind,
    pub outliers: OutlierSpec,
    /// When set, the scattered-outlier count is `round(fraction * m * t)`,
    /// recomputed whenever `m` is swept.
    #[serde(default)]
    pub scattered_fraction: Option<f64>,
    pub sigma: f64,
    pub sweep: Sweep,
    pub n_trials: usize,
    pub base_seed: u64,
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub pcp: PcpParams,
    /// Write measured wall times to the records; otherwise they are 0 and the
    /// records file is reproducible byte for byte.
    #[serde(default)]
    pub record_timing: bool,
}

pub const DEFAULT_TRIALS: usize = 80;

/// PCP sparsity weight used by the presets, picked as the best of a small
/// grid on outlier-corrupted scenes of each family.
pub const PRESET_LAMBDA_PCP: f64 = 0.1;

fn tuned_pcp() -> PcpParams {
    PcpParams { lambda_pcp: Some(PRESET_LAMBDA_PCP), ..PcpParams::default() }
}

/// Named experiment families.
pub fn preset_experiment(name: &str) -> Result<ExperimentConfig> {
    let bernoulli = SourceSpec { activation: 0.05, peak: 100.0 };
    let all = Algorithm::ALL.to_vec();
    match name {
        "amplitude" => Ok(ExperimentConfig {
            m: 16,
            n: 8,
            t: 1024,
            sources: bernoulli,
            source_kind: SourceKind::BernoulliGaussian,
            outliers: OutlierSpec { n_scattered: 160, n_corrupted_columns: 10, amplitude_std: 100.0 },
            scattered_fraction: None,
            sigma: 0.1,
            sweep: Sweep {
                parameter: SweepParam::OutlierStd,
                values: vec![10.0, 25.0, 50.0, 100.0, 200.0, 400.0, 1000.0],
            },
            n_trials: DEFAULT_TRIALS,
            base_seed: 1,
            algorithms: all,
            solver: SolverParams::default(),
            pcp: tuned_pcp(),
            record_timing: false,
        }),
        "count" => Ok(ExperimentConfig {
            m: 16,
            n: 8,
            t: 1024,
            sources: bernoulli,
            source_kind: SourceKind::BernoulliGaussian,
            outliers: OutlierSpec { n_scattered: 0, n_corrupted_columns: 0, amplitude_std: 100.0 },
            scattered_fraction: None,
            sigma: 0.1,
            sweep: Sweep { parameter: SweepParam::CorruptionFraction, values: vec![0.0, 0.01, 0.02, 0.05, 0.1, 0.15] },
            n_trials: DEFAULT_TRIALS,
            base_seed: 2,
            algorithms: all,
            solver: SolverParams::default(),
            pcp: tuned_pcp(),
            record_timing: false,
        }),
        "observations" => Ok(ExperimentConfig {
            m: 4,
            n: 4,
            t: 1024,
            sources: SourceSpec { activation: 0.02, peak: 100.0 },
            source_kind: SourceKind::SpectraLike { kernel_fwhm: 2.0 },
            outliers: OutlierSpec { n_scattered: 0, n_corrupted_columns: 20, amplitude_std: 1000.0 },
            scattered_fraction: Some(0.01),
            sigma: 0.1,
            sweep: Sweep { parameter: SweepParam::NObservations, values: vec![4.0, 5.0, 6.0, 8.0, 10.0, 16.0] },
            n_trials: DEFAULT_TRIALS,
            base_seed: 3,
            algorithms: all,
            solver: SolverParams::default(),
            pcp: tuned_pcp(),
            record_timing: false,
        }),
        other => invalid(format!("unknown preset {other:?} (expected amplitude, count or observations)")),
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return invalid("n_trials must be at least 1");
        }
        if self.sweep.values.is_empty() {
            return invalid("sweep values must not be empty");
        }
        if self.algorithms.is_empty() {
            return invalid("at least one algorithm is required");
        }
        if self.sweep.values.iter().any(|v| !v.is_finite()) {
            return invalid("sweep values must be finite");
        }
        if self.scattered_fraction.is_some_and(|f| !(0.0..=1.0).contains(&f)) {
            return invalid("scattered_fraction must lie in [0, 1]");
        }
        self.solver.validate()?;
        self.pcp.validate()?;
        for &v in &self.sweep.values {
            let spec = self.scene_spec(v)?;
            if spec.m < spec.n {
                return invalid(format!("m = {} is smaller than n = {}", spec.m, spec.n));
            }
            spec.outliers.validate(spec.m, spec.t)?;
        }
        Ok(())
    }

    /// Scene family at one value of the swept parameter.
    pub fn scene_spec(&self, value: f64) -> Result<SceneSpec> {
        let mut spec = SceneSpec {
            m: self.m,
            n: self.n,
            t: self.t,
            sources: self.sources,
            kind: self.source_kind,
            outliers: self.outliers,
            sigma: self.sigma,
        };
        match self.sweep.parameter {
            SweepParam::OutlierStd => {
                if !(value >= 0.0) {
                    return invalid(format!("outlier std {value} must be non-negative"));
                }
                spec.outliers.amplitude_std = value;
            }
            SweepParam::CorruptionFraction => {
                if !(0.0..=1.0).contains(&value) {
                    return invalid(format!("corruption fraction {value} must lie in [0, 1]"));
                }
                let cols = (value * self.t as f64 / 2.0).round() as usize;
                spec.outliers.n_corrupted_columns = cols;
                spec.outliers.n_scattered = cols * self.m;
            }
            SweepParam::NObservations => {
                if !(value >= 1.0) || value.fract() != 0.0 {
                    return invalid(format!("number of observations {value} must be a positive integer"));
                }
                spec.m = value as usize;
            }
        }
        if let Some(frac) = self.scattered_fraction {
            spec.outliers.n_scattered = (frac * (spec.m * spec.t) as f64).round() as usize;
        }
        Ok(spec)
    }

    /// Reads a TOML file. A top-level `preset` key selects the base
    /// configuration (default `amplitude`); every other key overrides it.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let parse_err = |message: String| Error::Parse { context: "config".into(), message };
        let mut table: toml::Table = toml::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        let preset = match table.remove("preset") {
            None => "amplitude".to_string(),
            Some(toml::Value::String(s)) => s,
            Some(other) => return Err(parse_err(format!("preset must be a string, got {other}"))),
        };
        let base = preset_experiment(&preset)?;
        let mut merged = toml::Table::try_from(&base).map_err(|e| parse_err(e.to_string()))?;
        merge_tables(&mut merged, table);
        let cfg: ExperimentConfig = merged.try_into().map_err(|e: toml::de::Error| parse_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse { context: path.display().to_string(), message },
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse { context: "config".into(), message: e.to_string() })
    }
}

fn merge_tables(base: &mut toml::Table, patch: toml::Table) {
    for (key, value) in patch {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(p)) => merge_tables(b, p),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Scene seed of one trial; depends only on the base seed and the indices.
pub fn trial_seed(base_seed: u64, sweep_index: usize, trial_index: usize) -> u64 {
    base_seed ^ splitmix64(((sweep_index as u64) << 32) ^ trial_index as u64)
}

/// Solver seed paired with a scene seed; every algorithm uses the same one.
pub fn solver_seed(scene_seed: u64) -> u64 {
    splitmix64(scene_seed ^ 0xA5A5_A5A5_A5A5_A5A5)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub algorithm: Algorithm,
    pub sweep_param: SweepParam,
    pub sweep_value: f64,
    pub trial: usize,
    pub seed: u64,
    /// `+inf` when the solve failed or returned a rank-deficient estimate.
    pub delta_a: f64,
    pub success: bool,
    pub wall_time_s: f64,
    pub converged: bool,
    /// Error message of a failed scene draw or solve; not persisted.
    pub error: Option<String>,
}

fn run_trial(cfg: &ExperimentConfig, sweep_index: usize, trial: usize) -> Vec<TrialRecord> {
    let value = cfg.sweep.values[sweep_index];
    let seed = trial_seed(cfg.base_seed, sweep_index, trial);
    let record = |algorithm, delta_a: f64, wall: f64, converged, error| TrialRecord {
        algorithm,
        sweep_param: cfg.sweep.parameter,
        sweep_value: value,
        trial,
        seed,
        delta_a,
        success: success(delta_a),
        wall_time_s: if cfg.record_timing { wall } else { 0.0 },
        converged,
        error,
    };
    let scene = cfg.scene_spec(value).and_then(|spec| generate_scene::<f64>(&spec, seed));
    let scene = match scene {
        Ok(s) => s,
        Err(e) => {
            return cfg.algorithms.iter().map(|&a| record(a, f64::INFINITY, 0.0, false, Some(e.to_string()))).collect();
        }
    };
    let solver = cfg.solver.clone().with_seed(solver_seed(seed));
    cfg.algorithms
        .iter()
        .map(|&alg| {
            let start = Instant::now();
            let out = alg.run(&scene.x, cfg.n, &solver, &cfg.pcp).and_then(|r| {
                let d = delta_a(&r.a_est, &scene.a)?;
                Ok((d, r.diagnostics.converged))
            });
            let wall = start.elapsed().as_secs_f64();
            match out {
                Ok((d, conv)) => record(alg, d, wall, conv, None),
                Err(e) => record(alg, f64::INFINITY, wall, false, Some(e.to_string())),
            }
        })
        .collect()
}

/// Runs every (sweep value, trial) pair in parallel. All algorithms of a
/// trial see the same scene. Records are ordered by sweep index, trial, then
/// algorithm order in the config, whatever the execution order.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let tasks: Vec<(usize, usize)> =
        (0..cfg.sweep.values.len()).flat_map(|s| (0..cfg.n_trials).map(move |k| (s, k))).collect();
    let nested: Vec<Vec<TrialRecord>> = tasks.par_iter().map(|&(s, k)| run_trial(cfg, s, k)).collect();
    Ok(nested.into_iter().flatten().collect())
}

pub const RECORDS_HEADER: [&str; 9] =
    ["algorithm", "sweep_param", "sweep_value", "trial", "seed", "delta_A", "success", "wall_time_s", "converged"];

pub const SUMMARY_HEADER: [&str; 5] = ["algorithm", "sweep_value", "median_delta_A", "success_rate", "n_trials"];

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse { context: "csv".into(), message: format!("{other:?}") },
    }
}

/// Shortest round-trip decimal; infinities print as `inf`.
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn write_records<W: Write>(records: &[TrialRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORDS_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.algorithm.as_str().to_string(),
            r.sweep_param.as_str().to_string(),
            fmt_f64(r.sweep_value),
            r.trial.to_string(),
            r.seed.to_string(),
            fmt_f64(r.delta_a),
            (r.success as u8).to_string(),
            fmt_f64(r.wall_time_s),
            (r.converged as u8).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct RecordRow {
    algorithm: String,
    sweep_param: SweepParam,
    sweep_value: f64,
    trial: usize,
    seed: u64,
    #[serde(rename = "delta_A")]
    delta_a: f64,
    success: u8,
    wall_time_s: f64,
    converged: u8,
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<TrialRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(String::from).collect();
    if header != RECORDS_HEADER {
        return Err(Error::Parse { context: "records".into(), message: format!("unexpected header {header:?}") });
    }
    let mut out = Vec::new();
    for row in rd.deserialize::<RecordRow>() {
        let row = row.map_err(csv_err)?;
        out.push(TrialRecord {
            algorithm: row.algorithm.parse()?,
            sweep_param: row.sweep_param,
            sweep_value: row.sweep_value,
            trial: row.trial,
            seed: row.seed,
            delta_a: row.delta_a,
            success: row.success != 0,
            wall_time_s: row.wall_time_s,
            converged: row.converged != 0,
            error: None,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    pub sweep_value: f64,
    pub median_delta_a: f64,
    pub success_rate: f64,
    pub n_trials: usize,
}

/// Median with infinite values sorted last; the mean of the two middle
/// values for an even count.
pub fn median_delta(deltas: &[f64]) -> f64 {
    let mut v = deltas.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        return f64::NAN;
    }
    if k % 2 == 1 {
        v[k / 2]
    } else {
        let (lo, hi) = (v[k / 2 - 1], v[k / 2]);
        if hi.is_infinite() {
            hi
        } else {
            0.5 * (lo + hi)
        }
    }
}

/// One row per (algorithm, sweep value), in order of first appearance.
pub fn summarize(records: &[TrialRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return invalid("no records to summarize");
    }
    let mut groups: Vec<((Algorithm, u64), Vec<&TrialRecord>)> = Vec::new();
    for r in records {
        let key = (r.algorithm, r.sweep_value.to_bits());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    Ok(groups
        .into_iter()
        .map(|((algorithm, bits), g)| {
            let deltas: Vec<f64> = g.iter().map(|r| r.delta_a).collect();
            let wins = g.iter().filter(|r| r.success).count();
            SummaryRow {
                algorithm,
                sweep_value: f64::from_bits(bits),
                median_delta_a: median_delta(&deltas),
                success_rate: wins as f64 / g.len() as f64,
                n_trials: g.len(),
            }
        })
        .collect())
}

/// Looks up one summary row.
pub fn summary_for(rows: &[SummaryRow], algorithm: Algorithm, sweep_value: f64) -> Option<&SummaryRow> {
    rows.iter().find(|r| r.algorithm == algorithm && r.sweep_value == sweep_value)
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.algorithm.as_str().to_string(),
            fmt_f64(r.sweep_value),
            fmt_f64(r.median_delta_a),
            fmt_f64(r.success_rate),
            r.n_trials.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
