use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rgmca::bench::{
    preset_experiment, read_records, run_sweep, summarize, write_records, write_summary, Algorithm, ExperimentConfig,
};
use rgmca::datagen::generate_scene;
use rgmca::metrics::{delta_a, success};
use rgmca::model::{load_scene, save_scene};
use rgmca::Error;

#[derive(Parser)]
#[command(name = "rgmca", version, about = "Robust sparse blind source separation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigSource {
    /// Named experiment: amplitude, count or observations.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// TOML experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigSource {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::from_toml_file(path),
            (None, Some(name)) => preset_experiment(name),
            (None, None) => preset_experiment("amplitude"),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw one scene and write it to a directory.
    Generate {
        #[command(flatten)]
        source: ConfigSource,
        /// Value of the swept parameter; defaults to the first sweep value.
        #[arg(long)]
        value: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Separate a saved scene and print the mixing error.
    Run {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value = "rgmca")]
        algorithm: String,
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a Monte-Carlo sweep.
    Bench {
        #[command(flatten)]
        source: ConfigSource,
        /// Override the number of trials per sweep value.
        #[arg(long)]
        trials: Option<usize>,
        /// Records CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the summary CSV here.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Turn a records CSV into a summary CSV.
    Summarize {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Generate { source, value, seed, out } => {
            let cfg = source.load()?;
            let value = value.unwrap_or(cfg.sweep.values[0]);
            let scene = generate_scene::<f64>(&cfg.scene_spec(value)?, seed)?;
            save_scene(&scene, &out)?;
            println!("wrote {}x{} scene to {}", scene.x.rows(), scene.x.cols(), out.display());
        }
        Command::Run { scene, algorithm, source, seed } => {
            let alg: Algorithm = algorithm.parse()?;
            let cfg = source.load()?;
            let scene = load_scene::<f64>(&scene)?;
            let solver = cfg.solver.clone().with_seed(seed);
            let res = alg.run(&scene.x, scene.a.cols(), &solver, &cfg.pcp)?;
            let d = delta_a(&res.a_est, &scene.a)?;
            println!("algorithm={alg} delta_A={d:e} success={} residual={:e}", success(d) as u8, res.residual_norm);
        }
        Command::Bench { source, trials, out, summary } => {
            let mut cfg = source.load()?;
            if let Some(k) = trials {
                cfg.n_trials = k;
            }
            let records = run_sweep(&cfg)?;
            for r in records.iter().filter(|r| r.error.is_some()) {
                eprintln!(
                    "{} value {} trial {}: {}",
                    r.algorithm,
                    r.sweep_value,
                    r.trial,
                    r.error.as_deref().unwrap_or("")
                );
            }
            write_records(&records, output(out.as_deref())?)?;
            if let Some(path) = summary {
                write_summary(&summarize(&records)?, output(Some(&path))?)?;
            }
        }
        Command::Summarize { records, out } => {
            let rows = summarize(&read_records(File::open(&records)?)?)?;
            write_summary(&rows, output(out.as_deref())?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
