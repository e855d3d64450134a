//! Command-line front end.
//!
//! Exit status is 0 on success, 1 for usage, configuration and I/O errors,
//! and 2 for numerical failures.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::em::{run_em, EmConfig};
use crate::error::{Error, Result};
use crate::estimators::estimate_joint;
use crate::harness::{run_experiment, simulate_replication, ExperimentConfig, Metadata, VERSION};
use crate::io::{
    fmt_f64, load_observations, load_path, observations_to_csv, observations_to_json, path_to_csv,
    path_to_json, Format,
};
use crate::simulate::{subsample, Selection};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sglde", version = VERSION, about = "Stochastic generalized logistic diffusion: simulation and inference")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file, or output directory for `experiment`. Defaults to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one exact path, optionally subsampled.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Keep this fraction of the grid points and write observations.
        #[arg(long)]
        keep_fraction: Option<f64>,
    },
    /// Estimate (alpha, m, sigma) from a stored path.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Path file (CSV or JSON); overrides `input` in the configuration.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run Monte-Carlo EM on stored observations.
    Em {
        #[command(flatten)]
        common: Common,
        /// Observation file (CSV or JSON); overrides `input` in the configuration.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run a configured batch experiment.
    Experiment {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(file) => ExperimentConfig::load(file)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn emit(out: &Option<PathBuf>, body: &[u8]) -> Result<()> {
    match out {
        Some(file) => {
            if let Some(dir) = file.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(file, body)?;
        }
        None => io::stdout().lock().write_all(body)?,
    }
    Ok(())
}

fn csv_with_meta(
    meta: &Metadata,
    body: impl FnOnce(&mut Vec<u8>) -> Result<()>,
) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    meta.write_header(&mut buf)?;
    body(&mut buf)?;
    Ok(buf)
}

fn input_file(flag: &Option<PathBuf>, cfg: &ExperimentConfig) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| cfg.input.clone())
        .ok_or_else(|| Error::Config("no input file (use --input or the `input` key)".into()))
}

fn simulate(common: &Common, keep_fraction: Option<f64>) -> Result<()> {
    let cfg = load_config(common)?;
    let path = simulate_replication(&cfg, 0)?;
    let meta = Metadata::new(&cfg, 0);
    let body = match (keep_fraction, common.format) {
        (None, Format::Csv) => csv_with_meta(&meta, |b| path_to_csv(&path, b))?,
        (None, Format::Json) => (path_to_json(&path)? + "\n").into_bytes(),
        (Some(f), format) => {
            let obs = subsample(&path, &Selection::Fraction(f))?;
            match format {
                Format::Csv => csv_with_meta(&meta, |b| observations_to_csv(&obs, b))?,
                Format::Json => (observations_to_json(&obs)? + "\n").into_bytes(),
            }
        }
    };
    emit(&common.out, &body)
}

fn estimate(common: &Common, input: &Option<PathBuf>) -> Result<()> {
    let cfg = load_config(common)?;
    let file = input_file(input, &cfg)?;
    let est = match load_path(&file) {
        Ok(path) => estimate_joint(&path, &cfg.estimator)?,
        Err(_) => estimate_joint(&load_observations(&file)?, &cfg.estimator)?,
    };
    let body = match common.format {
        Format::Json => (est.to_json()? + "\n").into_bytes(),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["alpha", "m", "sigma", "converged", "residual"])?;
            w.write_record([
                fmt_f64(est.alpha_hat),
                fmt_f64(est.m_hat),
                fmt_f64(est.sigma_hat),
                est.converged.to_string(),
                fmt_f64(est.residual),
            ])?;
            w.into_inner().map_err(|e| Error::Io(e.into_error()))?
        }
    };
    emit(&common.out, &body)
}

fn em(common: &Common, input: &Option<PathBuf>) -> Result<()> {
    let cfg = load_config(common)?;
    let obs = load_observations(&input_file(input, &cfg)?)?;
    let em_cfg = EmConfig {
        seed: cfg.master_seed(),
        ..cfg.em
    };
    let trace = run_em(&obs, &em_cfg)?;
    let body = match common.format {
        Format::Json => (trace.to_json()? + "\n").into_bytes(),
        Format::Csv => csv_with_meta(&Metadata::new(&cfg, 0), |b| trace.write_csv(b))?,
    };
    emit(&common.out, &body)
}

fn experiment(common: &Common) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(dir) = &common.out {
        cfg.out_dir = dir.clone();
    }
    for file in run_experiment(&cfg, &cfg.out_dir.clone(), common.format)? {
        println!("{}", file.display());
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate {
            common,
            keep_fraction,
        } => simulate(common, *keep_fraction),
        Command::Estimate { common, input } => estimate(common, input),
        Command::Em { common, input } => em(common, input),
        Command::Experiment { common } => experiment(common),
    }
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_USAGE
            }
        }
    }
}
