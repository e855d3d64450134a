//! Batch experiments: complete-data tables, consistency curves and
//! incomplete-data EM tables.
//!
//! Every artifact is a pure function of the configuration and its master
//! seed. Replication `r` draws its Brownian path from `seed.child(r).child(0)`
//! and, for the k-th keep fraction, runs EM under `seed.child(r).child(1 + k)`.
//! Replications run in parallel and are reduced in index order, so serial
//! and parallel runs agree bit for bit.

use std::fs;
use std::io::Write;
use std::path::{Path as FsPath, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::em::{run_em, EmConfig, EmTrace};
use crate::error::{Error, Result, ResultExt};
use crate::estimators::{estimate_joint, estimate_sigma_qv, EstimatorConfig, ThetaEstimate};
use crate::io::{fmt_f64, Format};
use crate::model::{Params, Path, TimeGrid};
use crate::rng::RngSeed;
use crate::simulate::{sample_brownian, simulate_exact, subsample, Selection};
use crate::stats::{mean, SummaryRow};

pub const SCHEMA_VERSION: u32 = 1;

/// Largest share of failed replications tolerated before an experiment aborts.
pub const MAX_FAILURE_PCT: f64 = 5.0;

/// Version string embedded in every artifact.
pub const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (",
    env!("SGLDE_GIT_DESCRIBE"),
    ")"
);

pub fn version() -> String {
    format!("sglde {VERSION}")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    /// Table 1: estimation from complete paths.
    Complete,
    /// Estimates on growing horizons of one path.
    Consistency,
    /// Tables 2 and 3: EM on subsampled paths.
    Incomplete,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}
fn default_x0() -> f64 {
    0.05
}
fn default_replications() -> usize {
    1
}
fn default_fractions() -> Vec<f64> {
    vec![0.1, 0.01]
}
fn default_grid() -> TimeGrid {
    TimeGrid::new(0.0, 10.0, 10_000).expect("valid default grid")
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Experiment and command configuration, read from JSON.
///
/// ```json
/// {
///   "schema_version": 1,
///   "kind": "complete",
///   "label": "case1",
///   "params": {"alpha": 0.7, "m": 0.6, "sigma": 0.01},
///   "x0": 0.05,
///   "grid": {"t0": 0.0, "T": 10.0, "n": 10000},
///   "replications": 200,
///   "seed": 20240501
/// }
/// ```
///
/// Optional keys: `keep_fractions` (incomplete runs), `horizons`
/// (consistency runs), `em`, `estimator`, `out_dir`, and `input` (a stored
/// path or observation file for `estimate` and `em`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub kind: Option<Kind>,
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub params: Option<Params>,
    #[serde(default = "default_x0")]
    pub x0: f64,
    #[serde(default = "default_grid")]
    pub grid: TimeGrid,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_fractions")]
    pub keep_fractions: Vec<f64>,
    #[serde(default)]
    pub horizons: Option<Vec<f64>>,
    #[serde(default)]
    pub em: EmConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub input: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(file: &FsPath) -> Result<Self> {
        let s = fs::read_to_string(file)
            .map_err(|e| Error::Config(format!("{}: {e}", file.display())))?;
        Self::from_json(&s).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", file.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.x0 > 0.0 && self.x0 < 1.0) {
            return Err(Error::Config(format!(
                "x0 must lie in (0, 1), got {}",
                self.x0
            )));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if let Some(f) = self
            .keep_fractions
            .iter()
            .find(|f| !(**f > 0.0 && **f <= 1.0))
        {
            return Err(Error::Config(format!(
                "keep_fractions entries must lie in (0, 1], got {f}"
            )));
        }
        if let Some(h) = &self.horizons {
            let (t0, t1) = (self.grid.t0(), self.grid.t_end());
            if let Some(t) = h.iter().find(|t| !(**t > t0 && **t <= t1)) {
                return Err(Error::Config(format!(
                    "horizons must lie in ({t0}, {t1}], got {t}"
                )));
            }
        }
        self.em
            .validate()
            .map_err(|e| Error::Config(format!("em: {e}")))?;
        self.estimator
            .validate()
            .map_err(|e| Error::Config(format!("estimator: {e}")))?;
        Ok(())
    }

    pub fn params(&self) -> Result<Params> {
        self.params
            .ok_or_else(|| Error::Config("missing field `params`".into()))
    }

    pub fn master_seed(&self) -> RngSeed {
        RngSeed::new(self.seed, 0)
    }

    /// SHA-256 of the canonical JSON form of the configuration, leaving out
    /// the output directory.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serialises");
        if let Some(map) = value.as_object_mut() {
            map.remove("out_dir");
        }
        let canonical = value.to_string();
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn label_or(&self, fallback: &str) -> String {
        if self.label.is_empty() {
            fallback.to_string()
        } else {
            self.label.clone()
        }
    }
}

/// Provenance written at the top of every artifact.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metadata {
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub label: String,
    pub x0: f64,
    pub grid: TimeGrid,
    pub replications: usize,
    pub failures: usize,
}

impl Metadata {
    pub fn new(cfg: &ExperimentConfig, failures: usize) -> Self {
        Self {
            version: version(),
            config_sha256: cfg.hash(),
            seed: cfg.seed,
            label: cfg.label.clone(),
            x0: cfg.x0,
            grid: cfg.grid,
            replications: cfg.replications,
            failures,
        }
    }

    pub(crate) fn write_header<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "# version: {}", self.version)?;
        writeln!(out, "# config_sha256: {}", self.config_sha256)?;
        writeln!(out, "# seed: {}", self.seed)?;
        writeln!(out, "# label: {}", self.label)?;
        writeln!(out, "# x0: {}", self.x0)?;
        writeln!(
            out,
            "# grid: t0={} T={} n={} delta={}",
            self.grid.t0(),
            self.grid.t_end(),
            self.grid.n(),
            self.grid.delta()
        )?;
        writeln!(
            out,
            "# replications: {} (failed: {})",
            self.replications, self.failures
        )?;
        Ok(())
    }
}

/// Simulates replication `r` of the configured model.
pub fn simulate_replication(cfg: &ExperimentConfig, r: usize) -> Result<Path> {
    let params = cfg.params()?;
    let seed = cfg.master_seed().child(r as u64).child(0);
    simulate_exact(
        &params,
        cfg.x0,
        &cfg.grid,
        &sample_brownian(&cfg.grid, seed),
    )
}

fn check_failures(failed: usize, total: usize) -> Result<()> {
    if failed as f64 > MAX_FAILURE_PCT / 100.0 * total as f64 {
        return Err(Error::TooManyFailures {
            failed,
            total,
            limit_pct: MAX_FAILURE_PCT,
        });
    }
    Ok(())
}

fn summary_rows(truth: &Params, est: &[(f64, f64, f64)]) -> Vec<SummaryRow> {
    let col = |j: usize| -> Vec<f64> { est.iter().map(|e| [e.0, e.1, e.2][j]).collect() };
    vec![
        SummaryRow::new("alpha", truth.alpha(), &col(0)),
        SummaryRow::new("m", truth.m(), &col(1)),
        SummaryRow::new("sigma", truth.sigma(), &col(2)),
    ]
}

/// Outcome of one complete-data replication.
#[derive(Clone, Debug, PartialEq)]
pub struct Replication {
    pub index: usize,
    pub estimate: std::result::Result<ThetaEstimate, String>,
    /// σ̂ on the same path at twice the mesh step.
    pub sigma_2delta: Option<f64>,
}

impl Replication {
    fn usable(&self) -> Option<&ThetaEstimate> {
        self.estimate.as_ref().ok().filter(|e| e.converged)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompleteReport {
    pub rows: Vec<SummaryRow>,
    pub replications: Vec<Replication>,
    pub failures: usize,
}

fn every_other(path: &Path) -> Result<Path> {
    let g = path.grid();
    let n = g.n() / 2;
    let grid = TimeGrid::new(g.t0(), g.t0() + 2.0 * n as f64 * g.delta(), n)?;
    Path::new(
        grid,
        path.values()
            .iter()
            .step_by(2)
            .take(n + 1)
            .copied()
            .collect(),
    )
}

/// Simulates R paths, estimates (α, m, σ) on each and summarises.
/// Failed or unconverged replications are excluded and counted.
pub fn run_complete_experiment(cfg: &ExperimentConfig) -> Result<CompleteReport> {
    let truth = cfg.params()?;
    let replications: Vec<Replication> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let result = simulate_replication(cfg, r)
                .at_stage(format!("replication {r}: simulation"))
                .and_then(|p| {
                    let est =
                        estimate_joint(&p, &cfg.estimator).at_stage(format!("replication {r}"))?;
                    let s2 = every_other(&p).and_then(|q| estimate_sigma_qv(&q)).ok();
                    Ok((est, s2))
                });
            match result {
                Ok((est, s2)) => Replication {
                    index: r,
                    estimate: Ok(est),
                    sigma_2delta: s2,
                },
                Err(e) => Replication {
                    index: r,
                    estimate: Err(e.to_string()),
                    sigma_2delta: None,
                },
            }
        })
        .collect();
    let ok: Vec<(f64, f64, f64)> = replications
        .iter()
        .filter_map(|r| r.usable().map(|e| (e.alpha_hat, e.m_hat, e.sigma_hat)))
        .collect();
    let failures = cfg.replications - ok.len();
    check_failures(failures, cfg.replications)?;
    Ok(CompleteReport {
        rows: summary_rows(&truth, &ok),
        replications,
        failures,
    })
}

const SUMMARY_HEADER: [&str; 7] = ["parameter", "truth", "pe", "q_lo", "q_hi", "mse", "count"];

fn summary_record(r: &SummaryRow) -> Vec<String> {
    vec![
        r.parameter.clone(),
        fmt_f64(r.truth),
        fmt_f64(r.pe),
        fmt_f64(r.q_lo),
        fmt_f64(r.q_hi),
        fmt_f64(r.mse),
        r.count.to_string(),
    ]
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Opens `dir/name`, writes the metadata header and hands a CSV writer to `body`.
fn write_csv_file(
    dir: &FsPath,
    name: &str,
    meta: &Metadata,
    body: impl FnOnce(&mut csv::Writer<&mut fs::File>) -> Result<()>,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut f = fs::File::create(&path)?;
    meta.write_header(&mut f)?;
    {
        let mut w = csv::Writer::from_writer(&mut f);
        body(&mut w)?;
        w.flush()?;
    }
    Ok(path)
}

fn write_json_file(
    dir: &FsPath,
    name: &str,
    meta: &Metadata,
    body: serde_json::Value,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let doc = serde_json::json!({ "meta": meta, "data": body });
    fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(path)
}

pub fn write_complete(
    cfg: &ExperimentConfig,
    report: &CompleteReport,
    dir: &FsPath,
    format: Format,
) -> Result<Vec<PathBuf>> {
    let label = cfg.label_or("complete");
    let meta = Metadata::new(cfg, report.failures);
    if format == Format::Json {
        let raw: Vec<_> = report
            .replications
            .iter()
            .map(|r| match &r.estimate {
                Ok(e) => serde_json::json!({"rep": r.index, "estimate": e, "sigma_2delta": r.sigma_2delta}),
                Err(msg) => serde_json::json!({"rep": r.index, "error": msg}),
            })
            .collect();
        let body = serde_json::json!({ "summary": report.rows, "replications": raw });
        return Ok(vec![write_json_file(
            dir,
            &format!("table1_{label}.json"),
            &meta,
            body,
        )?]);
    }
    let table = write_csv_file(dir, &format!("table1_{label}.csv"), &meta, |w| {
        w.write_record(SUMMARY_HEADER)?;
        for r in &report.rows {
            w.write_record(summary_record(r))?;
        }
        Ok(())
    })?;
    let raw = write_csv_file(dir, &format!("estimates_{label}.csv"), &meta, |w| {
        w.write_record([
            "rep",
            "alpha",
            "m",
            "sigma",
            "converged",
            "residual",
            "sigma_2delta",
            "error",
        ])?;
        for r in &report.replications {
            let rec = match &r.estimate {
                Ok(e) => vec![
                    r.index.to_string(),
                    fmt_f64(e.alpha_hat),
                    fmt_f64(e.m_hat),
                    fmt_f64(e.sigma_hat),
                    e.converged.to_string(),
                    fmt_f64(e.residual),
                    opt(r.sigma_2delta),
                    String::new(),
                ],
                Err(msg) => vec![
                    r.index.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    "false".into(),
                    String::new(),
                    String::new(),
                    msg.clone(),
                ],
            };
            w.write_record(rec)?;
        }
        Ok(())
    })?;
    Ok(vec![table, raw])
}

/// Estimates on one path restricted to [t0, T_j].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConsistencyRow {
    #[serde(rename = "T")]
    pub horizon: f64,
    /// (α̂, m̂, σ̂); `None` where the estimators fail on the short horizon.
    pub estimate: Option<(f64, f64, f64)>,
}

/// Horizons every 0.25 time units up to the end of the grid.
pub fn default_horizons(grid: &TimeGrid) -> Vec<f64> {
    let span = grid.t_end() - grid.t0();
    let count = (span / 0.25).round().max(1.0) as usize;
    (1..=count)
        .map(|j| grid.t0() + span * j as f64 / count as f64)
        .collect()
}

/// Applies the joint estimator to `path` truncated at each horizon.
pub fn consistency_trace_for(
    path: &Path,
    horizons: &[f64],
    cfg: &EstimatorConfig,
) -> Vec<ConsistencyRow> {
    let g = path.grid();
    horizons
        .iter()
        .map(|&h| {
            let steps = ((h - g.t0()) / g.delta()).round() as usize;
            let estimate = path
                .truncate(steps.clamp(1, g.n()))
                .and_then(|p| estimate_joint(&p, cfg))
                .ok()
                .filter(|e| e.converged)
                .map(|e| (e.alpha_hat, e.m_hat, e.sigma_hat));
            ConsistencyRow {
                horizon: h,
                estimate,
            }
        })
        .collect()
}

/// Consistency curve for replication 0 of the configuration.
pub fn consistency_trace(cfg: &ExperimentConfig) -> Result<Vec<ConsistencyRow>> {
    let path = simulate_replication(cfg, 0)?;
    let horizons = cfg
        .horizons
        .clone()
        .unwrap_or_else(|| default_horizons(&cfg.grid));
    Ok(consistency_trace_for(&path, &horizons, &cfg.estimator))
}

/// ln|estimate − truth| per coordinate.
pub fn log_errors(row: &ConsistencyRow, truth: &Params) -> Option<(f64, f64, f64)> {
    row.estimate.map(|(a, m, s)| {
        (
            (a - truth.alpha()).abs().ln(),
            (m - truth.m()).abs().ln(),
            (s - truth.sigma()).abs().ln(),
        )
    })
}

pub fn write_consistency(
    cfg: &ExperimentConfig,
    rows: &[ConsistencyRow],
    dir: &FsPath,
    format: Format,
) -> Result<Vec<PathBuf>> {
    let truth = cfg.params()?;
    let failures = rows.iter().filter(|r| r.estimate.is_none()).count();
    let meta = Metadata::new(cfg, failures);
    if format == Format::Json {
        let body: Vec<_> = rows
            .iter()
            .map(|r| serde_json::json!({"T": r.horizon, "estimate": r.estimate, "log_error": log_errors(r, &truth)}))
            .collect();
        return Ok(vec![write_json_file(
            dir,
            "consistency.json",
            &meta,
            serde_json::Value::Array(body),
        )?]);
    }
    let split = |e: Option<(f64, f64, f64)>| match e {
        Some((a, m, s)) => [fmt_f64(a), fmt_f64(m), fmt_f64(s)],
        None => Default::default(),
    };
    let est = write_csv_file(dir, "consistency.csv", &meta, |w| {
        w.write_record(["T", "alpha_hat", "m_hat", "sigma_hat"])?;
        for r in rows {
            let [a, m, s] = split(r.estimate);
            w.write_record([fmt_f64(r.horizon), a, m, s])?;
        }
        Ok(())
    })?;
    let err = write_csv_file(dir, "log_error.csv", &meta, |w| {
        w.write_record(["T", "log_err_alpha", "log_err_m", "log_err_sigma"])?;
        for r in rows {
            let [a, m, s] = split(log_errors(r, &truth));
            w.write_record([fmt_f64(r.horizon), a, m, s])?;
        }
        Ok(())
    })?;
    Ok(vec![est, err])
}

/// One dataset of an incomplete-data experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub index: usize,
    /// Complete-data estimate on the full path.
    pub complete: std::result::Result<ThetaEstimate, String>,
    /// EM trace per keep fraction, in configuration order.
    pub traces: Vec<std::result::Result<EmTrace, String>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IncompleteReport {
    pub fractions: Vec<f64>,
    /// Complete-information summary.
    pub complete: Vec<SummaryRow>,
    /// Final-iteration EM summary per fraction.
    pub em: Vec<Vec<SummaryRow>>,
    /// Per-iteration averages of (α, m, σ, fallback fraction) per fraction.
    pub mean_traces: Vec<Vec<[f64; 4]>>,
    pub datasets: Vec<Dataset>,
    pub failures: usize,
}

pub fn run_incomplete_experiment(cfg: &ExperimentConfig) -> Result<IncompleteReport> {
    let truth = cfg.params()?;
    let master = cfg.master_seed();
    let datasets: Vec<Dataset> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let path = match simulate_replication(cfg, r) {
                Ok(p) => p,
                Err(e) => {
                    let msg = e.at(format!("replication {r}: simulation")).to_string();
                    return Dataset {
                        index: r,
                        complete: Err(msg.clone()),
                        traces: vec![Err(msg); cfg.keep_fractions.len()],
                    };
                }
            };
            let complete = estimate_joint(&path, &cfg.estimator).map_err(|e| e.to_string());
            let traces = cfg
                .keep_fractions
                .iter()
                .enumerate()
                .map(|(k, &f)| {
                    let em = EmConfig {
                        seed: master.child(r as u64).child(1 + k as u64),
                        ..cfg.em
                    };
                    subsample(&path, &Selection::Fraction(f))
                        .and_then(|obs| run_em(&obs, &em))
                        .map_err(|e| {
                            e.at(format!("replication {r}, keep fraction {f}"))
                                .to_string()
                        })
                })
                .collect();
            Dataset {
                index: r,
                complete,
                traces,
            }
        })
        .collect();

    let complete: Vec<(f64, f64, f64)> = datasets
        .iter()
        .filter_map(|d| {
            d.complete
                .as_ref()
                .ok()
                .map(|e| (e.alpha_hat, e.m_hat, e.sigma_hat))
        })
        .collect();
    let mut failures = cfg.replications - complete.len();
    let mut em = Vec::new();
    let mut mean_traces = Vec::new();
    for k in 0..cfg.keep_fractions.len() {
        let ok: Vec<&EmTrace> = datasets
            .iter()
            .filter_map(|d| d.traces[k].as_ref().ok())
            .collect();
        check_failures(cfg.replications - ok.len(), cfg.replications)?;
        failures += cfg.replications - ok.len();
        let finals: Vec<(f64, f64, f64)> = ok.iter().map(|t| t.final_theta()).collect();
        em.push(summary_rows(&truth, &finals));
        let len = ok.iter().map(|t| t.rows.len()).min().unwrap_or(0);
        mean_traces.push(
            (0..len)
                .map(|i| {
                    let pick = |f: fn(&crate::em::EmTraceRow) -> f64| {
                        mean(&ok.iter().map(|t| f(&t.rows[i])).collect::<Vec<_>>())
                    };
                    [
                        pick(|r| r.alpha),
                        pick(|r| r.m),
                        pick(|r| r.sigma),
                        pick(|r| r.fallback_fraction),
                    ]
                })
                .collect(),
        );
    }
    check_failures(cfg.replications - complete.len(), cfg.replications)?;
    Ok(IncompleteReport {
        fractions: cfg.keep_fractions.clone(),
        complete: summary_rows(&truth, &complete),
        em,
        mean_traces,
        datasets,
        failures,
    })
}

fn pct(f: f64) -> String {
    format!("{}%", f * 100.0)
}

pub fn write_incomplete(
    cfg: &ExperimentConfig,
    rep: &IncompleteReport,
    dir: &FsPath,
    format: Format,
) -> Result<Vec<PathBuf>> {
    let label = cfg.label_or("incomplete");
    let meta = Metadata::new(cfg, rep.failures);
    if format == Format::Json {
        let body = serde_json::json!({
            "fractions": rep.fractions,
            "complete": rep.complete,
            "em": rep.em,
            "mean_traces": rep.mean_traces,
        });
        return Ok(vec![write_json_file(
            dir,
            &format!("table2_{label}.json"),
            &meta,
            body,
        )?]);
    }
    let table2 = write_csv_file(dir, &format!("table2_{label}.csv"), &meta, |w| {
        w.write_record([
            "fraction",
            "parameter",
            "truth",
            "empe",
            "q_lo",
            "q_hi",
            "mse",
            "count",
        ])?;
        for (f, rows) in rep.fractions.iter().zip(&rep.em) {
            for r in rows {
                let mut rec = vec![fmt_f64(*f)];
                rec.extend(summary_record(r));
                w.write_record(rec)?;
            }
        }
        Ok(())
    })?;
    let trace = write_csv_file(dir, &format!("em_trace_{label}.csv"), &meta, |w| {
        w.write_record([
            "fraction",
            "iter",
            "alpha",
            "m",
            "sigma",
            "fallback_fraction",
        ])?;
        for (f, rows) in rep.fractions.iter().zip(&rep.mean_traces) {
            for (i, r) in rows.iter().enumerate() {
                w.write_record([
                    fmt_f64(*f),
                    i.to_string(),
                    fmt_f64(r[0]),
                    fmt_f64(r[1]),
                    fmt_f64(r[2]),
                    fmt_f64(r[3]),
                ])?;
            }
        }
        Ok(())
    })?;
    let table3 = write_csv_file(dir, &format!("table3_{label}.csv"), &meta, |w| {
        w.write_record(["scenario", "parameter", "truth", "estimate", "mse"])?;
        let mut put = |scenario: &str, rows: &[SummaryRow]| -> Result<()> {
            for r in rows {
                w.write_record([
                    scenario.to_string(),
                    r.parameter.clone(),
                    fmt_f64(r.truth),
                    fmt_f64(r.pe),
                    fmt_f64(r.mse),
                ])?;
            }
            Ok(())
        };
        put("CI", &rep.complete)?;
        for (f, rows) in rep.fractions.iter().zip(&rep.em) {
            put(&pct(*f), rows)?;
        }
        Ok(())
    })?;
    let raw = write_csv_file(dir, &format!("em_estimates_{label}.csv"), &meta, |w| {
        w.write_record([
            "rep",
            "scenario",
            "alpha",
            "m",
            "sigma",
            "converged",
            "fallback_fraction",
            "error",
        ])?;
        for d in &rep.datasets {
            let mut put =
                |scenario: String, row: std::result::Result<[String; 5], String>| -> Result<()> {
                    let rec = match row {
                        Ok([a, m, s, c, fb]) => {
                            [d.index.to_string(), scenario, a, m, s, c, fb, String::new()]
                        }
                        Err(e) => [
                            d.index.to_string(),
                            scenario,
                            String::new(),
                            String::new(),
                            String::new(),
                            "false".into(),
                            String::new(),
                            e,
                        ],
                    };
                    w.write_record(rec)?;
                    Ok(())
                };
            put(
                "CI".into(),
                d.complete.as_ref().map_err(Clone::clone).map(|e| {
                    [
                        fmt_f64(e.alpha_hat),
                        fmt_f64(e.m_hat),
                        fmt_f64(e.sigma_hat),
                        e.converged.to_string(),
                        String::new(),
                    ]
                }),
            )?;
            for (f, t) in rep.fractions.iter().zip(&d.traces) {
                put(
                    pct(*f),
                    t.as_ref().map_err(Clone::clone).map(|t| {
                        let r = t.last();
                        [
                            fmt_f64(r.alpha),
                            fmt_f64(r.m),
                            fmt_f64(r.sigma),
                            r.converged.to_string(),
                            fmt_f64(r.fallback_fraction),
                        ]
                    }),
                )?;
            }
        }
        Ok(())
    })?;
    Ok(vec![table2, trace, table3, raw])
}

/// Runs the configured experiment and writes its artifacts under `dir`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    dir: &FsPath,
    format: Format,
) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    match cfg.kind {
        Some(Kind::Complete) => write_complete(cfg, &run_complete_experiment(cfg)?, dir, format),
        Some(Kind::Consistency) => write_consistency(cfg, &consistency_trace(cfg)?, dir, format),
        Some(Kind::Incomplete) => {
            write_incomplete(cfg, &run_incomplete_experiment(cfg)?, dir, format)
        }
        None => Err(Error::Config(
            "missing field `kind` (complete, consistency or incomplete)".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(json: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(json).unwrap()
    }

    #[test]
    fn defaults_and_unknown_fields() {
        let c = ExperimentConfig::default();
        assert_eq!(c.x0, 0.05);
        assert_eq!(c.grid.n(), 10_000);
        assert_eq!(c.keep_fractions, vec![0.1, 0.01]);
        let err = ExperimentConfig::from_json(r#"{"replicates": 3}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("replicates"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"x0": 1.5}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("x0"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"em": {"n_bridges": 0}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("em"), "{err}");
    }

    #[test]
    fn hash_ignores_formatting() {
        let a = cfg(r#"{"seed": 3, "label": "x"}"#);
        let b = cfg("{\n  \"label\": \"x\",\n  \"seed\": 3\n}");
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), cfg(r#"{"seed": 4, "label": "x"}"#).hash());
        assert_eq!(
            a.hash(),
            cfg(r#"{"seed": 3, "label": "x", "out_dir": "elsewhere"}"#).hash()
        );
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn single_replication_summary() {
        let c = cfg(
            r#"{"kind":"complete","params":{"alpha":1,"m":2,"sigma":0.05},"replications":1,"seed":5}"#,
        );
        let rep = run_complete_experiment(&c).unwrap();
        let e = rep.replications[0].estimate.as_ref().unwrap();
        let a = &rep.rows[0];
        assert_eq!(a.pe, e.alpha_hat);
        assert_eq!((a.q_lo, a.q_hi), (e.alpha_hat, e.alpha_hat));
        assert_eq!(a.mse, (e.alpha_hat - 1.0).powi(2));
    }

    #[test]
    fn consistency_final_row_is_full_estimate() {
        let c = cfg(
            r#"{"kind":"consistency","params":{"alpha":1,"m":2,"sigma":0.05},"grid":{"t0":0,"T":10,"n":5000},"seed":7}"#,
        );
        let rows = consistency_trace(&c).unwrap();
        assert_eq!(rows.len(), 40);
        let path = simulate_replication(&c, 0).unwrap();
        let e = estimate_joint(&path, &c.estimator).unwrap();
        assert_eq!(
            rows.last().unwrap().estimate,
            Some((e.alpha_hat, e.m_hat, e.sigma_hat))
        );
    }

    #[test]
    fn failure_limit() {
        assert!(check_failures(5, 100).is_ok());
        assert!(matches!(
            check_failures(6, 100),
            Err(Error::TooManyFailures { .. })
        ));
    }
}
