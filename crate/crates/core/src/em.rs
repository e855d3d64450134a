//! Monte-Carlo EM for sparsely observed paths.
//!
//! Each iteration fills every gap between consecutive observations with the
//! mean of `n_bridges` diffusion bridges sampled at the current parameters,
//! re-estimates (m, α) by maximum likelihood on the completed trajectory and
//! then σ by quadratic variation.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bridges::{conditional_mean_path, BridgeRequest, DEFAULT_MAX_ATTEMPTS};
use crate::error::{Error, Result, ResultExt};
use crate::estimators::{
    estimate_alpha_mle, estimate_joint, estimate_m_from, estimate_sigma_qv, score_m,
    EstimatorConfig, ThetaEstimate,
};
use crate::io::fmt_f64;
use crate::model::{ObservationSet, Params, Sampled, TimeGrid, Trajectory};
use crate::rng::RngSeed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    pub iterations: usize,
    pub n_bridges: usize,
    pub estimator: EstimatorConfig,
    pub seed: RngSeed,
    /// Target spacing of the completed trajectory; each gap gets
    /// round(gap / fine_step) sub-steps.
    pub fine_step: f64,
    pub max_attempts: usize,
    /// Stop once every coordinate of θ moves by less than this.
    pub early_stop: Option<f64>,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            iterations: 10,
            n_bridges: 100,
            estimator: EstimatorConfig::default(),
            seed: RngSeed::new(0, 0),
            fine_step: 1e-3,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            early_stop: None,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.n_bridges == 0 || self.max_attempts == 0 {
            return Err(Error::Config(
                "iterations, n_bridges and max_attempts must be at least 1".into(),
            ));
        }
        if !(self.fine_step > 0.0 && self.fine_step.is_finite()) {
            return Err(Error::Config(format!(
                "fine_step must be positive, got {}",
                self.fine_step
            )));
        }
        if let Some(e) = self.early_stop {
            if !(e > 0.0) {
                return Err(Error::Config(format!(
                    "early_stop must be positive, got {e}"
                )));
            }
        }
        self.estimator.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmState {
    pub iteration: usize,
    pub theta: ThetaEstimate,
    /// Observations joined by conditional-mean bridges.
    pub proposed: Trajectory,
    /// Share of bridges in the last E-step that used the fallback proposal.
    pub fallback_fraction: f64,
}

/// Complete-data estimators applied to the observations as a coarse path.
///
/// When g has no sign change on the bracket, m is taken at the smallest |g|
/// of a scan over the bracket and the estimate is marked unconverged.
pub fn em_initialize(obs: &ObservationSet, cfg: &EstimatorConfig) -> Result<ThetaEstimate> {
    if obs.values().windows(2).all(|w| w[0] == w[1]) {
        return Err(Error::DegeneratePath("observations are constant".into()));
    }
    match estimate_joint(obs, cfg) {
        Err(e) if matches!(e.root(), Error::NoRoot { .. }) => scan_initialize(obs, cfg),
        other => other,
    }
    .at_stage("initialisation")
}

fn scan_initialize(obs: &ObservationSet, cfg: &EstimatorConfig) -> Result<ThetaEstimate> {
    let (lo, hi) = cfg.bracket;
    let steps = 200;
    let mut best = (lo, f64::INFINITY);
    for j in 0..=steps {
        let m = lo * (hi / lo).powf(j as f64 / steps as f64);
        let g = score_m(obs, m)?.abs();
        if g < best.1 {
            best = (m, g);
        }
    }
    Ok(ThetaEstimate {
        alpha_hat: estimate_alpha_mle(obs, best.0)?,
        m_hat: best.0,
        sigma_hat: estimate_sigma_qv(obs)?,
        converged: false,
        residual: best.1,
        iterations: steps + 1,
        sigma_degenerate: false,
        values_above_one: obs.values().iter().any(|&x| x > 1.0),
    })
}

/// One E-step/M-step/σ-update cycle.
pub fn em_step(state: &EmState, obs: &ObservationSet, cfg: &EmConfig) -> Result<EmState> {
    let iteration = state.iteration + 1;
    let stage = |s: &str| format!("EM iteration {iteration}: {s}");
    let params = state.theta.params().at_stage(stage("current estimate"))?;
    let (proposed, fallback_fraction) =
        complete(obs, &params, cfg, iteration).at_stage(stage("E-step"))?;

    let root = estimate_m_from(&proposed, &cfg.estimator, Some(state.theta.m_hat))
        .at_stage(stage("M-step m"))?;
    let alpha = estimate_alpha_mle(&proposed, root.m).at_stage(stage("M-step alpha"))?;
    let sigma = estimate_sigma_qv(&proposed).at_stage(stage("sigma update"))?;
    let theta = ThetaEstimate {
        alpha_hat: alpha,
        m_hat: root.m,
        sigma_hat: sigma,
        converged: root.converged,
        residual: root.residual,
        iterations: root.iterations,
        sigma_degenerate: sigma == 0.0,
        values_above_one: proposed.values().iter().any(|&x| x > 1.0),
    };
    Ok(EmState {
        iteration,
        theta,
        proposed,
        fallback_fraction,
    })
}

/// Number of sub-steps used to bridge a gap of length `gap`.
pub fn substeps(gap: f64, fine_step: f64) -> usize {
    ((gap / fine_step).round() as usize).max(1)
}

/// Joins the observations with conditional-mean bridges; returns the
/// completed trajectory and the fallback fraction.
fn complete(
    obs: &ObservationSet,
    params: &Params,
    cfg: &EmConfig,
    iteration: usize,
) -> Result<(Trajectory, f64)> {
    let t = obs.times();
    let x = obs.values();
    let iter_seed = cfg.seed.child(iteration as u64);
    let pieces: Vec<Result<(Vec<f64>, Vec<f64>, usize, usize)>> = (1..t.len())
        .into_par_iter()
        .map(|i| {
            let n_sub = substeps(t[i] - t[i - 1], cfg.fine_step);
            if n_sub < 2 {
                return Ok((vec![t[i]], vec![x[i]], 0, 0));
            }
            let grid = TimeGrid::new(t[i - 1], t[i], n_sub)?;
            let req = BridgeRequest::new(
                *params,
                x[i - 1],
                x[i],
                grid,
                cfg.max_attempts,
                cfg.n_bridges,
            )?;
            let cm = conditional_mean_path(&req, iter_seed.child(i as u64 - 1))
                .at_stage(format!("gap {i}"))?;
            let times: Vec<f64> = grid.times().skip(1).collect();
            let values = cm.path.values()[1..].to_vec();
            Ok((times, values, cm.fallbacks, cfg.n_bridges))
        })
        .collect();

    let mut times = vec![t[0]];
    let mut values = vec![x[0]];
    let (mut fallbacks, mut bridges) = (0, 0);
    for p in pieces {
        let (ts, vs, f, b) = p?;
        times.extend(ts);
        values.extend(vs);
        fallbacks += f;
        bridges += b;
    }
    let fraction = if bridges == 0 {
        0.0
    } else {
        fallbacks as f64 / bridges as f64
    };
    Ok((Trajectory::new(times, values)?, fraction))
}

/// One row of the EM trace; iteration 0 is the initial estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmTraceRow {
    pub iter: usize,
    pub alpha: f64,
    pub m: f64,
    pub sigma: f64,
    pub fallback_fraction: f64,
    pub converged: bool,
}

impl EmTraceRow {
    fn new(iter: usize, theta: &ThetaEstimate, fallback_fraction: f64) -> Self {
        Self {
            iter,
            alpha: theta.alpha_hat,
            m: theta.m_hat,
            sigma: theta.sigma_hat,
            fallback_fraction,
            converged: theta.converged,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmTrace {
    pub rows: Vec<EmTraceRow>,
}

impl EmTrace {
    pub fn last(&self) -> &EmTraceRow {
        self.rows.last().expect("trace holds the initial estimate")
    }

    /// Final parameters as (α, m, σ).
    pub fn final_theta(&self) -> (f64, f64, f64) {
        let r = self.last();
        (r.alpha, r.m, r.sigma)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iter", "alpha", "m", "sigma", "fallback_fraction"])?;
        for r in &self.rows {
            w.write_record([
                r.iter.to_string(),
                fmt_f64(r.alpha),
                fmt_f64(r.m),
                fmt_f64(r.sigma),
                fmt_f64(r.fallback_fraction),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Runs `cfg.iterations` EM steps (fewer with early stopping) from the
/// initial estimate. The trace has one row per iteration plus the initial row.
pub fn run_em(obs: &ObservationSet, cfg: &EmConfig) -> Result<EmTrace> {
    run_em_states(obs, cfg, |_| {}).map(|(trace, _)| trace)
}

/// [`run_em`] that also hands every state to `inspect` and returns the last one.
pub fn run_em_states(
    obs: &ObservationSet,
    cfg: &EmConfig,
    mut inspect: impl FnMut(&EmState),
) -> Result<(EmTrace, EmState)> {
    cfg.validate()?;
    let theta = em_initialize(obs, &cfg.estimator)?;
    let mut rows = vec![EmTraceRow::new(0, &theta, 0.0)];
    let mut state = EmState {
        iteration: 0,
        theta,
        proposed: obs.as_trajectory().clone(),
        fallback_fraction: 0.0,
    };
    for _ in 0..cfg.iterations {
        let next = em_step(&state, obs, cfg)?;
        inspect(&next);
        rows.push(EmTraceRow::new(
            next.iteration,
            &next.theta,
            next.fallback_fraction,
        ));
        let settled = cfg.early_stop.is_some_and(|eps| {
            let (a, b) = (&state.theta, &next.theta);
            (a.alpha_hat - b.alpha_hat).abs() < eps
                && (a.m_hat - b.m_hat).abs() < eps
                && (a.sigma_hat - b.sigma_hat).abs() < eps
        });
        state = next;
        if settled {
            break;
        }
    }
    Ok((EmTrace { rows }, state))
}
