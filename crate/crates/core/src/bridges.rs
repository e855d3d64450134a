//! Diffusion bridges pinned at two observations, by the crossing method.
//!
//! A forward path is started at the left value `a` and an independent
//! forward path at the right value `b`; the second is reversed in time. If
//! the two cross, the bridge follows the first path up to the crossing and
//! the reversed second path after it. The reversed path is given the same
//! dynamics as the forward one, which is the usual approximation for ergodic
//! diffusions.
//!
//! When no crossing occurs within `max_attempts` tries, a log-linear
//! interpolation between `a` and `b` perturbed by a σ-scaled Brownian bridge
//! in log space is returned instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Params, Path, TimeGrid};
use crate::rng::{fill_normal, RngSeed, StreamRng};

pub const DEFAULT_MAX_ATTEMPTS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BridgeRequest {
    pub params: Params,
    pub a: f64,
    pub b: f64,
    pub subgrid: TimeGrid,
    pub max_attempts: usize,
    pub n_bridges: usize,
}

impl BridgeRequest {
    pub fn new(
        params: Params,
        a: f64,
        b: f64,
        subgrid: TimeGrid,
        max_attempts: usize,
        n_bridges: usize,
    ) -> Result<Self> {
        let r = Self {
            params,
            a,
            b,
            subgrid,
            max_attempts,
            n_bridges,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("a", self.a), ("b", self.b)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(
                    "bridge endpoint",
                    format!("{name} = {v} (must be > 0)"),
                ));
            }
        }
        if self.subgrid.n() < 2 {
            return Err(Error::domain("bridge subgrid", "need at least two steps"));
        }
        if self.max_attempts == 0 || self.n_bridges == 0 {
            return Err(Error::domain(
                "bridge request",
                "max_attempts and n_bridges must be at least 1",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BridgeMethod {
    Crossing,
    Fallback,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bridge {
    pub path: Path,
    pub attempts_used: usize,
    pub method: BridgeMethod,
}

/// Reusable buffers for repeated bridge draws on one subgrid.
///
/// Paths are generated as Y = X^{−m}, which satisfies
/// Y_i = (x0^{−m} + mα∫_0^{t_i} Z ds) / Z_i with Z = exp(m[(α − σ²/2)t + σB]),
/// the closed-form solution rewritten so that each step costs a single
/// exponential. Y is decreasing in X, so crossings of the Y paths are the
/// crossings of the X paths; X is recovered only for accepted bridges.
struct Sampler<'a> {
    req: &'a BridgeRequest,
    dw_forward: Vec<f64>,
    dw_backward: Vec<f64>,
    forward: Vec<f64>,
    backward: Vec<f64>,
}

impl<'a> Sampler<'a> {
    fn new(req: &'a BridgeRequest) -> Self {
        let n = req.subgrid.n();
        Self {
            req,
            dw_forward: vec![0.0; n],
            dw_backward: vec![0.0; n],
            forward: vec![0.0; n + 1],
            backward: vec![0.0; n + 1],
        }
    }

    /// Writes one bridge into `out` and returns (attempts, method).
    fn draw(&mut self, rng: &mut StreamRng, out: &mut [f64]) -> (usize, BridgeMethod) {
        let n = self.req.subgrid.n();
        let (a, b) = (self.req.a, self.req.b);
        let delta = self.req.subgrid.delta();
        let p = &self.req.params;
        for attempt in 1..=self.req.max_attempts {
            fill_normal(rng, delta, &mut self.dw_forward);
            fill_normal(rng, delta, &mut self.dw_backward);
            let mut back = YStepper::new(p, b, delta);
            self.backward[0] = back.y;
            for (i, dw) in self.dw_backward.iter().enumerate() {
                self.backward[i + 1] = back.step(*dw);
            }
            if !self.backward.iter().all(|y| y.is_finite()) {
                continue;
            }
            let mut fwd = YStepper::new(p, a, delta);
            self.forward[0] = fwd.y;
            let diff = |y: f64, i: usize| y - self.backward[n - i];
            let mut prev = diff(fwd.y, 0);
            let mut tau = (prev == 0.0).then_some(0);
            let mut i = 0;
            while tau.is_none() && i < n {
                let y = fwd.step(self.dw_forward[i]);
                i += 1;
                if !y.is_finite() {
                    break;
                }
                self.forward[i] = y;
                let d = diff(y, i);
                if is_crossing(prev, d) {
                    tau = Some(i);
                }
                prev = d;
            }
            if let Some(tau) = tau {
                let inv_m = -1.0 / p.m();
                for (j, o) in out.iter_mut().enumerate() {
                    let y = if j < tau {
                        self.forward[j]
                    } else {
                        self.backward[n - j]
                    };
                    *o = y.powf(inv_m);
                }
                out[0] = a;
                out[n] = b;
                return (attempt, BridgeMethod::Crossing);
            }
        }
        self.fallback(rng, out);
        (self.req.max_attempts, BridgeMethod::Fallback)
    }

    fn fallback(&mut self, rng: &mut StreamRng, out: &mut [f64]) {
        let n = self.req.subgrid.n();
        let (la, lb) = (self.req.a.ln(), self.req.b.ln());
        let sigma = self.req.params.sigma();
        fill_normal(rng, self.req.subgrid.delta(), &mut self.dw_forward);
        let w_end: f64 = self.dw_forward.iter().sum();
        let mut w = 0.0;
        for (i, o) in out.iter_mut().enumerate() {
            if i > 0 {
                w += self.dw_forward[i - 1];
            }
            let s = i as f64 / n as f64;
            *o = ((1.0 - s) * la + s * lb + sigma * (w - s * w_end)).exp();
        }
        out[0] = self.req.a;
        out[n] = self.req.b;
    }
}

/// Exact one-step recursion for Y = X^{−m}.
struct YStepper {
    y: f64,
    y0: f64,
    c: f64,
    m: f64,
    mu_dt: f64,
    sigma: f64,
    half_dt: f64,
    exponent: f64,
    z: f64,
    area: f64,
}

impl YStepper {
    fn new(p: &Params, x0: f64, delta: f64) -> Self {
        let y0 = x0.powf(-p.m());
        Self {
            y: y0,
            y0,
            c: p.m() * p.alpha(),
            m: p.m(),
            mu_dt: (p.alpha() - 0.5 * p.sigma() * p.sigma()) * delta,
            sigma: p.sigma(),
            half_dt: 0.5 * delta,
            exponent: 0.0,
            z: 1.0,
            area: 0.0,
        }
    }

    #[inline]
    fn step(&mut self, dw: f64) -> f64 {
        self.exponent += self.mu_dt + self.sigma * dw;
        let z = (self.m * self.exponent).exp();
        self.area += self.half_dt * (self.z + z);
        self.z = z;
        self.y = (self.y0 + self.c * self.area) / z;
        self.y
    }
}

/// A difference `d` following `prev` marks a crossing when it is zero or
/// has changed sign.
#[inline]
fn is_crossing(prev: f64, d: f64) -> bool {
    d == 0.0 || (d > 0.0) != (prev > 0.0)
}

pub fn sample_bridge(req: &BridgeRequest, seed: RngSeed) -> Result<Bridge> {
    req.validate()?;
    let mut rng = seed.rng();
    let mut sampler = Sampler::new(req);
    let mut out = vec![0.0; req.subgrid.n() + 1];
    let (attempts_used, method) = sampler.draw(&mut rng, &mut out);
    Ok(Bridge {
        path: Path::new(req.subgrid, out)?,
        attempts_used,
        method,
    })
}

/// Pointwise mean of `n_bridges` bridges, with the number that fell back.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalMean {
    pub path: Path,
    pub fallbacks: usize,
}

/// Monte-Carlo estimate of E[X | X(t_start) = a, X(t_end) = b] on the subgrid.
/// Bridges are drawn in sequence from one stream, so the first one equals
/// `sample_bridge` under the same seed.
pub fn conditional_mean_path(req: &BridgeRequest, seed: RngSeed) -> Result<ConditionalMean> {
    req.validate()?;
    let n = req.subgrid.n();
    let mut rng = seed.rng();
    let mut sampler = Sampler::new(req);
    let mut one = vec![0.0; n + 1];
    let mut sum = vec![0.0; n + 1];
    let mut fallbacks = 0;
    for _ in 0..req.n_bridges {
        let (_, method) = sampler.draw(&mut rng, &mut one);
        if method == BridgeMethod::Fallback {
            fallbacks += 1;
        }
        for (s, v) in sum.iter_mut().zip(&one) {
            *s += v;
        }
    }
    let inv = 1.0 / req.n_bridges as f64;
    for s in sum.iter_mut() {
        *s *= inv;
    }
    if req.n_bridges == 1 {
        sum.copy_from_slice(&one);
    }
    sum[0] = req.a;
    sum[n] = req.b;
    Ok(ConditionalMean {
        path: Path::new(req.subgrid, sum)?,
        fallbacks,
    })
}
