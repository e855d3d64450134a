//! Complete-observation estimators.
//!
//! Discretisation conventions used throughout:
//! * stochastic integrals ∫ f(X) dX are left-endpoint (Itô) sums,
//! * time integrals ∫ f(X) dt use the trapezoidal rule.
//!
//! Every estimator below is assembled from [`ito_integral`] and
//! [`lebesgue_integral`], or from the same sums applied to precomputed
//! integrand values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ResultExt};
use crate::model::{Params, Sampled, Spacing};

/// Σ f_{i−1}·inc_i over i = 1..n.
fn left_sum(f: &[f64], increments: impl Iterator<Item = f64>) -> f64 {
    f.iter().zip(increments).map(|(fi, d)| fi * d).sum()
}

/// Σ (Δ_i/2)(f_{i−1} + f_i).
fn trapezoid(spacing: Spacing<'_>, f: &[f64]) -> f64 {
    match spacing {
        Spacing::Uniform(d) => {
            let n = f.len() - 1;
            let inner: f64 = f[1..n].iter().sum();
            d * (0.5 * (f[0] + f[n]) + inner)
        }
        Spacing::Irregular(_) => (1..f.len())
            .map(|i| 0.5 * spacing.dt(i) * (f[i - 1] + f[i]))
            .sum(),
    }
}

fn check_finite(f: &[f64]) -> Result<()> {
    match f.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

fn eval<S: Sampled + ?Sized>(path: &S, f: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    let v: Vec<f64> = path.values().iter().map(|&x| f(x)).collect();
    check_finite(&v)?;
    Ok(v)
}

fn increments(x: &[f64]) -> impl Iterator<Item = f64> + '_ {
    x.windows(2).map(|w| w[1] - w[0])
}

/// Itô sum Σ f(X_{i−1})(X_i − X_{i−1}).
pub fn ito_integral<S: Sampled + ?Sized>(path: &S, f: impl Fn(f64) -> f64) -> Result<f64> {
    let fv = eval(path, f)?;
    Ok(ito_values(path, &fv))
}

/// Trapezoidal Σ (Δ/2)(f(X_{i−1}) + f(X_i)).
pub fn lebesgue_integral<S: Sampled + ?Sized>(path: &S, f: impl Fn(f64) -> f64) -> Result<f64> {
    let fv = eval(path, f)?;
    Ok(trapezoid(path.spacing(), &fv))
}

/// [`ito_integral`] over integrand values already evaluated on the path.
pub fn ito_values<S: Sampled + ?Sized>(path: &S, f: &[f64]) -> f64 {
    debug_assert_eq!(f.len(), path.values().len());
    left_sum(f, increments(path.values()))
}

/// [`lebesgue_integral`] over integrand values already evaluated on the path.
pub fn lebesgue_values<S: Sampled + ?Sized>(path: &S, f: &[f64]) -> f64 {
    debug_assert_eq!(f.len(), path.values().len());
    trapezoid(path.spacing(), f)
}

/// σ̂ = sqrt( Σ(ΔX)² / ∫X² dt ), i.e. sqrt(2Σ(ΔX_i)² / Σ Δ_i(X_i² + X_{i−1}²)).
pub fn estimate_sigma_qv<S: Sampled + ?Sized>(path: &S) -> Result<f64> {
    let x = path.values();
    if x.len() < 2 {
        return Err(Error::domain("path", "need at least two samples"));
    }
    let qv: f64 = increments(x).map(|d| d * d).sum();
    let den = lebesgue_integral(path, |x| x * x)?;
    if !(den > 0.0) {
        return Err(Error::domain(
            "path",
            "zero quadratic-variation denominator",
        ));
    }
    Ok((qv / den).sqrt())
}

/// Smallest admissible ∫(1 − X^m)² dt.
pub const DEGENERACY_THRESHOLD: f64 = 1e-300;

/// α̂(m) = ∫(1 − X^m)/X dX / ∫(1 − X^m)² dt.
pub fn estimate_alpha_mle<S: Sampled + ?Sized>(path: &S, m: f64) -> Result<f64> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::domain("m", format!("{m}")));
    }
    let num = ito_integral(path, |x| (1.0 - x.powf(m)) / x)?;
    let den = lebesgue_integral(path, |x| {
        let u = 1.0 - x.powf(m);
        u * u
    })?;
    if den < DEGENERACY_THRESHOLD {
        return Err(Error::DegeneratePath(format!(
            "integral of (1 - X^m)^2 is {den:e} at m = {m}; path is pinned at equilibrium"
        )));
    }
    Ok(num / den)
}

/// Path data reused across evaluations of g.
struct ScoreCache<'a, S: Sampled + ?Sized> {
    path: &'a S,
    ln: Vec<f64>,
    inv: Vec<f64>,
}

impl<'a, S: Sampled + ?Sized> ScoreCache<'a, S> {
    fn new(path: &'a S) -> Self {
        let x = path.values();
        Self {
            path,
            ln: x.iter().map(|v| v.ln()).collect(),
            inv: x.iter().map(|v| 1.0 / v).collect(),
        }
    }

    fn g(&self, m: f64) -> Result<f64> {
        let n = self.ln.len();
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        let mut c = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        for (&l, &inv) in self.ln.iter().zip(&self.inv) {
            let p = (m * l).exp();
            let u = 1.0 - p;
            a.push(u * u);
            b.push(p * inv * -l);
            c.push(u * inv);
            d.push(p * u * -l);
        }
        for v in [&a, &b, &c, &d] {
            check_finite(v)?;
        }
        let p = self.path;
        Ok(lebesgue_values(p, &a) * ito_values(p, &b) - ito_values(p, &c) * lebesgue_values(p, &d))
    }
}

/// Profile score in m with α̂(m) substituted:
///
/// g(m) = [∫(1−X^m)² dt]·[∫X^{m−1}(−ln X) dX] − [∫(1−X^m)/X dX]·[∫X^m(1−X^m)(−ln X) dt].
///
/// Values above 1 are allowed; see [`ThetaEstimate::values_above_one`].
pub fn score_m<S: Sampled + ?Sized>(path: &S, m: f64) -> Result<f64> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::domain("m", format!("{m}")));
    }
    ScoreCache::new(path).g(m)
}

/// Root-search and fixed-point settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub bracket: (f64, f64),
    pub tol: f64,
    pub max_iter: usize,
    pub max_outer: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            bracket: (0.51, 50.0),
            tol: 1e-8,
            max_iter: 100,
            max_outer: 5,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bracket;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::domain(
                "bracket",
                format!("[{lo}, {hi}] (need 0 < lo < hi)"),
            ));
        }
        if !(self.tol > 0.0) {
            return Err(Error::domain("tol", format!("{}", self.tol)));
        }
        if self.max_iter == 0 || self.max_outer == 0 {
            return Err(Error::domain(
                "iterations",
                "max_iter and max_outer must be at least 1",
            ));
        }
        Ok(())
    }
}

/// Result of the root search for m.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MRoot {
    pub m: f64,
    /// |g(m)|.
    pub residual: f64,
    pub iterations: usize,
    /// |g(m)| ≤ tol at a point where the Newton step or the bracket has
    /// shrunk below `M_RTOL` relative. A search that ends on a collapsed
    /// bracket without meeting the residual test reports `false`.
    pub converged: bool,
}

/// Points of the log-spaced scan that locates the first sign change of g.
pub const SCAN_POINTS: usize = 64;

/// Relative step in m below which Newton is considered settled.
pub const M_RTOL: f64 = 1e-9;

/// Sign changes where |g| stays below this fraction of the largest scanned
/// |g| are round-off and ignored.
const NOISE_FRACTION: f64 = 1e-10;

/// Positive root of g on `bracket` by safeguarded Newton.
pub fn estimate_m<S: Sampled + ?Sized>(
    path: &S,
    bracket: (f64, f64),
    tol: f64,
    max_iter: usize,
) -> Result<MRoot> {
    let cfg = EstimatorConfig {
        bracket,
        tol,
        max_iter,
        ..EstimatorConfig::default()
    };
    estimate_m_from(path, &cfg, None)
}

/// First sub-interval of a log-spaced scan of `bracket` on which g changes
/// sign, ignoring changes at round-off level. g decays to zero as m grows on
/// paths below one, so spurious changes appear only far above the root.
fn first_sign_change(
    g: &impl Fn(f64) -> Result<f64>,
    (lo, hi): (f64, f64),
) -> Result<Option<(f64, f64, f64, f64)>> {
    let ms: Vec<f64> = (0..=SCAN_POINTS)
        .map(|i| {
            if i == SCAN_POINTS {
                hi
            } else {
                lo * (hi / lo).powf(i as f64 / SCAN_POINTS as f64)
            }
        })
        .collect();
    let gs = ms.iter().map(|&m| g(m)).collect::<Result<Vec<_>>>()?;
    let floor = NOISE_FRACTION * gs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok((0..SCAN_POINTS)
        .find(|&i| {
            let (a, b) = (gs[i], gs[i + 1]);
            (a == 0.0 || a.signum() != b.signum()) && a.abs().max(b.abs()) > floor
        })
        .map(|i| (ms[i], ms[i + 1], gs[i], gs[i + 1])))
}

/// [`estimate_m`] with an optional starting point inside the bracket.
pub fn estimate_m_from<S: Sampled + ?Sized>(
    path: &S,
    cfg: &EstimatorConfig,
    start: Option<f64>,
) -> Result<MRoot> {
    cfg.validate()?;
    let cache = ScoreCache::new(path);
    let g = |m: f64| cache.g(m);
    let tol = cfg.tol;
    let Some((mut lo, mut hi, g_lo, _)) = first_sign_change(&g, cfg.bracket)? else {
        let (lo, hi) = cfg.bracket;
        return Err(Error::NoRoot {
            lo,
            hi,
            g_lo: g(lo)?,
            g_hi: g(hi)?,
        });
    };
    if g_lo == 0.0 {
        return Ok(MRoot {
            m: lo,
            residual: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let lo_negative = g_lo < 0.0;

    let mut x = match start {
        Some(s) if s > lo && s < hi => s,
        _ => 0.5 * (lo + hi),
    };
    let mut best = (x, f64::INFINITY);
    for iter in 1..=cfg.max_iter {
        let gx = g(x)?;
        if gx.abs() < best.1 {
            best = (x, gx.abs());
        }
        if gx == 0.0 {
            return Ok(MRoot {
                m: x,
                residual: 0.0,
                iterations: iter,
                converged: true,
            });
        }
        if (gx < 0.0) == lo_negative {
            lo = x;
        } else {
            hi = x;
        }
        let xtol = M_RTOL * x.max(1.0);
        let h = 1e-6 * x.max(1.0);
        let dg = (g(x + h)? - g(x - h)?) / (2.0 * h);
        let newton = x - gx / dg;
        if gx.abs() <= tol && ((newton - x).abs() <= xtol || hi - lo <= xtol) {
            return Ok(MRoot {
                m: x,
                residual: gx.abs(),
                iterations: iter,
                converged: true,
            });
        }
        if hi - lo <= xtol {
            return Ok(MRoot {
                m: best.0,
                residual: best.1,
                iterations: iter,
                converged: best.1 <= tol,
            });
        }
        x = if dg.abs() < 1e-14 || !newton.is_finite() || newton <= lo || newton >= hi {
            0.5 * (lo + hi)
        } else {
            newton
        };
    }
    Err(Error::NonConvergence {
        best: best.0,
        residual: best.1,
        iterations: cfg.max_iter,
    })
}

/// Joint estimate of (α, m, σ) from one trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    #[serde(rename = "alpha")]
    pub alpha_hat: f64,
    #[serde(rename = "m")]
    pub m_hat: f64,
    #[serde(rename = "sigma")]
    pub sigma_hat: f64,
    pub converged: bool,
    /// |g(m̂)|.
    pub residual: f64,
    #[serde(skip)]
    pub iterations: usize,
    /// σ̂ = 0: the likelihood ratio is undefined for this path.
    #[serde(skip)]
    pub sigma_degenerate: bool,
    /// Some samples exceed the carrying capacity.
    #[serde(skip)]
    pub values_above_one: bool,
}

impl ThetaEstimate {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parameters built from the estimate, if they are admissible.
    pub fn params(&self) -> Result<Params> {
        Params::new(self.alpha_hat, self.m_hat, self.sigma_hat)
    }
}

/// σ̂ by quadratic variation, then m̂ from g (which already embeds α̂), then α̂(m̂).
pub fn estimate_joint<S: Sampled + ?Sized>(
    path: &S,
    cfg: &EstimatorConfig,
) -> Result<ThetaEstimate> {
    let sigma = estimate_sigma_qv(path).at_stage("sigma")?;
    let mut root = estimate_m_from(path, cfg, None).at_stage("m")?;
    let mut alpha = estimate_alpha_mle(path, root.m).at_stage("alpha")?;
    let mut iterations = root.iterations;
    for _ in 1..cfg.max_outer {
        let next = estimate_m_from(path, cfg, Some(root.m)).at_stage("m")?;
        let next_alpha = estimate_alpha_mle(path, next.m).at_stage("alpha")?;
        iterations += next.iterations;
        let stable = (next.m - root.m).abs() <= cfg.tol && (next_alpha - alpha).abs() <= cfg.tol;
        root = next;
        alpha = next_alpha;
        if stable {
            break;
        }
    }
    Ok(ThetaEstimate {
        alpha_hat: alpha,
        m_hat: root.m,
        sigma_hat: sigma,
        converged: root.converged,
        residual: root.residual,
        iterations,
        sigma_degenerate: sigma == 0.0,
        values_above_one: path.values().iter().any(|&x| x > 1.0),
    })
}

/// Drift parameters θ = (α, m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub alpha: f64,
    pub m: f64,
}

impl Theta {
    pub fn new(alpha: f64, m: f64) -> Self {
        Self { alpha, m }
    }
}

impl From<&Params> for Theta {
    fn from(p: &Params) -> Self {
        Theta::new(p.alpha(), p.m())
    }
}

/// Girsanov log-likelihood ratio of θ against θ0 with common diffusion σ:
///
/// ∫ [α(1−X^m) − α0(1−X^{m0})]/(σ²X) dX − ½ ∫ [α²(1−X^m)² − α0²(1−X^{m0})²]/σ² dt.
pub fn log_likelihood_ratio<S: Sampled + ?Sized>(
    path: &S,
    theta: Theta,
    theta0: Theta,
    sigma: f64,
) -> Result<f64> {
    if sigma == 0.0 {
        return Err(Error::DegenerateMeasure);
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::domain("sigma", format!("{sigma}")));
    }
    let s2 = sigma * sigma;
    let u = |t: Theta, x: f64| t.alpha * (1.0 - x.powf(t.m));
    let dx = ito_integral(path, |x| (u(theta, x) - u(theta0, x)) / (s2 * x))?;
    let dt = lebesgue_integral(path, |x| {
        let (a, b) = (u(theta, x), u(theta0, x));
        (a * a - b * b) / s2
    })?;
    Ok(dx - 0.5 * dt)
}

/// Stochastic and time integrals appearing in the consistency argument.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyDiagnostics {
    /// ∫ X^m̂ ln X dB.
    pub i1: f64,
    /// ∫ (1 − X^m̂) dB.
    pub i2: f64,
    /// ∫ X^m̂ ln X dt.
    pub j1: f64,
    /// ∫ (1 − X^m̂)² dt.
    pub j2: f64,
    /// ∫ X^{2m̂} ln X dt.
    pub j3: f64,
    /// ∫ X^m̂ (X^{m0} − X^m̂) ln X dt.
    pub cal_j1: f64,
    /// ∫ (1 − X^m̂)(X^m̂ − X^{m0}) dt.
    pub cal_j2: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

/// Evaluates [`ConsistencyDiagnostics`] at `m_hat`. The Brownian increments
/// are recovered from the path using the true parameters:
/// ΔB_i = (ΔX_i − α0 X_{i−1}(1 − X_{i−1}^{m0})Δ_i) / (σ X_{i−1}).
pub fn consistency_diagnostics<S: Sampled + ?Sized>(
    path: &S,
    m_hat: f64,
    truth: &Params,
) -> Result<ConsistencyDiagnostics> {
    let sigma = truth.sigma();
    if !(sigma > 0.0) {
        return Err(Error::DegenerateMeasure);
    }
    if !(m_hat > 0.0 && m_hat.is_finite()) {
        return Err(Error::domain("m_hat", format!("{m_hat}")));
    }
    let x = path.values();
    let spacing = path.spacing();
    let db: Vec<f64> = (1..x.len())
        .map(|i| (x[i] - x[i - 1] - truth.drift(x[i - 1]) * spacing.dt(i)) / (sigma * x[i - 1]))
        .collect();
    let m0 = truth.m();
    let stoch = |f: &dyn Fn(f64) -> f64| -> Result<f64> {
        let fv = eval(path, f)?;
        Ok(left_sum(&fv, db.iter().copied()))
    };
    Ok(ConsistencyDiagnostics {
        i1: stoch(&|x: f64| x.powf(m_hat) * x.ln())?,
        i2: stoch(&|x: f64| 1.0 - x.powf(m_hat))?,
        j1: lebesgue_integral(path, |x| x.powf(m_hat) * x.ln())?,
        j2: lebesgue_integral(path, |x| (1.0 - x.powf(m_hat)).powi(2))?,
        j3: lebesgue_integral(path, |x| x.powf(2.0 * m_hat) * x.ln())?,
        cal_j1: lebesgue_integral(path, |x| {
            x.powf(m_hat) * (x.powf(m0) - x.powf(m_hat)) * x.ln()
        })?,
        cal_j2: lebesgue_integral(path, |x| {
            (1.0 - x.powf(m_hat)) * (x.powf(m_hat) - x.powf(m0))
        })?,
        horizon: path.end_time() - path.start_time(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Path, TimeGrid, Trajectory};
    use crate::rng::RngSeed;
    use crate::simulate::{deterministic_solution, sample_brownian, simulate_exact};
    use proptest::prelude::*;

    fn sim(alpha: f64, m: f64, sigma: f64, n: usize, t_end: f64, seed: u64) -> Path {
        let p = Params::new(alpha, m, sigma).unwrap();
        let g = TimeGrid::new(0.0, t_end, n).unwrap();
        simulate_exact(&p, 0.05, &g, &sample_brownian(&g, RngSeed::new(seed, 0))).unwrap()
    }

    fn path_of(values: Vec<f64>, t_end: f64) -> Path {
        let g = TimeGrid::new(0.0, t_end, values.len() - 1).unwrap();
        Path::new(g, values).unwrap()
    }

    #[test]
    fn ito_hand_values() {
        let p = path_of(vec![1.0, 2.0, 4.0], 2.0);
        assert_eq!(ito_integral(&p, |_| 1.0).unwrap(), 3.0);
        assert_eq!(ito_integral(&p, |x| x).unwrap(), 5.0);
    }

    #[test]
    fn ito_matches_loop() {
        let p = sim(1.0, 2.0, 0.05, 5000, 5.0, 3);
        let x = p.values();
        let mut oracle = 0.0;
        for i in 1..x.len() {
            oracle += (x[i] - x[i - 1]) / x[i - 1];
        }
        let got = ito_integral(&p, |x| 1.0 / x).unwrap();
        assert!(
            (got - oracle).abs() <= 1e-12 * oracle.abs().max(1.0),
            "{got} vs {oracle}"
        );
    }

    #[test]
    fn lebesgue_values_and_oracle() {
        let g = TimeGrid::new(0.0, 10.0, 1000).unwrap();
        let c = Path::new(g, vec![0.3; 1001]).unwrap();
        assert!((lebesgue_integral(&c, |_| 1.0).unwrap() - 10.0).abs() < 1e-12);
        assert!((lebesgue_integral(&c, |x| x * x).unwrap() - 0.09 * 10.0).abs() < 1e-12);

        let p = sim(0.7, 0.6, 0.01, 3000, 3.0, 9);
        let x = p.values();
        let d = p.grid().delta();
        let mut oracle = 0.0;
        for i in 1..x.len() {
            oracle += d / 2.0 * (x[i - 1].sin() + x[i].sin());
        }
        let got = lebesgue_integral(&p, f64::sin).unwrap();
        assert!((got - oracle).abs() <= 1e-12, "{got} vs {oracle}");
    }

    #[test]
    fn irregular_trapezoid() {
        let t = Trajectory::new(vec![0.0, 1.0, 3.0], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(
            lebesgue_integral(&t, |x| x).unwrap(),
            0.5 * (1.0 + 2.0) + 1.0 * (2.0 + 3.0)
        );
    }

    #[test]
    fn non_finite_integrand_reports_index() {
        let p = path_of(vec![0.5, 0.25, 0.5], 1.0);
        let err = ito_integral(&p, |x| if x < 0.3 { f64::NAN } else { x }).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1 }));
    }

    #[test]
    fn sigma_qv_matches_ratio_form() {
        let p = sim(1.0, 2.0, 0.05, 10_000, 10.0, 1);
        let x = p.values();
        let d = p.grid().delta();
        let (mut num, mut den) = (0.0, 0.0);
        for i in 1..x.len() {
            num += (x[i] - x[i - 1]).powi(2);
            den += x[i] * x[i] + x[i - 1] * x[i - 1];
        }
        let oracle = (2.0 * num / (d * den)).sqrt();
        let got = estimate_sigma_qv(&p).unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle, "{got} vs {oracle}");
        let c = path_of(vec![0.4; 11], 1.0);
        assert_eq!(estimate_sigma_qv(&c).unwrap(), 0.0);
    }

    #[test]
    fn sigma_bias_shrinks_with_finer_mesh() {
        // The n = 20000 path restricted to even indices is the n = 10000 path
        // driven by the same Brownian motion.
        let mut closer = 0;
        let runs = 200;
        for seed in 0..runs {
            let fine = sim(0.7, 0.6, 0.01, 20_000, 10.0, 1000 + seed);
            let coarse_vals: Vec<f64> = fine.values().iter().step_by(2).copied().collect();
            let coarse = path_of(coarse_vals, 10.0);
            let ef = (estimate_sigma_qv(&fine).unwrap() - 0.01).abs();
            let ec = (estimate_sigma_qv(&coarse).unwrap() - 0.01).abs();
            if ef < ec {
                closer += 1;
            }
        }
        assert!(closer as f64 >= 0.9 * runs as f64, "{closer}/{runs}");
    }

    #[test]
    fn alpha_noiseless_limit() {
        let g = TimeGrid::new(0.0, 10.0, 100_000).unwrap();
        let vals: Vec<f64> = g
            .times()
            .map(|t| deterministic_solution(1.0, 2.0, 1.0, 0.05, 0.0, t).unwrap())
            .collect();
        let p = Path::new(g, vals).unwrap();
        let a = estimate_alpha_mle(&p, 2.0).unwrap();
        assert!((a - 1.0).abs() < 1e-2, "{a}");
    }

    #[test]
    fn alpha_rejects_pinned_path() {
        let p = path_of(vec![1.0; 10], 1.0);
        assert!(matches!(
            estimate_alpha_mle(&p, 2.0),
            Err(Error::DegeneratePath(_))
        ));
    }

    #[test]
    fn score_zero_at_equilibrium() {
        let p = path_of(vec![1.0; 10], 1.0);
        assert_eq!(score_m(&p, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn score_matches_direct_integrals() {
        let p = sim(1.0, 2.0, 0.05, 4000, 4.0, 17);
        let m = 1.7;
        let a = lebesgue_integral(&p, |x| (1.0 - x.powf(m)).powi(2)).unwrap();
        let b = ito_integral(&p, |x| x.powf(m - 1.0) * -x.ln()).unwrap();
        let c = ito_integral(&p, |x| (1.0 - x.powf(m)) / x).unwrap();
        let d = lebesgue_integral(&p, |x| x.powf(m) * (1.0 - x.powf(m)) * -x.ln()).unwrap();
        let oracle = a * b - c * d;
        let got = score_m(&p, m).unwrap();
        assert!(
            (got - oracle).abs() <= 1e-10 * oracle.abs().max(1e-12),
            "{got} vs {oracle}"
        );
    }

    #[test]
    fn score_is_profile_derivative_of_likelihood() {
        // d/dm logL(α̂(m), m) = α̂(m)·g(m)/(σ² ∫(1−X^m)² dt).
        let p = sim(1.0, 2.0, 0.05, 5000, 10.0, 5);
        let sigma = 0.05;
        let base = Theta::new(1.0, 2.0);
        let prof = |m: f64| {
            let a = estimate_alpha_mle(&p, m).unwrap();
            log_likelihood_ratio(&p, Theta::new(a, m), base, sigma).unwrap()
        };
        let m = 2.3;
        let h = 1e-5;
        let fd = (prof(m + h) - prof(m - h)) / (2.0 * h);
        let den = lebesgue_integral(&p, |x| (1.0 - x.powf(m)).powi(2)).unwrap();
        let analytic =
            estimate_alpha_mle(&p, m).unwrap() * score_m(&p, m).unwrap() / (sigma * sigma * den);
        assert!(
            (fd - analytic).abs() <= 1e-5 * analytic.abs().max(1.0),
            "{fd} vs {analytic}"
        );
    }

    #[test]
    fn score_brackets_root() {
        let mut ok = 0;
        let runs = 500;
        for seed in 0..runs {
            let p = sim(1.0, 2.0, 0.05, 10_000, 10.0, 2000 + seed);
            let grid: Vec<f64> = (0..=75).map(|j| 0.5 + 0.1 * j as f64).collect();
            let gs: Vec<f64> = grid.iter().map(|&m| score_m(&p, m).unwrap()).collect();
            if gs.windows(2).any(|w| w[0].signum() != w[1].signum()) {
                ok += 1;
            }
        }
        assert!(ok as f64 >= 0.95 * runs as f64, "{ok}/{runs}");
    }

    fn brute_force_root(p: &Path, lo: f64, hi: f64) -> Option<f64> {
        let step = 1e-3;
        let mut a = lo;
        let mut ga = score_m(p, a).unwrap();
        while a < hi {
            let b = (a + step).min(hi);
            let gb = score_m(p, b).unwrap();
            if ga == 0.0 {
                return Some(a);
            }
            if ga.signum() != gb.signum() {
                let (mut l, mut r, mut gl) = (a, b, ga);
                for _ in 0..60 {
                    let mid = 0.5 * (l + r);
                    let gm = score_m(p, mid).unwrap();
                    if gm.signum() == gl.signum() {
                        l = mid;
                        gl = gm;
                    } else {
                        r = mid;
                    }
                }
                return Some(0.5 * (l + r));
            }
            a = b;
            ga = gb;
        }
        None
    }

    #[test]
    fn newton_agrees_with_brute_force() {
        for seed in 0..5 {
            let p = sim(1.0, 2.0, 0.05, 10_000, 10.0, 300 + seed);
            let r = estimate_m(&p, (0.51, 8.0), 1e-8, 100).unwrap();
            assert!(r.converged);
            assert!(r.residual <= 1e-8);
            assert!(score_m(&p, r.m).unwrap().abs() <= 1e-8);
            let b = brute_force_root(&p, 0.51, 8.0).unwrap();
            assert!((r.m - b).abs() < 1e-3, "{} vs {b}", r.m);
        }
    }

    #[test]
    fn no_sign_change_is_an_error() {
        let p = sim(1.0, 2.0, 0.05, 10_000, 10.0, 1);
        let r = estimate_m(&p, (0.51, 50.0), 1e-8, 100).unwrap();
        let err = estimate_m(&p, (r.m + 1.0, r.m + 2.0), 1e-8, 100).unwrap_err();
        assert!(matches!(err, Error::NoRoot { .. }));
    }

    #[test]
    fn max_iter_reports_best_iterate() {
        let p = sim(1.0, 2.0, 0.05, 10_000, 10.0, 1);
        match estimate_m(&p, (0.51, 50.0), 1e-30, 2) {
            Err(Error::NonConvergence {
                best, iterations, ..
            }) => {
                assert_eq!(iterations, 2);
                assert!(best > 0.51 && best < 50.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn joint_is_fixed_point() {
        let p = sim(1.0, 2.0, 0.05, 10_000, 10.0, 8);
        let cfg = EstimatorConfig::default();
        let e = estimate_joint(&p, &cfg).unwrap();
        assert!(e.converged);
        let again = estimate_m_from(&p, &cfg, Some(e.m_hat)).unwrap();
        let alpha = estimate_alpha_mle(&p, again.m).unwrap();
        assert!((again.m - e.m_hat).abs() <= cfg.tol);
        assert!((alpha - e.alpha_hat).abs() <= cfg.tol);
    }

    #[test]
    fn joint_on_noiseless_path() {
        // A discretised smooth path has quadratic variation of order Δ, so σ̂
        // vanishes only as the mesh is refined.
        let coarse = sim(1.0, 2.0, 0.0, 1_000, 10.0, 8);
        let fine = sim(1.0, 2.0, 0.0, 100_000, 10.0, 8);
        let cfg = EstimatorConfig::default();
        let ec = estimate_joint(&coarse, &cfg).unwrap();
        let ef = estimate_joint(&fine, &cfg).unwrap();
        assert!(
            ef.sigma_hat < 0.2 * ec.sigma_hat,
            "{} vs {}",
            ef.sigma_hat,
            ec.sigma_hat
        );
        assert!(
            (ef.alpha_hat - 1.0).abs() < 1e-2 && (ef.m_hat - 2.0).abs() < 5e-2,
            "{ef:?}"
        );
        assert!(matches!(
            log_likelihood_ratio(
                &fine,
                Theta::new(ef.alpha_hat, ef.m_hat),
                Theta::new(1.0, 2.0),
                0.0
            ),
            Err(Error::DegenerateMeasure)
        ));
        let flat = path_of(vec![0.5; 11], 1.0);
        assert_eq!(estimate_sigma_qv(&flat).unwrap(), 0.0);
    }

    #[test]
    fn theta_json_keys() {
        let e = ThetaEstimate {
            alpha_hat: 1.0,
            m_hat: 2.0,
            sigma_hat: 0.5,
            converged: true,
            residual: 0.0,
            iterations: 3,
            sigma_degenerate: false,
            values_above_one: false,
        };
        assert_eq!(
            e.to_json().unwrap(),
            r#"{"alpha":1.0,"m":2.0,"sigma":0.5,"converged":true,"residual":0.0}"#
        );
    }

    #[test]
    fn likelihood_ratio_identities() {
        let p = sim(1.0, 2.0, 0.05, 5000, 5.0, 4);
        let t = Theta::new(1.1, 1.8);
        let t0 = Theta::new(1.0, 2.0);
        assert_eq!(log_likelihood_ratio(&p, t0, t0, 0.05).unwrap(), 0.0);
        let ab = log_likelihood_ratio(&p, t, t0, 0.05).unwrap();
        let ba = log_likelihood_ratio(&p, t0, t, 0.05).unwrap();
        assert_eq!(ab, -ba);
    }

    #[test]
    fn diagnostics_signs_and_zeros() {
        let truth = Params::new(1.0, 2.0, 0.05).unwrap();
        let p = sim(1.0, 2.0, 0.05, 10_000, 10.0, 12);
        let d = consistency_diagnostics(&p, 2.0, &truth).unwrap();
        assert_eq!(d.cal_j1, 0.0);
        assert_eq!(d.cal_j2, 0.0);
        if p.values().iter().all(|&x| x < 1.0) {
            assert!(d.j1 < 0.0 && d.j2 > 0.0 && d.j3 < 0.0);
        }
        assert!((d.horizon - 10.0).abs() < 1e-12);
    }

    #[test]
    fn diagnostics_recover_brownian_increments() {
        let truth = Params::new(1.0, 2.0, 0.05).unwrap();
        let g = TimeGrid::new(0.0, 10.0, 10_000).unwrap();
        let b = sample_brownian(&g, RngSeed::new(77, 0));
        let p = simulate_exact(&truth, 0.05, &g, &b).unwrap();
        let d = consistency_diagnostics(&p, 1.5, &truth).unwrap();
        let x = p.values();
        let mut i1 = 0.0;
        let mut i2 = 0.0;
        for i in 0..g.n() {
            let xm = x[i].powf(1.5);
            i1 += xm * x[i].ln() * b.increment(i);
            i2 += (1.0 - xm) * b.increment(i);
        }
        // Left-point drift in the reconstruction costs O(Δ/σ) overall.
        assert!((d.i1 - i1).abs() < 5e-2, "{} vs {i1}", d.i1);
        assert!((d.i2 - i2).abs() < 5e-2, "{} vs {i2}", d.i2);
    }

    #[test]
    fn short_horizon_finds_first_sign_change() {
        // Paths stopped during growth: g is tiny for large m, and round-off
        // flips its sign near the top of the bracket.
        for seed in [900_000, 900_009] {
            let full = sim(1.0, 2.0, 0.05, 5000, 10.0, seed);
            let p = full.truncate(1250).unwrap();
            let r = estimate_m(&p, (0.51, 50.0), 1e-8, 100).unwrap();
            assert!(r.converged);
            let (mut lo, mut hi) = (0.51, 5.0);
            assert!(score_m(&p, lo).unwrap() > 0.0 && score_m(&p, hi).unwrap() < 0.0);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if score_m(&p, mid).unwrap() > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            assert!((r.m - lo).abs() < 1e-6, "seed {seed}: {} vs {lo}", r.m);
        }
    }

    proptest! {
        #[test]
        fn ito_of_constant_telescopes(values in prop::collection::vec(0.01f64..2.0, 2..60)) {
            let last = values[values.len() - 1];
            let first = values[0];
            let p = path_of(values, 1.0);
            let got = ito_integral(&p, |_| 1.0).unwrap();
            prop_assert!((got - (last - first)).abs() < 1e-12);
        }

        #[test]
        fn likelihood_antisymmetric(a in 0.2f64..3.0, m in 0.6f64..5.0, a0 in 0.2f64..3.0, m0 in 0.6f64..5.0, seed in 0u64..50) {
            let p = sim(1.0, 2.0, 0.05, 500, 5.0, seed);
            let x = log_likelihood_ratio(&p, Theta::new(a, m), Theta::new(a0, m0), 0.05).unwrap();
            let y = log_likelihood_ratio(&p, Theta::new(a0, m0), Theta::new(a, m), 0.05).unwrap();
            prop_assert_eq!(x, -y);
        }
    }
}
