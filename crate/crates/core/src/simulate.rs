//! Path generation: the deterministic Richards curve, Brownian paths, the
//! closed-form stochastic solution and an Euler–Maruyama cross-check.

use crate::error::{Error, Result};
use crate::model::{BrownianPath, ObservationSet, Params, Path, TimeGrid, Trajectory};
use crate::rng::{fill_normal, RngSeed};

/// Largest exponent accepted by the closed-form simulator; exp(700) is
/// within a factor 1e4 of f64::MAX.
pub const EXP_OVERFLOW_THRESHOLD: f64 = 700.0;

/// Closed-form solution of X' = αX(1 − (X/K)^m), X(t0) = x0:
/// X(t) = K / (1 + Q e^{−αm(t−t0)})^{1/m} with Q = (K/x0)^m − 1.
pub fn deterministic_solution(alpha: f64, m: f64, k: f64, x0: f64, t0: f64, t: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::domain("alpha", format!("{alpha}")));
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::domain("m", format!("{m}")));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::domain("K", format!("{k}")));
    }
    if !(x0 > 0.0 && x0 < k) {
        return Err(Error::domain("x0", format!("{x0} not in (0, {k})")));
    }
    if !(t >= t0) {
        return Err(Error::domain("t", format!("{t} precedes t0 = {t0}")));
    }
    if t == t0 {
        return Ok(x0);
    }
    let q = (k / x0).powf(m) - 1.0;
    Ok(k / (1.0 + q * (-alpha * m * (t - t0)).exp()).powf(1.0 / m))
}

/// Brownian motion on `grid`: N(0, delta) increments drawn in index order.
pub fn sample_brownian(grid: &TimeGrid, seed: RngSeed) -> BrownianPath {
    let mut rng = seed.rng();
    let mut dw = vec![0.0; grid.n()];
    fill_normal(&mut rng, grid.delta(), &mut dw);
    BrownianPath::from_increments(*grid, &dw).expect("increment count matches grid")
}

fn check_x0(x0: f64) -> Result<()> {
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(Error::domain(
            "x0",
            format!("{x0} (must be finite and > 0)"),
        ));
    }
    Ok(())
}

fn check_same_grid(grid: &TimeGrid, brownian: &BrownianPath) -> Result<()> {
    if brownian.grid() != grid {
        return Err(Error::domain(
            "brownian",
            "path was sampled on a different grid",
        ));
    }
    Ok(())
}

/// Closed-form trajectory driven by `brownian`:
///
/// X_i = x0·E_i·[1 + x0^m·α·m·A_i]^{−1/m},  E_i = exp[(α − σ²/2)(t_i − t0) + σB_i],
///
/// with A_i the trapezoidal approximation of ∫_{t0}^{t_i} E(s)^m ds on the grid.
/// Substituting Y = X^{−m} linearises the equation and gives this form; for
/// σ = 0 it reduces to the Richards curve.
pub fn simulate_exact(
    params: &Params,
    x0: f64,
    grid: &TimeGrid,
    brownian: &BrownianPath,
) -> Result<Path> {
    check_x0(x0)?;
    check_same_grid(grid, brownian)?;
    let mut out = vec![0.0; grid.n() + 1];
    exact_from_levels(params, x0, grid.delta(), brownian.values(), &mut out)?;
    Path::new(*grid, out)
}

/// Closed-form solution along Brownian levels `b` (b[0] = 0) on a mesh of step `delta`.
pub(crate) fn exact_from_levels(
    params: &Params,
    x0: f64,
    delta: f64,
    b: &[f64],
    out: &mut [f64],
) -> Result<()> {
    debug_assert_eq!(b.len(), out.len());
    let (alpha, m, sigma) = (params.alpha(), params.m(), params.sigma());
    let mu = alpha - 0.5 * sigma * sigma;
    let c = x0.powf(m) * alpha * m;
    let inv_m = 1.0 / m;
    let half = 0.5 * delta;

    out[0] = x0;
    let mut em_prev = 1.0;
    let mut area = 0.0;
    for i in 1..b.len() {
        let exponent = mu * (i as f64 * delta) + sigma * b[i];
        if exponent.max(m * exponent) > EXP_OVERFLOW_THRESHOLD {
            return Err(Error::Overflow {
                index: i,
                exponent,
                threshold: EXP_OVERFLOW_THRESHOLD,
            });
        }
        let em = (m * exponent).exp();
        area += half * (em_prev + em);
        out[i] = x0 * exponent.exp() * (1.0 + c * area).powf(-inv_m);
        em_prev = em;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug)]
pub struct EulerOptions {
    /// States below this are floored to it.
    pub floor: f64,
    /// Fail when more than this fraction of steps needed the floor.
    pub max_floored_fraction: f64,
}

impl Default for EulerOptions {
    fn default() -> Self {
        Self {
            floor: 1e-12,
            max_floored_fraction: 0.01,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EulerRun {
    pub path: Path,
    pub floored: usize,
}

/// Euler–Maruyama scheme X_{i+1} = X_i + αX_i(1 − X_i^m)Δ + σX_iΔB_i with the default guard.
pub fn simulate_euler(
    params: &Params,
    x0: f64,
    grid: &TimeGrid,
    brownian: &BrownianPath,
) -> Result<Path> {
    simulate_euler_with(params, x0, grid, brownian, &EulerOptions::default()).map(|r| r.path)
}

pub fn simulate_euler_with(
    params: &Params,
    x0: f64,
    grid: &TimeGrid,
    brownian: &BrownianPath,
    opts: &EulerOptions,
) -> Result<EulerRun> {
    check_x0(x0)?;
    check_same_grid(grid, brownian)?;
    let delta = grid.delta();
    let sigma = params.sigma();
    let mut values = Vec::with_capacity(grid.n() + 1);
    values.push(x0);
    let mut x = x0;
    let mut floored = 0;
    let mut first_floor = None;
    for i in 0..grid.n() {
        let mut next = x + params.drift(x) * delta + sigma * x * brownian.increment(i);
        if !(next >= opts.floor) {
            next = opts.floor;
            floored += 1;
            first_floor.get_or_insert(i + 1);
        }
        values.push(next);
        x = next;
    }
    if floored as f64 > opts.max_floored_fraction * grid.n() as f64 {
        return Err(Error::PositivityGuard {
            floored,
            steps: grid.n(),
            first_index: first_floor.unwrap_or(0),
        });
    }
    Ok(EulerRun {
        path: Path::new(*grid, values)?,
        floored,
    })
}

/// Which samples of a path to retain as observations.
#[derive(Clone, Debug, PartialEq)]
pub enum Selection {
    /// Every ⌈1/f⌉-th sample (rounded stride), plus the final one.
    Fraction(f64),
    /// Explicit sample indices; must contain 0 and n.
    Indices(Vec<usize>),
}

pub fn subsample(path: &Path, selection: &Selection) -> Result<ObservationSet> {
    let n = path.grid().n();
    let indices: Vec<usize> = match selection {
        Selection::Fraction(f) => {
            if !(*f > 0.0 && *f <= 1.0) {
                return Err(Error::domain("keep fraction", format!("{f} not in (0, 1]")));
            }
            let stride = ((1.0 / f).round() as usize).max(1);
            let mut idx: Vec<usize> = (0..=n).step_by(stride).collect();
            if *idx.last().unwrap() != n {
                idx.push(n);
            }
            idx
        }
        Selection::Indices(idx) => {
            if idx.first() != Some(&0) || idx.last() != Some(&n) {
                return Err(Error::domain(
                    "subsample indices",
                    format!("must start at 0 and end at {n} (both endpoints are always observed)"),
                ));
            }
            if let Some(w) = idx.windows(2).find(|w| w[1] <= w[0]) {
                return Err(Error::domain(
                    "subsample indices",
                    format!("not strictly increasing at {} -> {}", w[0], w[1]),
                ));
            }
            idx.clone()
        }
    };
    let grid = path.grid();
    let times: Vec<f64> = indices.iter().map(|&i| grid.time(i)).collect();
    let values: Vec<f64> = indices.iter().map(|&i| path.values()[i]).collect();
    if indices.len() < 2 {
        return Err(Error::domain("subsample", "fewer than two records"));
    }
    // Evenly strided selections inherit an exact mesh step.
    let stride = indices[1] - indices[0];
    let even = indices.windows(2).all(|w| w[1] - w[0] == stride);
    let step = even.then(|| stride as f64 * grid.delta());
    Ok(ObservationSet::from(Trajectory::with_step(
        times, values, step,
    )))
}
