//! Domain types: parameters, time meshes and sampled trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Carrying capacity. Every stochastic computation works on the rescaled
/// state, so it is fixed at one.
pub const CARRYING_CAPACITY: f64 = 1.0;

/// Parameters of dX = αX(1 − X^m)dt + σX dB.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr", into = "ParamsRepr")]
pub struct Params {
    alpha: f64,
    m: f64,
    sigma: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsRepr {
    alpha: f64,
    m: f64,
    sigma: f64,
}

impl TryFrom<ParamsRepr> for Params {
    type Error = Error;
    fn try_from(r: ParamsRepr) -> Result<Self> {
        Params::new(r.alpha, r.m, r.sigma)
    }
}

impl From<Params> for ParamsRepr {
    fn from(p: Params) -> Self {
        ParamsRepr {
            alpha: p.alpha,
            m: p.m,
            sigma: p.sigma,
        }
    }
}

impl Params {
    pub fn new(alpha: f64, m: f64, sigma: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::domain(
                "alpha",
                format!("{alpha} (must be finite and > 0)"),
            ));
        }
        if !m.is_finite() || m <= 0.0 {
            return Err(Error::domain("m", format!("{m} (must be finite and > 0)")));
        }
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::domain(
                "sigma",
                format!("{sigma} (must be finite and >= 0)"),
            ));
        }
        Ok(Self { alpha, m, sigma })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn k(&self) -> f64 {
        CARRYING_CAPACITY
    }

    /// Drift coefficient αx(1 − x^m).
    #[inline]
    pub fn drift(&self, x: f64) -> f64 {
        self.alpha * x * (1.0 - x.powf(self.m))
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Params::new(self.alpha, self.m, sigma)
    }
}

/// Uniform mesh t_i = t0 + i·delta, i = 0..=n.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct TimeGrid {
    t0: f64,
    t_end: f64,
    n: usize,
    delta: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridRepr {
    t0: f64,
    #[serde(rename = "T")]
    t_end: f64,
    n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
}

impl TryFrom<GridRepr> for TimeGrid {
    type Error = Error;
    fn try_from(r: GridRepr) -> Result<Self> {
        let grid = TimeGrid::new(r.t0, r.t_end, r.n)?;
        if let Some(d) = r.delta {
            if (d - grid.delta).abs() > 1e-12 * grid.delta {
                return Err(Error::domain(
                    "grid",
                    format!("delta {d} disagrees with (T - t0)/n = {}", grid.delta),
                ));
            }
        }
        Ok(grid)
    }
}

impl From<TimeGrid> for GridRepr {
    fn from(g: TimeGrid) -> Self {
        GridRepr {
            t0: g.t0,
            t_end: g.t_end,
            n: g.n,
            delta: Some(g.delta),
        }
    }
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, n: usize) -> Result<Self> {
        if !t0.is_finite() || !t_end.is_finite() || t_end <= t0 {
            return Err(Error::domain(
                "grid",
                format!("need finite t0 < T, got [{t0}, {t_end}]"),
            ));
        }
        if n == 0 {
            return Err(Error::domain("grid", "n must be at least 1"));
        }
        Ok(Self {
            t0,
            t_end,
            n,
            delta: (t_end - t0) / n as f64,
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        if i == self.n {
            self.t_end
        } else {
            self.t0 + i as f64 * self.delta
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n).map(move |i| self.time(i))
    }

    /// The first `steps` steps of this grid.
    pub fn prefix(&self, steps: usize) -> Result<TimeGrid> {
        if steps == 0 || steps > self.n {
            return Err(Error::domain(
                "grid prefix",
                format!("{steps} steps of {}", self.n),
            ));
        }
        if steps == self.n {
            return Ok(*self);
        }
        Ok(TimeGrid {
            t0: self.t0,
            t_end: self.t0 + steps as f64 * self.delta,
            n: steps,
            delta: self.delta,
        })
    }
}

/// How consecutive samples are separated in time.
#[derive(Clone, Copy, Debug)]
pub enum Spacing<'a> {
    Uniform(f64),
    Irregular(&'a [f64]),
}

impl Spacing<'_> {
    /// Length of the interval ending at sample `i` (i ≥ 1).
    #[inline]
    pub fn dt(&self, i: usize) -> f64 {
        match self {
            Spacing::Uniform(d) => *d,
            Spacing::Irregular(t) => t[i] - t[i - 1],
        }
    }
}

/// A positive trajectory sampled at increasing times.
pub trait Sampled {
    fn values(&self) -> &[f64];
    fn spacing(&self) -> Spacing<'_>;
    fn start_time(&self) -> f64;
    fn end_time(&self) -> f64;
}

fn check_positive(values: &[f64]) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::domain(
            "path",
            format!(
                "value {} at index {i} is not finite and positive",
                values[i]
            ),
        ));
    }
    Ok(())
}

/// Solution trajectory on a uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PathRepr", into = "PathRepr")]
pub struct Path {
    grid: TimeGrid,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathRepr {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl TryFrom<PathRepr> for Path {
    type Error = Error;
    fn try_from(r: PathRepr) -> Result<Self> {
        Path::new(r.grid, r.values)
    }
}

impl From<Path> for PathRepr {
    fn from(p: Path) -> Self {
        PathRepr {
            grid: p.grid,
            values: p.values,
        }
    }
}

impl Path {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() + 1 {
            return Err(Error::domain(
                "path",
                format!("{} values for a grid of {} steps", values.len(), grid.n()),
            ));
        }
        check_positive(&values)?;
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x0(&self) -> f64 {
        self.values[0]
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// The path restricted to its first `steps` steps.
    pub fn truncate(&self, steps: usize) -> Result<Path> {
        let grid = self.grid.prefix(steps)?;
        Ok(Path {
            grid,
            values: self.values[..=steps].to_vec(),
        })
    }

    pub fn to_trajectory(&self) -> Trajectory {
        Trajectory {
            times: self.grid.times().collect(),
            values: self.values.clone(),
            step: Some(self.grid.delta()),
        }
    }
}

impl Sampled for Path {
    fn values(&self) -> &[f64] {
        &self.values
    }
    fn spacing(&self) -> Spacing<'_> {
        Spacing::Uniform(self.grid.delta())
    }
    fn start_time(&self) -> f64 {
        self.grid.t0()
    }
    fn end_time(&self) -> f64 {
        self.grid.t_end()
    }
}

/// Standard Brownian motion on a grid; `values[0] = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct BrownianPath {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl BrownianPath {
    /// Cumulates the increments into a path starting at zero.
    pub fn from_increments(grid: TimeGrid, increments: &[f64]) -> Result<Self> {
        if increments.len() != grid.n() {
            return Err(Error::domain(
                "brownian increments",
                format!("{} increments for {} steps", increments.len(), grid.n()),
            ));
        }
        let mut values = Vec::with_capacity(grid.n() + 1);
        let mut b = 0.0;
        values.push(b);
        for dw in increments {
            b += dw;
            values.push(b);
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn increment(&self, i: usize) -> f64 {
        self.values[i + 1] - self.values[i]
    }
}

/// Positive samples at strictly increasing, possibly irregular, times.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    values: Vec<f64>,
    step: Option<f64>,
}

/// Relative tolerance under which irregular times are treated as a uniform mesh.
const UNIFORM_RTOL: f64 = 1e-9;

impl Trajectory {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::domain(
                "trajectory",
                format!("{} times vs {} values", times.len(), values.len()),
            ));
        }
        if times.len() < 2 {
            return Err(Error::domain("trajectory", "need at least two samples"));
        }
        if let Some(i) =
            (1..times.len()).find(|&i| !(times[i] > times[i - 1]) || !times[i].is_finite())
        {
            return Err(Error::domain(
                "trajectory",
                format!("times not strictly increasing at index {i}"),
            ));
        }
        check_positive(&values)?;
        let k = times.len() - 1;
        let mean = (times[k] - times[0]) / k as f64;
        let uniform = (1..times.len())
            .all(|i| ((times[i] - times[i - 1]) - mean).abs() <= UNIFORM_RTOL * mean);
        Ok(Self {
            times,
            values,
            step: uniform.then_some(mean),
        })
    }

    pub(crate) fn with_step(times: Vec<f64>, values: Vec<f64>, step: Option<f64>) -> Self {
        debug_assert_eq!(times.len(), values.len());
        Self {
            times,
            values,
            step,
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of gaps between consecutive samples.
    pub fn gaps(&self) -> usize {
        self.values.len() - 1
    }

    /// Mesh step when the sample times are uniform.
    pub fn uniform_step(&self) -> Option<f64> {
        self.step
    }
}

impl Sampled for Trajectory {
    fn values(&self) -> &[f64] {
        &self.values
    }
    fn spacing(&self) -> Spacing<'_> {
        match self.step {
            Some(d) => Spacing::Uniform(d),
            None => Spacing::Irregular(&self.times),
        }
    }
    fn start_time(&self) -> f64 {
        self.times[0]
    }
    fn end_time(&self) -> f64 {
        self.times[self.times.len() - 1]
    }
}

/// Sparse time-stamped records X(t_0), …, X(t_k), k ≥ 1.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet(Trajectory);

impl ObservationSet {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Trajectory::new(times, values).map(ObservationSet)
    }

    /// Number of gaps k.
    pub fn k(&self) -> usize {
        self.0.gaps()
    }

    pub fn as_trajectory(&self) -> &Trajectory {
        &self.0
    }
}

impl From<Trajectory> for ObservationSet {
    fn from(t: Trajectory) -> Self {
        ObservationSet(t)
    }
}

impl std::ops::Deref for ObservationSet {
    type Target = Trajectory;
    fn deref(&self) -> &Trajectory {
        &self.0
    }
}

impl Sampled for ObservationSet {
    fn values(&self) -> &[f64] {
        self.0.values()
    }
    fn spacing(&self) -> Spacing<'_> {
        self.0.spacing()
    }
    fn start_time(&self) -> f64 {
        self.0.start_time()
    }
    fn end_time(&self) -> f64 {
        self.0.end_time()
    }
}
