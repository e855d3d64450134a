//! Simulation and inference for the stochastic generalized logistic
//! differential equation
//!
//! ```text
//! dX = αX(1 − X^m) dt + σX dB,   X(t0) = x0,
//! ```
//!
//! with carrying capacity fixed at one.
//!
//! * [`simulate`]: closed-form and Euler–Maruyama path simulators.
//! * [`estimators`]: quadratic-variation σ̂, maximum-likelihood α̂ and m̂.
//! * [`bridges`]: diffusion bridges between sparse observations.
//! * [`em`]: Monte-Carlo EM for sparsely observed paths.
//! * [`harness`]: batch experiments and summary tables.

pub mod bridges;
pub mod cli;
pub mod em;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod model;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use model::{BrownianPath, ObservationSet, Params, Path, Sampled, TimeGrid, Trajectory};
pub use rng::RngSeed;
