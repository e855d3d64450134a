use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("invalid {what}: {detail}")]
    Domain { what: &'static str, detail: String },

    #[error("exponent {exponent:.6e} at step {index} exceeds the overflow threshold {threshold}")]
    Overflow {
        index: usize,
        exponent: f64,
        threshold: f64,
    },

    #[error("positivity guard floored {floored} of {steps} steps (first at step {first_index})")]
    PositivityGuard {
        floored: usize,
        steps: usize,
        first_index: usize,
    },

    #[error("non-finite integrand value at index {index}")]
    NonFinite { index: usize },

    #[error("degenerate path: {0}")]
    DegeneratePath(String),

    #[error("score has no sign change on [{lo}, {hi}] (g(lo) = {g_lo:.6e}, g(hi) = {g_hi:.6e})")]
    NoRoot {
        lo: f64,
        hi: f64,
        g_lo: f64,
        g_hi: f64,
    },

    #[error(
        "root search stopped after {iterations} iterations (best m = {best}, |g| = {residual:.6e})"
    )]
    NonConvergence {
        best: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("likelihood ratio is undefined for sigma = 0")]
    DegenerateMeasure,

    #[error("{failed} of {total} replications failed, above the {limit_pct}% limit")]
    TooManyFailures {
        failed: usize,
        total: usize,
        limit_pct: f64,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            what,
            detail: detail.into(),
        }
    }

    /// Wraps the error with a label naming the stage that produced it.
    pub fn at(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error beneath any stage labels.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures of the numerics rather than of the inputs' syntax.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::Overflow { .. }
                | Error::PositivityGuard { .. }
                | Error::NonFinite { .. }
                | Error::DegeneratePath(_)
                | Error::NoRoot { .. }
                | Error::NonConvergence { .. }
                | Error::DegenerateMeasure
                | Error::TooManyFailures { .. }
        )
    }
}

pub(crate) trait ResultExt<T> {
    fn at_stage(self, stage: impl Into<String>) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn at_stage(self, stage: impl Into<String>) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
