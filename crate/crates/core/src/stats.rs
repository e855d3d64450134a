//! Summary statistics for replicated estimates.

use serde::{Deserialize, Serialize};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator).
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mu = mean(xs);
    (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Empirical quantile by linear interpolation between order statistics
/// (Hyndman–Fan type 7): h = (n − 1)p, Q = x_⌊h⌋ + (h − ⌊h⌋)(x_⌊h⌋+1 − x_⌊h⌋).
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    assert!(!xs.is_empty(), "quantile of an empty sample");
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let h = (s.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(s.len() - 1);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// Mean of (x − truth)².
pub fn mse(xs: &[f64], truth: f64) -> f64 {
    xs.iter().map(|x| (x - truth).powi(2)).sum::<f64>() / xs.len() as f64
}

/// One table row: point estimate, central 95% band and MSE against the truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub parameter: String,
    pub truth: f64,
    pub pe: f64,
    pub q_lo: f64,
    pub q_hi: f64,
    pub mse: f64,
    pub count: usize,
}

impl SummaryRow {
    pub fn new(parameter: &str, truth: f64, xs: &[f64]) -> Self {
        Self {
            parameter: parameter.to_string(),
            truth,
            pe: mean(xs),
            q_lo: quantile(xs, 0.025),
            q_hi: quantile(xs, 0.975),
            mse: mse(xs, truth),
            count: xs.len(),
        }
    }
}
