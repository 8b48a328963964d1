use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// First four moments of a scalar sample: mean, unbiased variance,
/// standardized skewness and excess kurtosis (population estimators).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
    pub count: usize,
}

impl MomentSummary {
    pub fn as_array(&self) -> [f64; 4] {
        [self.m1, self.m2, self.m3, self.m4]
    }
}

pub fn compute_moment_summary(samples: &[f64]) -> Result<MomentSummary> {
    let count = samples.len();
    if count < 4 {
        return Err(Error::InvalidArgument(format!(
            "moment summary needs at least 4 samples, got {count}"
        )));
    }
    if !samples.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("moment samples".into()));
    }
    let n = count as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let (mut c2, mut c3, mut c4) = (0.0, 0.0, 0.0);
    for &x in samples {
        let d = x - mean;
        let d2 = d * d;
        c2 += d2;
        c3 += d2 * d;
        c4 += d2 * d2;
    }
    if c2 == 0.0 {
        return Err(Error::Degenerate(
            "zero variance; skewness and kurtosis are undefined".into(),
        ));
    }
    let pop_var = c2 / n;
    Ok(MomentSummary {
        m1: mean,
        m2: c2 / (n - 1.0),
        m3: (c3 / n) / pop_var.powf(1.5),
        m4: (c4 / n) / (pop_var * pop_var) - 3.0,
        count,
    })
}

/// Weights of the four moment differences; `-ln w_i` is the multiplier.
pub const DEFAULT_DDD_WEIGHTS: [f64; 4] = [0.4, 0.3, 0.2, 0.1];

fn validate_weights(w: &[f64; 4]) -> Result<()> {
    if let Some(bad) = w.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::InvalidArgument(format!(
            "DDD weights must lie in (0, 1), got {bad}"
        )));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "DDD weights must sum to 1, got {sum}"
        )));
    }
    Ok(())
}

/// Normalized difference of one moment, symmetric in its arguments.
pub fn normalized_difference(a: f64, b: f64) -> f64 {
    (a - b) / (1.0 + 0.5 * (a.abs() + b.abs()))
}

/// `sum_i -ln(w_i) |delta_i|` for precomputed normalized differences.
pub fn ddd_from_deltas(deltas: &[f64; 4], weights: &[f64; 4]) -> Result<f64> {
    validate_weights(weights)?;
    Ok(deltas
        .iter()
        .zip(weights)
        .map(|(d, w)| -w.ln() * d.abs())
        .sum())
}

/// Simplified distribution distance between two moment summaries.
pub fn compute_ddd(real: &MomentSummary, fake: &MomentSummary, weights: &[f64; 4]) -> Result<f64> {
    let (a, b) = (real.as_array(), fake.as_array());
    let deltas = std::array::from_fn(|i| normalized_difference(a[i], b[i]));
    ddd_from_deltas(&deltas, weights)
}
