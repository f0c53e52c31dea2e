//! Regression helpers for decay rates.

use crate::error::{Error, Result};

/// Least-squares line through (x, y); returns (slope, intercept).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Least-squares slope of log(error) against log(v).
pub fn decay_slope(samples: &[(f64, f64)]) -> Result<f64> {
    if samples.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "decay slope needs at least 3 samples, got {}",
            samples.len()
        )));
    }
    if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidParameter(
            "velocities must be strictly ascending".into(),
        ));
    }
    if samples.iter().any(|s| !(s.0 > 0.0) || !(s.1 > 0.0)) {
        return Err(Error::InvalidParameter(
            "velocities and errors must be positive".into(),
        ));
    }
    let lx: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let ly: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    Ok(linear_fit(&lx, &ly).0)
}

/// Log-log slope without the sample-count floor, for two-point checks and ladders.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly).0
}
