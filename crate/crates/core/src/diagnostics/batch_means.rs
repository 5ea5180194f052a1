use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Default batch exponent.
pub const DEFAULT_THETA: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchMeansInterval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    /// Standard error of the mean.
    pub se: f64,
    pub batch_size: usize,
    pub batches: usize,
}

impl BatchMeansInterval {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    /// Interval endpoints relative to `reference`.
    pub fn shifted(&self, reference: f64) -> (f64, f64) {
        (self.lower - reference, self.upper - reference)
    }
}

/// `⌊N^θ⌋`, snapping to the nearest integer when `N^θ` is one up to
/// rounding (so `N = 10⁶`, `θ = 2/3` gives exactly `10⁴`).
pub fn batch_size(n: usize, theta: f64) -> usize {
    let x = (n as f64).powf(theta);
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.max(1.0) {
        r as usize
    } else {
        x.floor() as usize
    }
}

/// Consistent batch-means confidence interval for the mean of `series`.
pub fn batch_means_ci(series: &[f64], theta: f64, level: f64) -> Result<BatchMeansInterval> {
    let n = series.len();
    if n < 100 {
        return Err(Error::InvalidArgument(format!(
            "batch means needs at least 100 values, got {n}"
        )));
    }
    if !(theta > 0.5 && theta < 1.0) {
        return Err(Error::InvalidArgument(format!("theta must lie in (1/2, 1), got {theta}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {level}")));
    }
    let b = batch_size(n, theta).max(1);
    let a = n / b;
    if a < 2 {
        return Err(Error::InvalidArgument(format!(
            "only {a} batch of size {b}; need at least 2"
        )));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let batch_means: Vec<f64> = series[..a * b]
        .chunks_exact(b)
        .map(|c| c.iter().sum::<f64>() / b as f64)
        .collect();
    let grand = batch_means.iter().sum::<f64>() / a as f64;
    let sigma2 = b as f64 / (a - 1) as f64 * batch_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let se = (sigma2 / n as f64).sqrt();
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    Ok(BatchMeansInterval {
        mean,
        lower: mean - z * se,
        upper: mean + z * se,
        se,
        batch_size: b,
        batches: a,
    })
}

/// Batch-means interval for the variance, from the centred squares.
pub fn batch_means_variance_ci(series: &[f64], theta: f64, level: f64) -> Result<BatchMeansInterval> {
    let n = series.len().max(1) as f64;
    let mean = series.iter().sum::<f64>() / n;
    let squares: Vec<f64> = series.iter().map(|x| (x - mean).powi(2)).collect();
    batch_means_ci(&squares, theta, level)
}
