use serde::{Deserialize, Serialize};

use super::acf::autocorrelation;
use crate::error::Result;

/// Number of autocorrelation lags summed in the ESS denominator.
pub const ESS_MAX_LAG: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EssEstimate {
    pub ess: f64,
    /// `1 + 2 Σ ρ_k` before flooring.
    pub denominator: f64,
    /// Lags actually summed.
    pub lags: usize,
    /// Fewer than [`ESS_MAX_LAG`] lags were available.
    pub truncated: bool,
    /// The denominator was below 1 and was floored.
    pub floored: bool,
}

/// `N / (1 + 2 Σ_{k=1}^{K} ρ_k)` with `K = min(2000, N − 1)`.
pub fn effective_sample_size(series: &[f64]) -> Result<EssEstimate> {
    let n = series.len();
    let lags = ESS_MAX_LAG.min(n.saturating_sub(1));
    let acf = autocorrelation(series, lags)?;
    let denominator = 1.0 + 2.0 * acf[1..].iter().sum::<f64>();
    let floored = denominator < 1.0;
    Ok(EssEstimate {
        ess: n as f64 / denominator.max(1.0),
        denominator,
        lags,
        truncated: lags < ESS_MAX_LAG,
        floored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::rng::{standard_normal_vec, stream};

    #[test]
    fn short_series_truncate() {
        let x = standard_normal_vec(&mut stream(0, 0), 500);
        let e = effective_sample_size(&x).unwrap();
        assert!(e.truncated);
        assert_eq!(e.lags, 499);
        assert!(e.ess > 0.0 && e.ess <= 500.0);
    }

    #[test]
    fn alternating_series_floors() {
        let x: Vec<f64> = (0..3000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let e = effective_sample_size(&x).unwrap();
        assert!(e.floored);
        assert_eq!(e.ess, 3000.0);
        assert!(!e.truncated);
    }

    #[test]
    fn zero_variance_is_an_error() {
        assert!(matches!(effective_sample_size(&[1.0; 10]), Err(Error::ZeroVariance)));
    }
}

#[cfg(test)]
mod long_tests {
    use super::*;
    use crate::rng::{standard_normal_vec, stream};

    // With 2000 summed lags the relative spread of the ESS is about
    // 2·√(2000/N), so the 10% tolerance needs N in the millions.
    #[test]
    fn independent_draws_give_ess_near_n() {
        let n = 8_000_000;
        let x = standard_normal_vec(&mut stream(17, 0), n);
        let e = effective_sample_size(&x).unwrap();
        assert!((e.ess / n as f64 - 1.0).abs() < 0.1, "{e:?}");
        assert!(!e.truncated);
    }
}
