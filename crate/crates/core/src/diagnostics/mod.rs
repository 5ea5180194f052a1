//! Chain-quality metrics: autocorrelation, effective sample size,
//! consistent batch means, kernel density estimates, the Monte Carlo
//! coefficient-of-variation study and grid Hellinger distances with the
//! posterior-approximation bounds.

mod acf;
mod batch_means;
mod cov;
mod ess;
mod hellinger;
mod kde;

pub use acf::autocorrelation;
pub use batch_means::{batch_means_ci, batch_means_variance_ci, batch_size, BatchMeansInterval, DEFAULT_THETA};
pub use cov::{coefficient_of_variation_study, CovRow, CovStudy};
pub use ess::{effective_sample_size, EssEstimate, ESS_MAX_LAG};
pub use hellinger::{
    hellinger_grid, l_constant, posterior_bounds, posterior_hellinger, Grid2d, HellingerResult, PosteriorBounds,
    EDGE_BAND, MIN_INTERIOR_MASS,
};
pub use kde::{kl_to_standard_normal, linspace, trapezoid, Kde, KDE_MIN_SAMPLES};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::sampler::{Chain, SpaceTag};

/// Intervals for the mean and the variance of one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentIntervals {
    pub mean: BatchMeansInterval,
    pub variance: BatchMeansInterval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub label: String,
    pub steps: usize,
    pub dim: usize,
    pub seed: Option<u64>,
    pub space: SpaceTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub ess: Vec<EssEstimate>,
    pub acf: Vec<Vec<f64>>,
    pub acceptance: f64,
    pub cbm_ci: Vec<MomentIntervals>,
    pub meta: ChainMeta,
}

impl DiagnosticsReport {
    pub fn min_ess(&self) -> f64 {
        self.ess.iter().map(|e| e.ess).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnoseOptions {
    /// Lags reported in the autocorrelation curves.
    pub acf_lags: usize,
    pub theta: f64,
    pub level: f64,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        Self {
            acf_lags: 100,
            theta: DEFAULT_THETA,
            level: 0.99,
        }
    }
}

/// Per-coordinate ESS, autocorrelation and batch-means intervals.
pub fn diagnose(chain: &Chain, label: &str, options: DiagnoseOptions) -> Result<DiagnosticsReport> {
    let columns: Vec<Vec<f64>> = (0..chain.dim()).map(|j| chain.coordinate(j)).collect();
    let lags = options.acf_lags.min(chain.len().saturating_sub(1));
    let per_coord: Vec<(EssEstimate, Vec<f64>, MomentIntervals)> = columns
        .par_iter()
        .map(|col| -> Result<_> {
            let ess = effective_sample_size(col)?;
            let acf = autocorrelation(col, lags)?;
            let mean = batch_means_ci(col, options.theta, options.level)?;
            let variance = batch_means_variance_ci(col, options.theta, options.level)?;
            Ok((ess, acf, MomentIntervals { mean, variance }))
        })
        .collect::<Result<_>>()?;
    let mut ess = Vec::with_capacity(per_coord.len());
    let mut acf = Vec::with_capacity(per_coord.len());
    let mut cbm_ci = Vec::with_capacity(per_coord.len());
    for (e, a, c) in per_coord {
        ess.push(e);
        acf.push(a);
        cbm_ci.push(c);
    }
    Ok(DiagnosticsReport {
        ess,
        acf,
        acceptance: chain.acceptance_rate(),
        cbm_ci,
        meta: ChainMeta {
            label: label.to_string(),
            steps: chain.len(),
            dim: chain.dim(),
            seed: chain.seed,
            space: chain.space,
        },
    })
}
