use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posterior::{BayesProblem, InnerRule, MisfitSurrogate};
use crate::rng::{standard_normal_vec, stream};
use crate::subspace::ActiveSubspace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovRow {
    pub samples: usize,
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovStudy {
    pub rows: Vec<CovRow>,
    /// Per point (rows) and sample count (columns).
    pub per_point: Vec<Vec<f64>>,
    pub points_used: usize,
    /// Points dropped because the estimate `ĝ` was zero.
    pub excluded: usize,
}

/// Coefficient of variation of the Monte Carlo estimate of `ĝ(ŷ)` at
/// `ŷ = Ŵ1ᵀx` for prior draws `x`:
///
/// `sd(f(Ŵ1ŷ + Ŵ2ẑᵢ)) / (√M ĝ(ŷ))` with the `1/(M − 1)` sample standard
/// deviation. For `M = 1` the standard deviation is taken from the draws of
/// the largest `M` in the list at the same point.
///
/// Points come from stream 0 of `seed`; point `k` draws its inner samples
/// from stream `k + 1`, so results do not depend on the thread count.
pub fn coefficient_of_variation_study(
    problem: &BayesProblem,
    subspace: &ActiveSubspace,
    sample_counts: &[usize],
    n_points: usize,
    seed: u64,
) -> Result<CovStudy> {
    if sample_counts.is_empty() || sample_counts.contains(&0) {
        return Err(Error::InvalidArgument("sample counts must be nonempty and positive".into()));
    }
    if n_points == 0 {
        return Err(Error::InvalidArgument("need at least one point".into()));
    }
    let max_m = *sample_counts.iter().max().unwrap();
    if max_m < 2 {
        return Err(Error::InvalidArgument(
            "the largest sample count must be at least 2 to estimate a spread".into(),
        ));
    }
    let mut point_rng = stream(seed, 0);
    let ys: Vec<Vec<f64>> = (0..n_points)
        .map(|_| subspace.active_coordinates(&standard_normal_vec(&mut point_rng, subspace.dim())))
        .collect();

    let surrogates: Vec<MisfitSurrogate<'_>> = sample_counts
        .iter()
        .map(|&m| MisfitSurrogate::new(problem, subspace, InnerRule::MonteCarlo { samples: m }))
        .collect::<Result<_>>()?;
    let max_index = sample_counts.iter().position(|&m| m == max_m).unwrap();

    let per_point: Vec<Option<Vec<f64>>> = ys
        .par_iter()
        .enumerate()
        .map(|(k, y)| -> Result<Option<Vec<f64>>> {
            let mut rng = stream(seed, k as u64 + 1);
            let mut draws = Vec::with_capacity(sample_counts.len());
            for s in &surrogates {
                draws.push(s.inner_misfits(y, &mut rng)?.0);
            }
            let pooled_sd = sample_sd(&draws[max_index]);
            let mut row = Vec::with_capacity(sample_counts.len());
            for (&m, values) in sample_counts.iter().zip(&draws) {
                let g = values.iter().sum::<f64>() / m as f64;
                if g == 0.0 {
                    return Ok(None);
                }
                let sd = if m == 1 { pooled_sd } else { sample_sd(values) };
                row.push(sd / ((m as f64).sqrt() * g));
            }
            Ok(Some(row))
        })
        .collect::<Result<_>>()?;

    let excluded = per_point.iter().filter(|r| r.is_none()).count();
    let kept: Vec<Vec<f64>> = per_point.into_iter().flatten().collect();
    let rows = sample_counts
        .iter()
        .enumerate()
        .map(|(j, &m)| {
            let mut col: Vec<f64> = kept.iter().map(|r| r[j]).collect();
            let mean = if col.is_empty() {
                f64::NAN
            } else {
                col.iter().sum::<f64>() / col.len() as f64
            };
            CovRow {
                samples: m,
                mean,
                median: median(&mut col),
            }
        })
        .collect();
    Ok(CovStudy {
        rows,
        points_used: kept.len(),
        per_point: kept,
        excluded,
    })
}

fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
