use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Gaussian kernel density estimate in one or two dimensions with a
/// product kernel and Silverman's bandwidth per dimension,
/// `h_j = σ_j (4 / ((d + 2) n))^{1/(d+4)}`.
#[derive(Debug, Clone)]
pub struct Kde {
    points: Vec<Vec<f64>>,
    bandwidth: Vec<f64>,
}

pub const KDE_MIN_SAMPLES: usize = 30;

impl Kde {
    /// `samples` holds one row per sample.
    pub fn new(samples: &[Vec<f64>]) -> Result<Self> {
        let n = samples.len();
        if n < KDE_MIN_SAMPLES {
            return Err(Error::InvalidArgument(format!(
                "density estimate needs at least {KDE_MIN_SAMPLES} samples, got {n}"
            )));
        }
        let d = samples[0].len();
        if !(d == 1 || d == 2) || samples.iter().any(|s| s.len() != d) {
            return Err(Error::Dimension(
                "density estimates are limited to one or two columns".into(),
            ));
        }
        let factor = (4.0 / ((d as f64 + 2.0) * n as f64)).powf(1.0 / (d as f64 + 4.0));
        let mut bandwidth = Vec::with_capacity(d);
        for j in 0..d {
            let mean = samples.iter().map(|s| s[j]).sum::<f64>() / n as f64;
            let var = samples.iter().map(|s| (s[j] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            if !(var > 0.0) {
                return Err(Error::ZeroVariance);
            }
            bandwidth.push(var.sqrt() * factor);
        }
        Ok(Self {
            points: samples.to_vec(),
            bandwidth,
        })
    }

    /// Builds a 1-D estimate from a plain series.
    pub fn from_series(series: &[f64]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = series.iter().map(|&v| vec![v]).collect();
        Self::new(&rows)
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    pub fn dim(&self) -> usize {
        self.bandwidth.len()
    }

    pub fn density(&self, at: &[f64]) -> f64 {
        let norm: f64 = self.bandwidth.iter().map(|h| h * (2.0 * PI).sqrt()).product();
        let sum: f64 = self
            .points
            .iter()
            .map(|p| {
                let q: f64 = p
                    .iter()
                    .zip(at)
                    .zip(&self.bandwidth)
                    .map(|((x, a), h)| ((a - x) / h).powi(2))
                    .sum();
                (-0.5 * q).exp()
            })
            .sum();
        sum / (norm * self.points.len() as f64)
    }

    pub fn density_1d(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&x| self.density(&[x])).collect()
    }

    /// Densities on the tensor grid, first axis slowest.
    pub fn density_2d(&self, xs: &[f64], ys: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(xs.len() * ys.len());
        for &x in xs {
            for &y in ys {
                out.push(self.density(&[x, y]));
            }
        }
        out
    }
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Trapezoid rule on a uniform 1-D grid.
pub fn trapezoid(values: &[f64], step: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => step * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1])),
    }
}

/// Kullback–Leibler divergence from the standard normal of a 1-D sample,
/// `∫ p log(p/φ)` with `p` the kernel estimate on `[−8, 8]`.
pub fn kl_to_standard_normal(series: &[f64]) -> Result<f64> {
    let kde = Kde::from_series(series)?;
    let grid = linspace(-8.0, 8.0, 801);
    let step = grid[1] - grid[0];
    let p = kde.density_1d(&grid);
    let integrand: Vec<f64> = grid
        .iter()
        .zip(&p)
        .map(|(&x, &px)| {
            if px <= 1e-300 {
                0.0
            } else {
                px * (px.ln() + 0.5 * x * x + 0.5 * (2.0 * PI).ln())
            }
        })
        .collect();
    Ok(trapezoid(&integrand, step).max(0.0))
}
