use serde::{Deserialize, Serialize};

use super::kde::linspace;
use crate::error::{Error, Result};
use crate::posterior::{log_standard_gaussian, BayesProblem, ConditionalExpectation};
use crate::subspace::ActiveSubspace;

/// Minimum share of the mass that must lie away from the grid edges.
pub const MIN_INTERIOR_MASS: f64 = 0.999;
/// Width of the edge band, as a fraction of each axis range.
pub const EDGE_BAND: f64 = 1.0 / 12.0;

/// Uniform tensor grid on a rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2d {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl Grid2d {
    pub fn new(x_range: (f64, f64), y_range: (f64, f64), nx: usize, ny: usize) -> Result<Self> {
        if nx < 3 || ny < 3 || !(x_range.1 > x_range.0) || !(y_range.1 > y_range.0) {
            return Err(Error::InvalidArgument(
                "grid needs at least three points per axis and increasing ranges".into(),
            ));
        }
        Ok(Self {
            xs: linspace(x_range.0, x_range.1, nx),
            ys: linspace(y_range.0, y_range.1, ny),
        })
    }

    /// `[−half_width, half_width]²` with `n` points per axis.
    pub fn square(half_width: f64, n: usize) -> Result<Self> {
        Self::new((-half_width, half_width), (-half_width, half_width), n, n)
    }

    pub fn len(&self) -> usize {
        self.xs.len() * self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid points, first axis slowest.
    pub fn points(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.xs.iter().flat_map(move |&x| self.ys.iter().map(move |&y| [x, y]))
    }

    /// Tensor trapezoid rule for values laid out like [`Grid2d::points`].
    pub fn integrate(&self, values: &[f64]) -> f64 {
        let (hx, hy) = (self.xs[1] - self.xs[0], self.ys[1] - self.ys[0]);
        let (nx, ny) = (self.xs.len(), self.ys.len());
        let mut total = 0.0;
        for i in 0..nx {
            let wi = if i == 0 || i == nx - 1 { 0.5 } else { 1.0 };
            for j in 0..ny {
                let wj = if j == 0 || j == ny - 1 { 0.5 } else { 1.0 };
                total += wi * wj * values[i * ny + j];
            }
        }
        total * hx * hy
    }

    fn in_edge_band(&self, i: usize, j: usize) -> bool {
        let near = |v: f64, axis: &[f64]| {
            let (lo, hi) = (axis[0], axis[axis.len() - 1]);
            let band = EDGE_BAND * (hi - lo);
            v < lo + band || v > hi - band
        };
        near(self.xs[i], &self.xs) || near(self.ys[j], &self.ys)
    }

    /// Normalises `exp(log_values)` on the grid and checks that the mass
    /// does not crowd the edges.
    fn normalised(&self, log_values: &[f64]) -> Result<Vec<f64>> {
        let max = log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::InvalidArgument("log-density is not finite on the grid".into()));
        }
        let mut p: Vec<f64> = log_values.iter().map(|l| (l - max).exp()).collect();
        let z = self.integrate(&p);
        p.iter_mut().for_each(|v| *v /= z);
        let ny = self.ys.len();
        let interior: Vec<f64> = p
            .iter()
            .enumerate()
            .map(|(k, &v)| if self.in_edge_band(k / ny, k % ny) { 0.0 } else { v })
            .collect();
        let mass = self.integrate(&interior);
        if mass < MIN_INTERIOR_MASS {
            return Err(Error::GridTooSmall { mass });
        }
        Ok(p)
    }
}

/// Hellinger distance between two unnormalised densities on a grid,
/// `H² = ½ ∫ (√p − √q)²`.
pub fn hellinger_grid<P, Q>(log_p: P, log_q: Q, grid: &Grid2d) -> Result<f64>
where
    P: Fn(&[f64; 2]) -> f64,
    Q: Fn(&[f64; 2]) -> f64,
{
    let lp: Vec<f64> = grid.points().map(|x| log_p(&x)).collect();
    let lq: Vec<f64> = grid.points().map(|x| log_q(&x)).collect();
    hellinger_from_values(&lp, &lq, grid)
}

fn hellinger_from_values(lp: &[f64], lq: &[f64], grid: &Grid2d) -> Result<f64> {
    let p = grid.normalised(lp)?;
    let q = grid.normalised(lq)?;
    let sq: Vec<f64> = p.iter().zip(&q).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).collect();
    Ok((0.5 * grid.integrate(&sq)).clamp(0.0, 1.0).sqrt())
}

/// `L` from `L² = (1/8) [c_pos · exp(−∫ f ρ_pri)]^{−1/2}`.
pub fn l_constant(c_pos: f64, mean_misfit: f64) -> f64 {
    (0.125 * (c_pos * (-mean_misfit).exp()).powf(-0.5)).sqrt()
}

/// Upper bounds on the Hellinger distance from the posterior for the four
/// approximate posteriors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorBounds {
    /// Exact conditional expectation and exact subspace.
    pub exact: f64,
    /// Monte Carlo conditional expectation with `M` samples.
    pub monte_carlo: f64,
    /// Exact conditional expectation on a subspace with error `ε`.
    pub perturbed: f64,
    /// Both approximations.
    pub perturbed_monte_carlo: f64,
}

pub fn posterior_bounds(
    l: f64,
    poincare: f64,
    leading_sum: f64,
    trailing_sum: f64,
    samples: usize,
    eps: f64,
) -> PosteriorBounds {
    let mc = 1.0 + 1.0 / (samples.max(1) as f64).sqrt();
    let tail = trailing_sum.max(0.0).sqrt();
    let perturbed_tail = eps * leading_sum.max(0.0).sqrt() + tail;
    PosteriorBounds {
        exact: l * poincare * tail,
        monte_carlo: l * poincare * mc * tail,
        perturbed: l * poincare * perturbed_tail,
        perturbed_monte_carlo: l * poincare * mc * perturbed_tail,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HellingerResult {
    /// `H(ρ_pos, π)` by grid quadrature.
    pub distance: f64,
    /// `L √(λ_{n+1} + … + λ_m)` with Poincaré constant 1.
    pub bound: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub trailing_eigensum: f64,
    pub c_pos: f64,
    pub c_pi: f64,
    /// `∫ f ρ_pri`.
    pub mean_misfit: f64,
    /// `∫ (f − g)² ρ_pri`.
    pub misfit_error: f64,
}

/// Compares the posterior of a two-parameter problem with the approximate
/// posterior `π ∝ exp(−g(W1ᵀx)) ρ_pri(x)` on `grid`, with `g` computed by
/// Gauss–Hermite quadrature over the inactive variable.
pub fn posterior_hellinger(
    problem: &BayesProblem,
    subspace: &ActiveSubspace,
    grid: &Grid2d,
    inner_points: usize,
) -> Result<HellingerResult> {
    if problem.dim() != 2 || subspace.dim() != 2 {
        return Err(Error::Dimension(
            "grid Hellinger checks need a two-parameter problem".into(),
        ));
    }
    let reference = ConditionalExpectation::new(problem, subspace, inner_points)?;
    let mut f = Vec::with_capacity(grid.len());
    let mut g = Vec::with_capacity(grid.len());
    let mut log_prior = Vec::with_capacity(grid.len());
    for x in grid.points() {
        f.push(problem.misfit(&x)?);
        let y = subspace.active_coordinates(&x);
        g.push(reference.evaluate(&y)?);
        log_prior.push(log_standard_gaussian(&x));
    }
    let prior: Vec<f64> = log_prior.iter().map(|l| l.exp()).collect();
    let weighted = |h: &dyn Fn(usize) -> f64| {
        let v: Vec<f64> = (0..grid.len()).map(|k| h(k) * prior[k]).collect();
        grid.integrate(&v)
    };
    let c_pos = weighted(&|k| (-f[k]).exp());
    let c_pi = weighted(&|k| (-g[k]).exp());
    let mean_misfit = weighted(&|k| f[k]);
    let misfit_error = weighted(&|k| (f[k] - g[k]).powi(2));

    let lp: Vec<f64> = (0..grid.len()).map(|k| -f[k] + log_prior[k]).collect();
    let lq: Vec<f64> = (0..grid.len()).map(|k| -g[k] + log_prior[k]).collect();
    let distance = hellinger_from_values(&lp, &lq, grid)?;
    let l = l_constant(c_pos, mean_misfit);
    let trailing = subspace.trailing_sum();
    Ok(HellingerResult {
        distance,
        bound: l * trailing.max(0.0).sqrt(),
        l,
        trailing_eigensum: trailing,
        c_pos,
        c_pi,
        mean_misfit,
        misfit_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(mu: f64) -> impl Fn(&[f64; 2]) -> f64 {
        move |x| -0.5 * ((x[0] - mu).powi(2) + x[1] * x[1])
    }

    #[test]
    fn identical_densities_have_zero_distance() {
        let grid = Grid2d::square(6.0, 121).unwrap();
        assert_eq!(hellinger_grid(gaussian(0.3), gaussian(0.3), &grid).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_pair_matches_closed_form() {
        let grid = Grid2d::square(8.0, 321).unwrap();
        for mu in [0.5, 1.0, 2.0] {
            let h = hellinger_grid(gaussian(0.0), gaussian(mu), &grid).unwrap();
            let exact = (1.0 - (-mu * mu / 8.0f64).exp()).sqrt();
            assert!((h - exact).abs() < 1e-6, "mu {mu}: {h} vs {exact}");
        }
        let h = hellinger_grid(gaussian(0.0), gaussian(1.0), &grid).unwrap();
        assert!((h - 0.3430).abs() < 5e-4);
    }

    #[test]
    fn symmetric_and_bounded() {
        let grid = Grid2d::square(8.0, 161).unwrap();
        let a = hellinger_grid(gaussian(0.0), gaussian(1.5), &grid).unwrap();
        let b = hellinger_grid(gaussian(1.5), gaussian(0.0), &grid).unwrap();
        assert!((a - b).abs() < 1e-14);
        assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn small_grid_is_rejected() {
        let grid = Grid2d::square(2.0, 81).unwrap();
        assert!(matches!(
            hellinger_grid(gaussian(0.0), gaussian(0.0), &grid),
            Err(Error::GridTooSmall { .. })
        ));
    }

    #[test]
    fn bounds_grow_with_fewer_samples_and_larger_error() {
        let b1 = posterior_bounds(0.7, 1.0, 4.0, 0.01, 1, 0.1);
        let b10 = posterior_bounds(0.7, 1.0, 4.0, 0.01, 10, 0.1);
        assert!(b1.exact <= b1.monte_carlo && b10.exact <= b10.monte_carlo);
        assert!(b10.monte_carlo < b1.monte_carlo);
        assert!(b1.exact <= b1.perturbed && b1.perturbed <= b1.perturbed_monte_carlo);
        assert!((b1.monte_carlo - 2.0 * b1.exact).abs() < 1e-15);
    }
}
