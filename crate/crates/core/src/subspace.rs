//! Estimation of the gradient outer-product matrix `C = E[∇f ∇fᵀ]` and of
//! its dominant eigenspace.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, orthonormality_defect, symmetric_eigen, symmetric_spectral_norm};
use crate::quadrature::GaussHermite;
use crate::rng::{standard_normal_vec, stream};

/// Largest dimension for tensor-product quadrature estimates of `C`.
pub const QUADRATURE_MAX_DIM: usize = 4;
/// Bootstrap replicate count used when none is given.
pub const DEFAULT_BOOTSTRAP: usize = 100;
/// Relative symmetry tolerance accepted by [`eigendecompose`].
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Orthonormality tolerance accepted by [`subspace_distance`].
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// Gradients of the misfit at prior draws.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSampleSet {
    dim: usize,
    points: Vec<Vec<f64>>,
    gradients: Vec<Vec<f64>>,
}

impl GradientSampleSet {
    pub fn new(points: Vec<Vec<f64>>, gradients: Vec<Vec<f64>>) -> Result<Self> {
        if gradients.is_empty() {
            return Err(Error::InvalidArgument("gradient sample set is empty".into()));
        }
        if points.len() != gradients.len() {
            return Err(Error::Dimension(format!(
                "{} points but {} gradients",
                points.len(),
                gradients.len()
            )));
        }
        let dim = gradients[0].len();
        for (i, (p, g)) in points.iter().zip(&gradients).enumerate() {
            if g.len() != dim || p.len() != dim {
                return Err(Error::Dimension(format!("sample {i} does not have dimension {dim}")));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient { index: i });
            }
        }
        Ok(Self {
            dim,
            points,
            gradients,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.gradients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gradients.is_empty()
    }

    pub fn gradients(&self) -> &[Vec<f64>] {
        &self.gradients
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// `(1/N) Σ ∇f_j ∇f_jᵀ` over the selected samples (all when `None`).
    pub fn outer_product_mean(&self, indices: Option<&[usize]>) -> DMatrix<f64> {
        let mut c = DMatrix::<f64>::zeros(self.dim, self.dim);
        let mut count = 0usize;
        let mut add = |g: &[f64]| {
            let v = DVector::from_column_slice(g);
            c.ger(1.0, &v, &v, 1.0);
            count += 1;
        };
        match indices {
            Some(idx) => idx.iter().for_each(|&i| add(&self.gradients[i])),
            None => self.gradients.iter().for_each(|g| add(g)),
        }
        if count > 0 {
            c /= count as f64;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Provenance {
    MonteCarlo { samples: usize, seed: u64 },
    Quadrature { points_per_dim: usize },
}

/// Estimate of `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    pub matrix: DMatrix<f64>,
    pub provenance: Provenance,
}

impl CMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Monte Carlo estimate `Ĉ = (1/N) Σ ∇f_j ∇f_jᵀ`.
///
/// Prior points are drawn sequentially from stream 0 of `seed`; gradients are
/// evaluated in parallel and reduced in sample order, so the result does not
/// depend on the thread count.
pub fn estimate_c_monte_carlo<G, P>(
    gradient: G,
    mut prior_sampler: P,
    samples: usize,
    seed: u64,
) -> Result<(CMatrix, GradientSampleSet)>
where
    G: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
    P: FnMut(&mut crate::rng::ChainRng) -> Vec<f64>,
{
    if samples == 0 {
        return Err(Error::InvalidArgument("Monte Carlo estimate needs N ≥ 1".into()));
    }
    let mut rng = stream(seed, 0);
    let points: Vec<Vec<f64>> = (0..samples).map(|_| prior_sampler(&mut rng)).collect();
    let gradients: Vec<Result<Vec<f64>>> = points.par_iter().map(|x| gradient(x)).collect();
    let mut grads = Vec::with_capacity(samples);
    for (index, g) in gradients.into_iter().enumerate() {
        let g = g?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { index });
        }
        grads.push(g);
    }
    let set = GradientSampleSet::new(points, grads)?;
    let matrix = set.outer_product_mean(None);
    Ok((
        CMatrix {
            matrix,
            provenance: Provenance::MonteCarlo { samples, seed },
        },
        set,
    ))
}

/// Standard Gaussian prior sampler on `ℝ^dim`.
pub fn standard_gaussian_sampler(dim: usize) -> impl FnMut(&mut crate::rng::ChainRng) -> Vec<f64> {
    move |rng| standard_normal_vec(rng, dim)
}

/// Tensor Gauss–Hermite estimate of `C` under the standard Gaussian.
pub fn estimate_c_quadrature<G>(gradient: G, dim: usize, points_per_dim: usize) -> Result<CMatrix>
where
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if dim > QUADRATURE_MAX_DIM {
        return Err(Error::QuadratureDimension {
            dim,
            max: QUADRATURE_MAX_DIM,
        });
    }
    if points_per_dim < 2 {
        return Err(Error::InvalidArgument(
            "tensor quadrature needs at least 2 points per dimension".into(),
        ));
    }
    let rule = GaussHermite::new(points_per_dim)?;
    let mut c = DMatrix::<f64>::zeros(dim, dim);
    for (index, (x, w)) in rule.tensor(dim).enumerate() {
        let g = gradient(&x)?;
        if g.len() != dim {
            return Err(Error::Dimension(format!("gradient has {} entries, expected {dim}", g.len())));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { index });
        }
        let v = DVector::from_vec(g);
        c.ger(w, &v, &v, 1.0);
    }
    Ok(CMatrix {
        matrix: c,
        provenance: Provenance::Quadrature { points_per_dim },
    })
}

/// Eigendecomposition of `C` without a chosen split.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Descending eigenvalues.
    pub eigenvalues: DVector<f64>,
    /// Orthogonal eigenvectors as columns.
    pub eigenvectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `λ_n − λ_{n+1}` for `n = 1..m−1`.
    pub fn gaps(&self) -> Vec<f64> {
        self.eigenvalues
            .as_slice()
            .windows(2)
            .map(|w| w[0] - w[1])
            .collect()
    }

    /// Split `n` maximising `log λ_n − log λ_{n+1}` among `n ≤ max_n`, with
    /// eigenvalues floored at `1e-300 · λ_1`.
    pub fn largest_log_gap(&self, max_n: usize) -> Option<usize> {
        let l1 = self.eigenvalues.get(0).copied().unwrap_or(0.0);
        if l1 <= 0.0 {
            return None;
        }
        let floor = l1 * 1e-300;
        let logs: Vec<f64> = self.eigenvalues.iter().map(|v| v.max(floor).ln()).collect();
        (1..self.dim().min(max_n + 1))
            .map(|n| (n, logs[n - 1] - logs[n]))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(n, _)| n)
    }
}

/// Active/inactive split of a spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSubspace {
    pub spectrum: Spectrum,
    split: usize,
}

impl ActiveSubspace {
    pub fn dim(&self) -> usize {
        self.spectrum.dim()
    }

    pub fn active_dim(&self) -> usize {
        self.split
    }

    pub fn inactive_dim(&self) -> usize {
        self.dim() - self.split
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.spectrum.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.spectrum.eigenvectors
    }

    pub fn w1(&self) -> DMatrix<f64> {
        self.spectrum.eigenvectors.columns(0, self.split).into_owned()
    }

    pub fn w2(&self) -> DMatrix<f64> {
        self.spectrum
            .eigenvectors
            .columns(self.split, self.dim() - self.split)
            .into_owned()
    }

    /// `λ_n − λ_{n+1}`.
    pub fn gap(&self) -> f64 {
        self.spectrum.eigenvalues[self.split - 1] - self.spectrum.eigenvalues[self.split]
    }

    /// False when `λ_n = λ_{n+1}` exactly, in which case `W1` is not
    /// determined by `C`.
    pub fn identifiable(&self) -> bool {
        self.gap() != 0.0
    }

    /// `λ_1 + … + λ_n`.
    pub fn leading_sum(&self) -> f64 {
        self.spectrum.eigenvalues.rows(0, self.split).sum()
    }

    /// `λ_{n+1} + … + λ_m`, with tiny negative round-off clipped to zero.
    pub fn trailing_sum(&self) -> f64 {
        self.spectrum
            .eigenvalues
            .rows(self.split, self.dim() - self.split)
            .iter()
            .map(|v| v.max(0.0))
            .sum()
    }

    /// Active coordinates `W1ᵀ x`.
    pub fn active_coordinates(&self, x: &[f64]) -> Vec<f64> {
        (self.w1().transpose() * DVector::from_column_slice(x)).as_slice().to_vec()
    }
}

pub fn eigendecompose(c: &CMatrix) -> Result<Spectrum> {
    let asym = asymmetry(&c.matrix);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let eig = symmetric_eigen(&c.matrix)?;
    Ok(Spectrum {
        eigenvalues: eig.values,
        eigenvectors: eig.vectors,
    })
}

/// Splits the spectrum after the first `n` eigenpairs, `1 ≤ n ≤ m − 1`.
pub fn partition(spectrum: &Spectrum, n: usize) -> Result<ActiveSubspace> {
    let m = spectrum.dim();
    if n == 0 || n >= m {
        return Err(Error::InvalidArgument(format!(
            "active dimension must be in [1, {}], got {n}",
            m.saturating_sub(1)
        )));
    }
    Ok(ActiveSubspace {
        spectrum: spectrum.clone(),
        split: n,
    })
}

/// `‖A Aᵀ − B Bᵀ‖₂` for orthonormal column blocks of equal shape, the sine
/// of the largest principal angle between their spans.
pub fn subspace_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "subspace bases have shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    for w in [a, b] {
        let defect = orthonormality_defect(w);
        if defect > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal(defect));
        }
    }
    let diff = a * a.transpose() - b * b.transpose();
    Ok(symmetric_spectral_norm(&diff)?.clamp(0.0, 1.0))
}

/// `4 λ_1 δ / (λ_n − λ_{n+1})`, the a priori subspace error bound for a
/// relative eigenvalue tolerance `δ`. Reported only.
pub fn subspace_error_bound(subspace: &ActiveSubspace, delta: f64) -> f64 {
    let gap = subspace.gap();
    if gap <= 0.0 {
        return f64::INFINITY;
    }
    4.0 * subspace.eigenvalues()[0] * delta / gap
}

/// Bootstrap distances between resampled and full-sample subspaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceErrorEstimate {
    pub candidates: Vec<usize>,
    /// `distances[c][r]`: candidate `c`, surviving replicate `r`.
    pub distances: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub max: Vec<f64>,
    /// Per eigenvalue, the `(min, max)` over surviving replicates.
    pub eigenvalue_ranges: Vec<(f64, f64)>,
    pub replicates: usize,
    /// Replicates dropped because the resampled `Ĉ` was zero.
    pub skipped: usize,
}

pub fn bootstrap_subspace_error<R: Rng + ?Sized>(
    samples: &GradientSampleSet,
    candidates: &[usize],
    replicates: usize,
    rng: &mut R,
) -> Result<SubspaceErrorEstimate> {
    let seed: u64 = rng.random();
    bootstrap_subspace_error_seeded(samples, candidates, replicates, seed)
}

/// As [`bootstrap_subspace_error`]; replicate `r` resamples from stream `r`
/// of `seed`.
pub fn bootstrap_subspace_error_seeded(
    samples: &GradientSampleSet,
    candidates: &[usize],
    replicates: usize,
    seed: u64,
) -> Result<SubspaceErrorEstimate> {
    let n_samples = samples.len();
    let m = samples.dim();
    if n_samples < 10 {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs at least 10 gradient samples, got {n_samples}"
        )));
    }
    if replicates < 2 {
        return Err(Error::InvalidArgument("bootstrap needs at least 2 replicates".into()));
    }
    if candidates.is_empty() || candidates.iter().any(|&n| n == 0 || n >= m) {
        return Err(Error::InvalidArgument(format!(
            "candidate dimensions must lie in [1, {}]",
            m.saturating_sub(1)
        )));
    }
    let full = symmetric_eigen(&samples.outer_product_mean(None))?;

    type Replicate = Option<(Vec<f64>, Vec<f64>)>;
    let results: Vec<Result<Replicate>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, r as u64);
            let idx: Vec<usize> = (0..n_samples).map(|_| rng.random_range(0..n_samples)).collect();
            let c = samples.outer_product_mean(Some(&idx));
            if c.iter().all(|&v| v == 0.0) {
                return Ok(None);
            }
            let eig = symmetric_eigen(&c)?;
            let mut dists = Vec::with_capacity(candidates.len());
            for &n in candidates {
                let a = full.vectors.columns(0, n).into_owned();
                let b = eig.vectors.columns(0, n).into_owned();
                dists.push(subspace_distance(&a, &b)?);
            }
            Ok(Some((dists, eig.values.as_slice().to_vec())))
        })
        .collect();

    let mut distances = vec![Vec::new(); candidates.len()];
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); m];
    let mut skipped = 0;
    for r in results {
        match r? {
            None => skipped += 1,
            Some((d, values)) => {
                for (slot, v) in distances.iter_mut().zip(d) {
                    slot.push(v);
                }
                for (range, v) in ranges.iter_mut().zip(values) {
                    range.0 = range.0.min(v);
                    range.1 = range.1.max(v);
                }
            }
        }
    }
    let mean = distances
        .iter()
        .map(|d| if d.is_empty() { f64::NAN } else { d.iter().sum::<f64>() / d.len() as f64 })
        .collect();
    let max = distances
        .iter()
        .map(|d| d.iter().copied().fold(f64::NAN, f64::max))
        .collect();
    Ok(SubspaceErrorEstimate {
        candidates: candidates.to_vec(),
        distances,
        mean,
        max,
        eigenvalue_ranges: ranges,
        replicates,
        skipped,
    })
}
