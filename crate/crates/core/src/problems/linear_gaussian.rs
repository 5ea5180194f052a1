//! Linear forward model `m(x) = M x` with closed-form active-subspace
//! quantities under the standard Gaussian prior.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::posterior::{BayesProblem, ForwardModel};
use crate::rng::{standard_normal_vec, stream};
use crate::subspace::{eigendecompose, partition, ActiveSubspace, CMatrix, Provenance};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    matrix: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl ForwardModel for LinearModel {
    fn param_dim(&self) -> usize {
        self.matrix.ncols()
    }

    fn obs_dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok((&self.matrix * DVector::from_column_slice(x)).as_slice().to_vec())
    }

    fn forward_and_pullback(
        &self,
        x: &[f64],
        cotangent: &dyn Fn(&[f64]) -> Vec<f64>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let out = self.forward(x)?;
        let w = DVector::from_vec(cotangent(&out));
        Ok((out, (self.matrix.transpose() * w).as_slice().to_vec()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianProblem {
    pub matrix: DMatrix<f64>,
    pub data: DVector<f64>,
    pub noise_var: f64,
}

impl LinearGaussianProblem {
    pub fn new(matrix: DMatrix<f64>, data: DVector<f64>, noise_var: f64) -> Result<Self> {
        if data.len() != matrix.nrows() {
            return Err(Error::Dimension(format!(
                "data has {} entries, matrix has {} rows",
                data.len(),
                matrix.nrows()
            )));
        }
        if !(noise_var > 0.0) {
            return Err(Error::InvalidArgument("noise variance must be positive".into()));
        }
        Ok(Self {
            matrix,
            data,
            noise_var,
        })
    }

    /// Standard Gaussian `rows × cols` matrix and data `d = M x_true + σ e`,
    /// all drawn from `seed`.
    pub fn random(rows: usize, cols: usize, noise_var: f64, seed: u64) -> Result<Self> {
        let mut rng = stream(seed, 0);
        let entries = standard_normal_vec(&mut rng, rows * cols);
        let matrix = DMatrix::from_row_slice(rows, cols, &entries);
        let x_true = DVector::from_vec(standard_normal_vec(&mut rng, cols));
        let noise = DVector::from_vec(standard_normal_vec(&mut rng, rows));
        let data = &matrix * x_true + noise * noise_var.sqrt();
        Self::new(matrix, data, noise_var)
    }

    pub fn rank(&self) -> usize {
        self.matrix.rank(1e-10 * self.matrix.norm().max(f64::MIN_POSITIVE))
    }

    pub fn bayes_problem(&self) -> Result<BayesProblem> {
        BayesProblem::new(
            Arc::new(LinearModel::new(self.matrix.clone())),
            self.data.as_slice().to_vec(),
            self.noise_var,
        )
    }
}

/// Closed-form active-subspace quantities of a linear-Gaussian problem.
#[derive(Debug, Clone)]
pub struct LinearClosedForms {
    /// `C = Mᵀ (M Mᵀ + d dᵀ) M / σ⁴`.
    pub c_exact: DMatrix<f64>,
    pub subspace: ActiveSubspace,
    /// `γ² = tr(W2ᵀ Mᵀ M W2)`.
    pub gamma2: f64,
    /// Mean of the approximate posterior built from `W1`.
    pub mean: DVector<f64>,
    /// Covariance of the approximate posterior built from `W1`.
    pub cov: DMatrix<f64>,
}

impl LinearClosedForms {
    /// `g(y) = (‖M W1 y − d‖² + γ²) / (2σ²)`.
    pub fn conditional_misfit(&self, problem: &LinearGaussianProblem, y: &[f64]) -> f64 {
        let w1 = self.subspace.w1();
        let r = &problem.matrix * (w1 * DVector::from_column_slice(y)) - &problem.data;
        (r.norm_squared() + self.gamma2) / (2.0 * problem.noise_var)
    }
}

pub fn linear_closed_forms(problem: &LinearGaussianProblem, n: usize) -> Result<LinearClosedForms> {
    let m = &problem.matrix;
    let d = &problem.data;
    let s2 = problem.noise_var;
    let inner = m * m.transpose() + d * d.transpose();
    let c_exact = m.transpose() * inner * m / (s2 * s2);
    let spectrum = eigendecompose(&CMatrix {
        matrix: c_exact.clone(),
        provenance: Provenance::Quadrature { points_per_dim: 0 },
    })?;
    let subspace = partition(&spectrum, n)?;
    let w1 = subspace.w1();
    let w2 = subspace.w2();
    let mw2 = m * &w2;
    let gamma2 = (mw2.transpose() * &mw2).trace();

    let m_tilde = m * &w1 * w1.transpose();
    let gram = &m_tilde * m_tilde.transpose() + DMatrix::identity(m.nrows(), m.nrows()) * s2;
    let chol = gram.cholesky().ok_or(Error::SingularSystem {
        row: 0,
        pivot: f64::NAN,
    })?;
    let mean = m_tilde.transpose() * chol.solve(d);
    let cov = DMatrix::identity(m.ncols(), m.ncols()) - m_tilde.transpose() * chol.solve(&m_tilde);
    Ok(LinearClosedForms {
        c_exact,
        subspace,
        gamma2,
        mean,
        cov,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posterior::conditional_expectation_reference;
    use approx::assert_relative_eq;

    #[test]
    fn zero_matrix_gives_prior() {
        let p = LinearGaussianProblem::new(DMatrix::zeros(2, 3), DVector::from_vec(vec![0.5, -0.2]), 0.1).unwrap();
        let cf = linear_closed_forms(&p, 1).unwrap();
        assert!(cf.c_exact.iter().all(|&v| v == 0.0));
        assert!(cf.mean.iter().all(|&v| v == 0.0));
        assert_eq!(cf.cov, DMatrix::identity(3, 3));
    }

    #[test]
    fn conditional_misfit_matches_quadrature() {
        // m = 3, n = 1: inactive space is two-dimensional
        let p = LinearGaussianProblem::random(2, 3, 0.3, 4).unwrap();
        let cf = linear_closed_forms(&p, 1).unwrap();
        let bp = p.bayes_problem().unwrap();
        for y in [-1.0, 0.0, 0.7] {
            let quad = conditional_expectation_reference(&bp, &cf.subspace, &[y], 6).unwrap();
            assert_relative_eq!(quad, cf.conditional_misfit(&p, &[y]), max_relative = 1e-12);
        }
    }

    #[test]
    fn linear_gradient_matches_formula() {
        let p = LinearGaussianProblem::random(3, 4, 0.2, 1).unwrap();
        let bp = p.bayes_problem().unwrap();
        let x = DVector::from_vec(vec![0.1, -0.4, 0.9, 1.3]);
        let g = bp.misfit_gradient(x.as_slice()).unwrap();
        let expected = p.matrix.transpose() * (&p.matrix * &x - &p.data) / p.noise_var;
        for i in 0..4 {
            assert_relative_eq!(g[i], expected[i], epsilon = 1e-12);
        }
        // independent arithmetic for the misfit
        let r = &p.data - &p.matrix * &x;
        let f: f64 = r.iter().map(|v| v * v).sum::<f64>() * 0.5 / p.noise_var;
        assert_relative_eq!(bp.misfit(x.as_slice()).unwrap(), f, max_relative = 1e-15);
    }

    /// Textbook posterior `N(Mᵀ(MMᵀ + σ²I)⁻¹d, I − Mᵀ(MMᵀ + σ²I)⁻¹M)`.
    fn textbook(p: &LinearGaussianProblem) -> (DVector<f64>, DMatrix<f64>) {
        let m = &p.matrix;
        let prec = m.transpose() * m / p.noise_var + DMatrix::identity(m.ncols(), m.ncols());
        let cov = prec.try_inverse().unwrap();
        let mean = &cov * m.transpose() * &p.data / p.noise_var;
        (mean, cov)
    }

    #[test]
    fn full_rank_split_reproduces_the_posterior() {
        let p = LinearGaussianProblem::random(3, 5, 0.1, 7).unwrap();
        assert_eq!(p.rank(), 3);
        let cf = linear_closed_forms(&p, 3).unwrap();
        let (mean, cov) = textbook(&p);
        assert!((&cf.mean - mean).amax() < 1e-10);
        assert!((&cf.cov - cov).amax() < 1e-10);
        assert!(cf.gamma2.abs() < 1e-10 * p.matrix.norm_squared());
    }
}

