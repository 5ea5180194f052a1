//! Gauss–Hermite rules for the standard Gaussian weight.
//!
//! Nodes and weights come from the Golub–Welsch construction: the nodes are
//! the eigenvalues of the symmetric tridiagonal Jacobi matrix of the
//! probabilists' Hermite polynomials (zero diagonal, off-diagonal `√k`), and
//! each weight is the squared first component of the matching normalised
//! eigenvector. With that normalisation the weights sum to one, so
//! `Σ wᵢ g(xᵢ) ≈ E[g(Z)]` for `Z ~ N(0, 1)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(points: usize) -> Result<Self> {
        if points == 0 {
            return Err(Error::InvalidArgument(
                "Gauss-Hermite rule needs at least one point".into(),
            ));
        }
        let mut jacobi = DMatrix::<f64>::zeros(points, points);
        for k in 1..points {
            let b = (k as f64).sqrt();
            jacobi[(k - 1, k)] = b;
            jacobi[(k, k - 1)] = b;
        }
        let eig = symmetric_eigen(&jacobi)?;
        let mut pairs: Vec<(f64, f64)> = (0..points)
            .map(|i| (eig.values[i], eig.vectors[(0, i)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let nodes = pairs.iter().map(|p| p.0).collect();
        let weights = pairs.iter().map(|p| p.1 / total).collect();
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[g(Z)]` for a standard Gaussian `Z`.
    pub fn integrate(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(x))
            .sum()
    }

    /// Tensor-product nodes in `dim` dimensions, first coordinate slowest.
    pub fn tensor(&self, dim: usize) -> TensorGrid<'_> {
        TensorGrid {
            rule: self,
            index: vec![0; dim],
            done: false,
            first: true,
        }
    }
}

/// Iterator over `(point, weight)` pairs of a tensor Gauss–Hermite rule.
pub struct TensorGrid<'a> {
    rule: &'a GaussHermite,
    index: Vec<usize>,
    done: bool,
    first: bool,
}

impl Iterator for TensorGrid<'_> {
    type Item = (Vec<f64>, f64);

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        if !self.first {
            // odometer increment, last coordinate fastest
            let mut k = self.index.len();
            loop {
                if k == 0 {
                    self.done = true;
                    return None;
                }
                k -= 1;
                self.index[k] += 1;
                if self.index[k] < self.rule.len() {
                    break;
                }
                self.index[k] = 0;
            }
        }
        self.first = false;
        let point = self.index.iter().map(|&i| self.rule.nodes[i]).collect();
        let weight = self.index.iter().map(|&i| self.rule.weights[i]).product();
        Some((point, weight))
    }
}
