//! Two-parameter quadratic forward model `m(x) = ½ xᵀ A x` with
//! `A = Q diag(1, ε) Qᵀ` and `Q` the rotation by −45°.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::posterior::{BayesProblem, ForwardModel};

pub const DEFAULT_DATA: f64 = 0.9;
pub const DEFAULT_NOISE_VAR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticModel {
    eps: f64,
    a: [[f64; 2]; 2],
}

impl QuadraticModel {
    pub fn new(eps: f64) -> Self {
        let q = Self::rotation();
        let mut a = [[0.0; 2]; 2];
        for (i, row) in a.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = q[i][0] * q[j][0] + eps * q[i][1] * q[j][1];
            }
        }
        Self { eps, a }
    }

    /// `Q = ½ [[√2, √2], [−√2, √2]]`.
    pub fn rotation() -> [[f64; 2]; 2] {
        [[FRAC_1_SQRT_2, FRAC_1_SQRT_2], [-FRAC_1_SQRT_2, FRAC_1_SQRT_2]]
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        self.a
    }

    fn apply(&self, x: &[f64]) -> [f64; 2] {
        [
            self.a[0][0] * x[0] + self.a[0][1] * x[1],
            self.a[1][0] * x[0] + self.a[1][1] * x[1],
        ]
    }
}

impl ForwardModel for QuadraticModel {
    fn param_dim(&self) -> usize {
        2
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let ax = self.apply(x);
        Ok(vec![0.5 * (x[0] * ax[0] + x[1] * ax[1])])
    }

    fn forward_and_pullback(
        &self,
        x: &[f64],
        cotangent: &dyn Fn(&[f64]) -> Vec<f64>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let ax = self.apply(x);
        let out = vec![0.5 * (x[0] * ax[0] + x[1] * ax[1])];
        let w = cotangent(&out)[0];
        Ok((out, vec![w * ax[0], w * ax[1]]))
    }
}

pub fn quadratic_problem(eps: f64, data: f64, noise_var: f64) -> Result<BayesProblem> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("quadratic model needs eps > 0, got {eps}")));
    }
    BayesProblem::new(Arc::new(QuadraticModel::new(eps)), vec![data], noise_var)
}
