//! Bayesian problem definition and active-subspace misfit surrogates.
//!
//! The prior is the standard Gaussian on `ℝ^m`. The data misfit is
//! `f(x) = ‖d − m(x)‖² / (2σ²)` and its gradient is
//! `∇f(x) = ∇m(x)ᵀ (m(x) − d) / σ²`.
//!
//! A [`MisfitSurrogate`] replaces `f(x)` by the average of `f` over the
//! inactive variables with the active ones held fixed:
//! `ĝ(y) = (1/M) Σ f(W1 y + W2 zᵢ)`, `zᵢ ~ N(0, I)`, or a Gauss–Hermite
//! rule in place of the average when the inactive space is one-dimensional.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussHermite;
use crate::rng::fill_standard_normal;
use crate::subspace::ActiveSubspace;

/// A differentiable parameter-to-observable map `m: ℝ^m → ℝ^d`.
///
/// Implementations must be safe for concurrent read-only use.
pub trait ForwardModel: Send + Sync {
    fn param_dim(&self) -> usize;

    fn obs_dim(&self) -> usize;

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Evaluates `m(x)` and the pullback `∇m(x)ᵀ w`, where the cotangent
    /// `w = cotangent(m(x))` may depend on the forward output.
    fn forward_and_pullback(
        &self,
        x: &[f64],
        cotangent: &dyn Fn(&[f64]) -> Vec<f64>,
    ) -> Result<(Vec<f64>, Vec<f64>)>;

    /// Whether a single forward evaluation is costly enough to be worth
    /// spreading inner surrogate evaluations across threads.
    fn is_expensive(&self) -> bool {
        false
    }
}

/// Log density of the standard Gaussian on `ℝ^k`, normalised.
pub fn log_standard_gaussian(x: &[f64]) -> f64 {
    let k = x.len() as f64;
    -0.5 * x.iter().map(|v| v * v).sum::<f64>() - 0.5 * k * (2.0 * PI).ln()
}

/// Likelihood, prior, and data for an inverse problem.
pub struct BayesProblem {
    model: Arc<dyn ForwardModel>,
    data: Vec<f64>,
    noise_var: f64,
    forward_calls: AtomicU64,
    gradient_calls: AtomicU64,
}

impl std::fmt::Debug for BayesProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BayesProblem")
            .field("dim", &self.dim())
            .field("obs_dim", &self.obs_dim())
            .field("noise_var", &self.noise_var)
            .finish()
    }
}

impl BayesProblem {
    pub fn new(model: Arc<dyn ForwardModel>, data: Vec<f64>, noise_var: f64) -> Result<Self> {
        if !(noise_var > 0.0) || !noise_var.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be positive, got {noise_var}"
            )));
        }
        if data.len() != model.obs_dim() {
            return Err(Error::Dimension(format!(
                "data has {} entries but the model produces {}",
                data.len(),
                model.obs_dim()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("data contains non-finite values".into()));
        }
        Ok(Self {
            model,
            data,
            noise_var,
            forward_calls: AtomicU64::new(0),
            gradient_calls: AtomicU64::new(0),
        })
    }

    pub fn dim(&self) -> usize {
        self.model.param_dim()
    }

    pub fn obs_dim(&self) -> usize {
        self.model.obs_dim()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn model(&self) -> &Arc<dyn ForwardModel> {
        &self.model
    }

    /// Number of misfit (forward model) evaluations so far.
    pub fn forward_calls(&self) -> u64 {
        self.forward_calls.load(Ordering::Relaxed)
    }

    /// Number of gradient evaluations so far; each costs one forward and one
    /// adjoint evaluation and is not included in [`Self::forward_calls`].
    pub fn gradient_calls(&self) -> u64 {
        self.gradient_calls.load(Ordering::Relaxed)
    }

    pub fn reset_counters(&self) {
        self.forward_calls.store(0, Ordering::Relaxed);
        self.gradient_calls.store(0, Ordering::Relaxed);
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "point has {} coordinates, problem has {}",
                x.len(),
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("point has non-finite coordinates".into()));
        }
        Ok(())
    }

    fn misfit_of_output(&self, out: &[f64]) -> f64 {
        let sq: f64 = self
            .data
            .iter()
            .zip(out)
            .map(|(d, m)| (d - m) * (d - m))
            .sum();
        sq / (2.0 * self.noise_var)
    }

    /// `f(x) = ‖d − m(x)‖² / (2σ²)`.
    pub fn misfit(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.forward_calls.fetch_add(1, Ordering::Relaxed);
        let out = self
            .model
            .forward(x)
            .map_err(|e| Error::Forward(format!("misfit evaluation: {e}")))?;
        Ok(self.misfit_of_output(&out))
    }

    /// Misfit and its gradient `∇m(x)ᵀ (m(x) − d) / σ²`.
    pub fn misfit_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_point(x)?;
        self.gradient_calls.fetch_add(1, Ordering::Relaxed);
        let sigma2 = self.noise_var;
        let data = &self.data;
        let cotangent = |out: &[f64]| -> Vec<f64> {
            out.iter().zip(data).map(|(m, d)| (m - d) / sigma2).collect()
        };
        let (out, grad) = self
            .model
            .forward_and_pullback(x, &cotangent)
            .map_err(|e| Error::Forward(format!("gradient evaluation: {e}")))?;
        Ok((self.misfit_of_output(&out), grad))
    }

    pub fn misfit_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.misfit_and_gradient(x)?.1)
    }

    /// Unnormalised log posterior `−f(x) + log ρ_pri(x)`.
    pub fn log_posterior(&self, x: &[f64]) -> Result<f64> {
        Ok(-self.misfit(x)? + log_standard_gaussian(x))
    }
}

/// How the inactive variables are integrated out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum InnerRule {
    MonteCarlo { samples: usize },
    GaussHermite { points: usize },
}

impl InnerRule {
    /// Misfit evaluations per surrogate evaluation.
    pub fn evaluations(&self) -> usize {
        match *self {
            InnerRule::MonteCarlo { samples } => samples,
            InnerRule::GaussHermite { points } => points,
        }
    }

    /// Monte Carlo with ten samples, or a ten-point Gauss–Hermite rule when
    /// the inactive space is one-dimensional.
    pub fn default_for(inactive_dim: usize) -> Self {
        if inactive_dim == 1 {
            InnerRule::GaussHermite { points: 10 }
        } else {
            InnerRule::MonteCarlo { samples: 10 }
        }
    }
}

/// The estimated conditional expectation `ĝ` of the misfit given the
/// active variables.
pub struct MisfitSurrogate<'a> {
    problem: &'a BayesProblem,
    w1: DMatrix<f64>,
    w2: DMatrix<f64>,
    rule: InnerRule,
    gh: Option<GaussHermite>,
}

impl<'a> MisfitSurrogate<'a> {
    pub fn new(problem: &'a BayesProblem, subspace: &ActiveSubspace, rule: InnerRule) -> Result<Self> {
        if subspace.dim() != problem.dim() {
            return Err(Error::Dimension(format!(
                "subspace lives in ℝ^{} but the problem has {} parameters",
                subspace.dim(),
                problem.dim()
            )));
        }
        let gh = match rule {
            InnerRule::MonteCarlo { samples } => {
                if samples == 0 {
                    return Err(Error::InvalidArgument("inner sample count must be ≥ 1".into()));
                }
                None
            }
            InnerRule::GaussHermite { points } => {
                if subspace.inactive_dim() != 1 {
                    return Err(Error::InvalidArgument(format!(
                        "Gauss-Hermite inner rule needs a one-dimensional inactive space, got {}",
                        subspace.inactive_dim()
                    )));
                }
                Some(GaussHermite::new(points)?)
            }
        };
        Ok(Self {
            problem,
            w1: subspace.w1(),
            w2: subspace.w2(),
            rule,
            gh,
        })
    }

    pub fn problem(&self) -> &BayesProblem {
        self.problem
    }

    pub fn rule(&self) -> InnerRule {
        self.rule
    }

    pub fn active_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn inactive_dim(&self) -> usize {
        self.w2.ncols()
    }

    /// `W1 y + W2 z`.
    pub fn lift(&self, y: &[f64], z: &[f64]) -> Vec<f64> {
        let x = &self.w1 * DVector::from_column_slice(y) + &self.w2 * DVector::from_column_slice(z);
        x.as_slice().to_vec()
    }

    /// Inner draws for one surrogate evaluation, row per draw, and their weights.
    fn inner_points<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<Vec<f64>>, Vec<f64>) {
        match (&self.rule, &self.gh) {
            (InnerRule::GaussHermite { .. }, Some(gh)) => (
                gh.nodes().iter().map(|&z| vec![z]).collect(),
                gh.weights().to_vec(),
            ),
            (InnerRule::MonteCarlo { samples }, _) => {
                let k = self.inactive_dim();
                let zs = (0..*samples)
                    .map(|_| {
                        let mut z = vec![0.0; k];
                        fill_standard_normal(rng, &mut z);
                        z
                    })
                    .collect();
                (zs, vec![1.0 / *samples as f64; *samples])
            }
            _ => unreachable!("Gauss-Hermite rule constructed without nodes"),
        }
    }

    /// Misfit values at the inner points for active coordinates `y`.
    pub fn inner_misfits<R: Rng + ?Sized>(&self, y: &[f64], rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
        if y.len() != self.active_dim() {
            return Err(Error::Dimension(format!(
                "active point has {} coordinates, subspace has {}",
                y.len(),
                self.active_dim()
            )));
        }
        let (zs, weights) = self.inner_points(rng);
        let eval = |z: &Vec<f64>| self.problem.misfit(&self.lift(y, z));
        let values: Vec<Result<f64>> = if self.problem.model().is_expensive() && zs.len() > 1 {
            zs.par_iter().map(eval).collect()
        } else {
            zs.iter().map(eval).collect()
        };
        let mut out = Vec::with_capacity(values.len());
        for (i, v) in values.into_iter().enumerate() {
            match v {
                Ok(f) if f.is_finite() => out.push(f),
                _ => {
                    return Err(Error::NonFiniteSurrogate {
                        index: i,
                        z: zs[i].clone(),
                    })
                }
            }
        }
        Ok((out, weights))
    }

    /// `ĝ(y)`.
    pub fn evaluate<R: Rng + ?Sized>(&self, y: &[f64], rng: &mut R) -> Result<f64> {
        let (values, weights) = self.inner_misfits(y, rng)?;
        Ok(values.iter().zip(&weights).map(|(v, w)| v * w).sum())
    }

    /// `−ĝ(y) + log ρ_pri(y)` with the standard Gaussian on `ℝⁿ`.
    pub fn log_approx_posterior<R: Rng + ?Sized>(&self, y: &[f64], rng: &mut R) -> Result<f64> {
        Ok(-self.evaluate(y, rng)? + log_standard_gaussian(y))
    }
}

/// Largest inactive dimension accepted by [`conditional_expectation_reference`].
pub const REFERENCE_MAX_INACTIVE: usize = 2;

/// Tensor Gauss–Hermite evaluator of `g(y) = E[f(W1 y + W2 z)]`,
/// `z ~ N(0, I)`, reusable across many active points.
pub struct ConditionalExpectation<'a> {
    problem: &'a BayesProblem,
    w1: DMatrix<f64>,
    w2: DMatrix<f64>,
    nodes: Vec<(DVector<f64>, f64)>,
}

impl<'a> ConditionalExpectation<'a> {
    pub fn new(problem: &'a BayesProblem, subspace: &ActiveSubspace, points: usize) -> Result<Self> {
        let k = subspace.inactive_dim();
        if k > REFERENCE_MAX_INACTIVE {
            return Err(Error::QuadratureDimension {
                dim: k,
                max: REFERENCE_MAX_INACTIVE,
            });
        }
        let rule = GaussHermite::new(points)?;
        let w2 = subspace.w2();
        let nodes = rule.tensor(k).map(|(z, w)| (&w2 * DVector::from_vec(z), w)).collect();
        Ok(Self {
            problem,
            w1: subspace.w1(),
            w2,
            nodes,
        })
    }

    pub fn inactive_dim(&self) -> usize {
        self.w2.ncols()
    }

    pub fn evaluate(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.w1.ncols() {
            return Err(Error::Dimension(format!(
                "active point has {} coordinates, subspace has {}",
                y.len(),
                self.w1.ncols()
            )));
        }
        let base = &self.w1 * DVector::from_column_slice(y);
        let mut total = 0.0;
        for (shift, w) in &self.nodes {
            let x = &base + shift;
            total += w * self.problem.misfit(x.as_slice())?;
        }
        Ok(total)
    }
}

/// One-off evaluation through [`ConditionalExpectation`].
pub fn conditional_expectation_reference(
    problem: &BayesProblem,
    subspace: &ActiveSubspace,
    y: &[f64],
    points: usize,
) -> Result<f64> {
    ConditionalExpectation::new(problem, subspace, points)?.evaluate(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::quadratic::QuadraticModel;
    use crate::rng::stream;
    use crate::subspace::{eigendecompose, partition, CMatrix, Provenance};
    use approx::assert_relative_eq;

    /// m(x) = c, misfit constant.
    struct Constant {
        dim: usize,
        value: f64,
    }

    impl ForwardModel for Constant {
        fn param_dim(&self) -> usize {
            self.dim
        }
        fn obs_dim(&self) -> usize {
            1
        }
        fn forward(&self, _x: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![self.value])
        }
        fn forward_and_pullback(
            &self,
            _x: &[f64],
            _w: &dyn Fn(&[f64]) -> Vec<f64>,
        ) -> Result<(Vec<f64>, Vec<f64>)> {
            Ok((vec![self.value], vec![0.0; self.dim]))
        }
    }

    fn subspace_from_diag(values: &[f64], n: usize) -> ActiveSubspace {
        let c = CMatrix {
            matrix: DMatrix::from_diagonal(&DVector::from_column_slice(values)),
            provenance: Provenance::Quadrature { points_per_dim: 0 },
        };
        partition(&eigendecompose(&c).unwrap(), n).unwrap()
    }

    fn quadratic(eps: f64) -> BayesProblem {
        BayesProblem::new(Arc::new(QuadraticModel::new(eps)), vec![0.9], 0.1).unwrap()
    }

    #[test]
    fn misfit_at_origin_of_quadratic() {
        assert_relative_eq!(quadratic(0.01).misfit(&[0.0, 0.0]).unwrap(), 4.05, epsilon = 1e-14);
    }

    #[test]
    fn misfit_vanishes_when_model_matches_data() {
        let p = BayesProblem::new(Arc::new(Constant { dim: 3, value: 2.5 }), vec![2.5], 0.3).unwrap();
        assert_eq!(p.misfit(&[1.0, -2.0, 0.5]).unwrap(), 0.0);
        assert!(p.misfit_gradient(&[1.0, -2.0, 0.5]).unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn rejects_bad_noise_and_dimensions() {
        let model: Arc<dyn ForwardModel> = Arc::new(Constant { dim: 2, value: 0.0 });
        assert!(BayesProblem::new(model.clone(), vec![0.0], 0.0).is_err());
        assert!(BayesProblem::new(model.clone(), vec![0.0, 1.0], 1.0).is_err());
        let p = BayesProblem::new(model, vec![0.0], 1.0).unwrap();
        assert!(matches!(p.misfit(&[0.0]), Err(Error::Dimension(_))));
        assert!(p.misfit(&[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn quadratic_gradient_matches_central_differences() {
        let p = quadratic(0.01);
        let x = [1.0, 0.0];
        let g = p.misfit_gradient(&x).unwrap();
        for i in 0..2 {
            let h = 1e-5;
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (p.misfit(&xp).unwrap() - p.misfit(&xm).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1e-12), "{fd} vs {}", g[i]);
        }
    }

    #[test]
    fn surrogate_of_constant_misfit_is_constant() {
        let p = BayesProblem::new(Arc::new(Constant { dim: 3, value: 1.0 }), vec![3.0], 0.5).unwrap();
        let s = subspace_from_diag(&[3.0, 2.0, 1.0], 1);
        let c = p.misfit(&[0.0; 3]).unwrap();
        for samples in [1, 4, 10] {
            let sur = MisfitSurrogate::new(&p, &s, InnerRule::MonteCarlo { samples }).unwrap();
            let mut rng = stream(1, 0);
            assert_relative_eq!(sur.evaluate(&[0.7], &mut rng).unwrap(), c, epsilon = 1e-14);
        }
    }

    #[test]
    fn log_approx_posterior_at_origin_with_zero_misfit() {
        let p = BayesProblem::new(Arc::new(Constant { dim: 3, value: 0.0 }), vec![0.0], 0.5).unwrap();
        let s = subspace_from_diag(&[3.0, 2.0, 1.0], 2);
        let sur = MisfitSurrogate::new(&p, &s, InnerRule::MonteCarlo { samples: 3 }).unwrap();
        let mut rng = stream(0, 0);
        assert_relative_eq!(
            sur.log_approx_posterior(&[0.0, 0.0], &mut rng).unwrap(),
            -(2.0 * PI).ln(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn gauss_hermite_rule_requires_one_inactive_dimension() {
        let p = BayesProblem::new(Arc::new(Constant { dim: 3, value: 0.0 }), vec![0.0], 0.5).unwrap();
        let s = subspace_from_diag(&[3.0, 2.0, 1.0], 1);
        assert!(MisfitSurrogate::new(&p, &s, InnerRule::GaussHermite { points: 10 }).is_err());
        assert!(MisfitSurrogate::new(&p, &s, InnerRule::MonteCarlo { samples: 0 }).is_err());
        let s2 = subspace_from_diag(&[3.0, 2.0, 1.0], 2);
        assert!(MisfitSurrogate::new(&p, &s2, InnerRule::GaussHermite { points: 10 }).is_ok());
        assert_eq!(InnerRule::default_for(1), InnerRule::GaussHermite { points: 10 });
        assert_eq!(InnerRule::default_for(5), InnerRule::MonteCarlo { samples: 10 });
    }

    #[test]
    fn surrogate_counts_one_forward_call_per_inner_point() {
        let p = quadratic(0.01);
        let s = subspace_from_diag(&[2.0, 1.0], 1);
        let sur = MisfitSurrogate::new(&p, &s, InnerRule::GaussHermite { points: 10 }).unwrap();
        let mut rng = stream(0, 0);
        sur.evaluate(&[0.3], &mut rng).unwrap();
        assert_eq!(p.forward_calls(), 10);
    }

    #[test]
    fn non_finite_inner_value_reports_the_draw() {
        struct Blowup;
        impl ForwardModel for Blowup {
            fn param_dim(&self) -> usize {
                2
            }
            fn obs_dim(&self) -> usize {
                1
            }
            fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
                Ok(vec![if x[1] > 0.0 { f64::INFINITY } else { 0.0 }])
            }
            fn forward_and_pullback(
                &self,
                x: &[f64],
                _w: &dyn Fn(&[f64]) -> Vec<f64>,
            ) -> Result<(Vec<f64>, Vec<f64>)> {
                Ok((self.forward(x)?, vec![0.0; 2]))
            }
        }
        let p = BayesProblem::new(Arc::new(Blowup), vec![0.0], 1.0).unwrap();
        let s = subspace_from_diag(&[2.0, 1.0], 1);
        let sur = MisfitSurrogate::new(&p, &s, InnerRule::GaussHermite { points: 4 }).unwrap();
        let err = sur.evaluate(&[0.0], &mut stream(0, 0)).unwrap_err();
        match err {
            Error::NonFiniteSurrogate { index, z } => {
                assert_eq!(index, 2);
                assert!(z[0] > 0.0);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn reference_refuses_large_inactive_space() {
        let p = BayesProblem::new(Arc::new(Constant { dim: 4, value: 0.0 }), vec![0.0], 0.5).unwrap();
        let s = subspace_from_diag(&[4.0, 3.0, 2.0, 1.0], 1);
        assert!(matches!(
            conditional_expectation_reference(&p, &s, &[0.0], 5),
            Err(Error::QuadratureDimension { dim: 3, .. })
        ));
    }

    #[test]
    fn reference_of_constant_is_constant() {
        let p = BayesProblem::new(Arc::new(Constant { dim: 3, value: 1.0 }), vec![2.0], 0.25).unwrap();
        let s = subspace_from_diag(&[3.0, 2.0, 1.0], 1);
        let g = conditional_expectation_reference(&p, &s, &[0.4], 7).unwrap();
        assert_relative_eq!(g, 2.0, epsilon = 1e-13);
    }

    fn quadratic_subspace(eps: f64) -> ActiveSubspace {
        let p = quadratic(eps);
        let c = crate::subspace::estimate_c_quadrature(|x| p.misfit_gradient(x), 2, 50).unwrap();
        partition(&eigendecompose(&c).unwrap(), 1).unwrap()
    }

    #[test]
    fn quadratic_reference_self_converges() {
        let p = quadratic(0.01);
        let s = quadratic_subspace(0.01);
        let g50 = conditional_expectation_reference(&p, &s, &[0.0], 50).unwrap();
        let g80 = conditional_expectation_reference(&p, &s, &[0.0], 80).unwrap();
        assert!((g50 - g80).abs() <= 1e-10 * g80.abs(), "{g50} vs {g80}");
    }

    #[test]
    fn ridge_function_surrogate_is_exact() {
        use crate::problems::linear_gaussian::{linear_closed_forms, LinearGaussianProblem};
        let lp = LinearGaussianProblem::new(
            DMatrix::from_row_slice(1, 4, &[0.3, -1.2, 0.8, 0.5]),
            DVector::from_vec(vec![0.7]),
            0.2,
        )
        .unwrap();
        let cf = linear_closed_forms(&lp, 1).unwrap();
        assert!(cf.subspace.trailing_sum().abs() < 1e-12 * cf.subspace.leading_sum());
        let p = lp.bayes_problem().unwrap();
        let mut rng = stream(8, 0);
        for samples in [1, 7] {
            let sur = MisfitSurrogate::new(&p, &cf.subspace, InnerRule::MonteCarlo { samples }).unwrap();
            for _ in 0..10 {
                let x = crate::rng::standard_normal_vec(&mut rng, 4);
                let f = p.misfit(&x).unwrap();
                let g = sur.evaluate(&cf.subspace.active_coordinates(&x), &mut rng).unwrap();
                assert!((f - g).abs() <= 1e-12 * f.max(1.0), "{f} vs {g}");
            }
        }
    }

    #[test]
    fn log_approx_posterior_is_minus_surrogate_plus_log_prior() {
        let p = quadratic(0.01);
        let s = quadratic_subspace(0.01);
        let sur = MisfitSurrogate::new(&p, &s, InnerRule::MonteCarlo { samples: 5 }).unwrap();
        let mut ys = stream(3, 0);
        for k in 0..10 {
            let y = crate::rng::standard_normal_vec(&mut ys, 1);
            let lp = sur.log_approx_posterior(&y, &mut stream(k, 1)).unwrap();
            let g = sur.evaluate(&y, &mut stream(k, 1)).unwrap();
            let density = (-g).exp() * (-0.5 * y[0] * y[0]).exp() / (2.0 * PI).sqrt();
            assert_relative_eq!(lp, density.ln(), max_relative = 1e-12);
        }
    }

    #[test]
    fn shifting_the_misfit_shifts_the_log_density() {
        let s = subspace_from_diag(&[3.0, 2.0, 1.0], 2);
        let delta = 0.375;
        // constant misfits c and c + δ: (d − m)²/(2σ²) with σ² = 1/2
        let c = 1.0;
        let p1 = BayesProblem::new(Arc::new(Constant { dim: 3, value: 0.0 }), vec![c], 0.5).unwrap();
        let p2 = BayesProblem::new(
            Arc::new(Constant { dim: 3, value: 0.0 }),
            vec![(c * c + delta).sqrt()],
            0.5,
        )
        .unwrap();
        let y = [0.4, -1.1];
        let a = MisfitSurrogate::new(&p1, &s, InnerRule::MonteCarlo { samples: 3 })
            .unwrap()
            .log_approx_posterior(&y, &mut stream(0, 1))
            .unwrap();
        let b = MisfitSurrogate::new(&p2, &s, InnerRule::MonteCarlo { samples: 3 })
            .unwrap()
            .log_approx_posterior(&y, &mut stream(0, 1))
            .unwrap();
        assert_relative_eq!(a - b, delta, epsilon = 1e-12);
    }

    #[test]
    fn surrogate_variance_shrinks_like_one_over_m() {
        let p = quadratic(0.01);
        let s = quadratic_subspace(0.01);
        let y = [0.5];
        let scaled: Vec<f64> = [10usize, 100, 1000]
            .iter()
            .map(|&m| {
                let sur = MisfitSurrogate::new(&p, &s, InnerRule::MonteCarlo { samples: m }).unwrap();
                let v: Vec<f64> = (0..200)
                    .map(|seed| sur.evaluate(&y, &mut stream(seed, 1)).unwrap())
                    .collect();
                let mean = v.iter().sum::<f64>() / 200.0;
                m as f64 * v.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / 199.0
            })
            .collect();
        for w in scaled.windows(2) {
            let ratio = w[1] / w[0];
            assert!((0.6..1.6).contains(&ratio), "M·Var ratios {scaled:?}");
        }
    }

    #[test]
    fn surrogate_error_within_monte_carlo_bound() {
        let p = quadratic(0.01);
        let s = quadratic_subspace(0.01);
        let tail = s.trailing_sum().sqrt();
        let mut xs = stream(4, 0);
        let points: Vec<Vec<f64>> = (0..2000).map(|_| crate::rng::standard_normal_vec(&mut xs, 2)).collect();
        for m in [1usize, 10, 100] {
            let sur = MisfitSurrogate::new(&p, &s, InnerRule::MonteCarlo { samples: m }).unwrap();
            let mut inner = stream(4, 1);
            let mse = points
                .iter()
                .map(|x| {
                    let g = sur.evaluate(&s.active_coordinates(x), &mut inner).unwrap();
                    (p.misfit(x).unwrap() - g).powi(2)
                })
                .sum::<f64>()
                / points.len() as f64;
            let bound = (1.0 + 1.0 / (m as f64).sqrt()) * tail;
            assert!(mse.sqrt() <= bound, "M={m}: rms {} > {bound}", mse.sqrt());
        }
    }

    #[test]
    fn surrogate_is_deterministic_under_a_seed() {
        let p = quadratic(0.01);
        let s = quadratic_subspace(0.01);
        let sur = MisfitSurrogate::new(&p, &s, InnerRule::MonteCarlo { samples: 10 }).unwrap();
        let a = sur.evaluate(&[0.2], &mut stream(5, 1)).unwrap();
        let b = sur.evaluate(&[0.2], &mut stream(5, 1)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
