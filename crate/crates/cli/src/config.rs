//! Run configuration files.

use std::path::{Path, PathBuf};

use anyhow::Context;
use asmcmc::posterior::{BayesProblem, InnerRule};
use asmcmc::problems::quadratic::{DEFAULT_DATA, DEFAULT_NOISE_VAR};
use asmcmc::problems::{poisson_kl_problem, quadratic_problem, LinearGaussianProblem, PoissonKlConfig};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    #[serde(default)]
    pub subspace: Option<SubspaceSpec>,
    /// Inner rule of the misfit surrogate; defaults by inactive dimension.
    #[serde(default)]
    pub surrogate: Option<InnerRule>,
    #[serde(default)]
    pub sampler: Option<SamplerSpec>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ProblemSpec {
    Quadratic(QuadraticSpec),
    LinearGaussian(LinearSpec),
    PoissonKl(PoissonKlConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSpec {
    pub eps: f64,
    #[serde(default = "default_quadratic_data")]
    pub data: f64,
    #[serde(default = "default_quadratic_noise")]
    pub noise_var: f64,
}

fn default_quadratic_data() -> f64 {
    DEFAULT_DATA
}

fn default_quadratic_noise() -> f64 {
    DEFAULT_NOISE_VAR
}

/// A random standard Gaussian matrix with data generated from a prior draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSpec {
    pub rows: usize,
    pub cols: usize,
    pub noise_var: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubspaceSpec {
    pub estimator: EstimatorSpec,
    /// Active dimension; the largest logarithmic eigenvalue gap among
    /// `n ≤ max_n` when absent.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "default_max_n")]
    pub max_n: usize,
    /// Bootstrap replicates for the Monte Carlo estimator; 0 disables.
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
}

fn default_max_n() -> usize {
    5
}

fn default_bootstrap() -> usize {
    asmcmc::subspace::DEFAULT_BOOTSTRAP
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorSpec {
    Quadrature { points_per_dim: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Vanilla,
    Active,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    pub variant: Variant,
    pub steps: usize,
    pub proposal_var: f64,
    pub seed: u64,
    #[serde(default)]
    pub burn_in: usize,
    /// Initial state; the origin when absent.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Checks every field that is present; commands check that the
    /// sections they need exist.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let dim = self.problem.dim();
        match &self.problem {
            ProblemSpec::Quadratic(q) => {
                positive("problem.eps", q.eps)?;
                positive("problem.noise_var", q.noise_var)?;
                finite("problem.data", q.data)?;
            }
            ProblemSpec::LinearGaussian(l) => {
                if l.rows == 0 || l.cols == 0 {
                    return Err(ConfigError("problem.rows and problem.cols must be positive".into()));
                }
                positive("problem.noise_var", l.noise_var)?;
            }
            ProblemSpec::PoissonKl(p) => p.validate().map_err(|e| ConfigError(format!("problem: {e}")))?,
        }
        if let Some(s) = &self.subspace {
            match s.estimator {
                EstimatorSpec::Quadrature { points_per_dim } => {
                    if points_per_dim == 0 {
                        return Err(ConfigError("subspace.estimator.points_per_dim must be positive".into()));
                    }
                    if dim > asmcmc::subspace::QUADRATURE_MAX_DIM {
                        return Err(ConfigError(format!(
                            "subspace.estimator: quadrature is limited to {} parameters, problem has {dim}",
                            asmcmc::subspace::QUADRATURE_MAX_DIM
                        )));
                    }
                }
                EstimatorSpec::MonteCarlo { samples, .. } => {
                    if samples == 0 {
                        return Err(ConfigError("subspace.estimator.samples must be positive".into()));
                    }
                    if s.bootstrap > 0 && samples < 10 {
                        return Err(ConfigError(
                            "subspace.estimator.samples must be at least 10 for the bootstrap".into(),
                        ));
                    }
                }
            }
            if let Some(n) = s.n {
                if n == 0 || n >= dim {
                    return Err(ConfigError(format!("subspace.n must lie in [1, {}], got {n}", dim - 1)));
                }
            }
            if s.max_n == 0 {
                return Err(ConfigError("subspace.max_n must be positive".into()));
            }
            if s.bootstrap == 1 {
                return Err(ConfigError("subspace.bootstrap must be 0 or at least 2".into()));
            }
        }
        if let Some(rule) = self.surrogate {
            if rule.evaluations() == 0 {
                return Err(ConfigError("surrogate: sample or point count must be positive".into()));
            }
        }
        if let Some(s) = &self.sampler {
            if !(s.proposal_var > 0.0 && s.proposal_var.is_finite()) {
                return Err(ConfigError(format!(
                    "sampler.proposal_var must be positive, got {}",
                    s.proposal_var
                )));
            }
            if s.burn_in > s.steps {
                return Err(ConfigError("sampler.burn_in exceeds sampler.steps".into()));
            }
            if let Some(x0) = &s.x0 {
                if x0.iter().any(|v| !v.is_finite()) {
                    return Err(ConfigError("sampler.x0 must be finite".into()));
                }
                if s.variant == Variant::Vanilla && x0.len() != dim {
                    return Err(ConfigError(format!(
                        "sampler.x0 has {} entries, problem has {dim} parameters",
                        x0.len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn subspace(&self) -> Result<&SubspaceSpec, ConfigError> {
        self.subspace
            .as_ref()
            .ok_or_else(|| ConfigError("missing section `subspace`".into()))
    }

    pub fn sampler(&self) -> Result<&SamplerSpec, ConfigError> {
        self.sampler
            .as_ref()
            .ok_or_else(|| ConfigError("missing section `sampler`".into()))
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError(format!("{field} must be positive, got {v}")))
    }
}

fn finite(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError(format!("{field} must be finite")))
    }
}

/// A problem built from its configuration, with whatever generating truth it has.
pub struct BuiltProblem {
    pub bayes: BayesProblem,
    pub x_true: Option<Vec<f64>>,
    pub matrix: Option<DMatrix<f64>>,
    /// Forward solves spent generating synthetic data.
    pub generation_calls: u64,
}

impl ProblemSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::Quadratic(_) => "quadratic",
            ProblemSpec::LinearGaussian(_) => "linear_gaussian",
            ProblemSpec::PoissonKl(_) => "poisson_kl",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ProblemSpec::Quadratic(_) => 2,
            ProblemSpec::LinearGaussian(l) => l.cols,
            ProblemSpec::PoissonKl(p) => p.m_kl,
        }
    }

    pub fn build(&self) -> anyhow::Result<BuiltProblem> {
        Ok(match self {
            ProblemSpec::Quadratic(q) => BuiltProblem {
                bayes: quadratic_problem(q.eps, q.data, q.noise_var)?,
                x_true: None,
                matrix: None,
                generation_calls: 0,
            },
            ProblemSpec::LinearGaussian(l) => {
                let p = LinearGaussianProblem::random(l.rows, l.cols, l.noise_var, l.seed)?;
                BuiltProblem {
                    bayes: p.bayes_problem()?,
                    x_true: None,
                    matrix: Some(p.matrix),
                    generation_calls: 0,
                }
            }
            ProblemSpec::PoissonKl(c) => {
                if c.is_expensive() {
                    eprintln!(
                        "note: a {0}×{0} grid is expensive; the KL eigensolve and every forward solve scale with the node count",
                        c.grid_n
                    );
                }
                let p = poisson_kl_problem(c).context("building the Poisson problem")?;
                let bayes = p.bayes_problem()?;
                BuiltProblem {
                    bayes,
                    x_true: Some(p.x_true),
                    matrix: None,
                    generation_calls: p.model.solve_count(),
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, String> {
        let c: RunConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
        c.validate().map_err(|e| e.0)?;
        Ok(c)
    }

    #[test]
    fn quadratic_defaults() {
        let c = parse(r#"{"problem": {"name": "quadratic", "eps": 0.01}}"#).unwrap();
        assert_eq!(
            c.problem,
            ProblemSpec::Quadratic(QuadraticSpec {
                eps: 0.01,
                data: 0.9,
                noise_var: 0.1
            })
        );
        assert_eq!(c.output, PathBuf::from("out"));
    }

    #[test]
    fn missing_name_is_reported() {
        let e = parse(r#"{"problem": {"eps": 0.01}}"#).unwrap_err();
        assert!(e.contains("name"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            r#"{"problem": {"name": "quadratic", "eps": 0.01, "bogus": 1}}"#,
            r#"{"problem": {"name": "quadratic", "eps": 0.01}, "extra": true}"#,
            r#"{"problem": {"name": "poisson_kl", "grid_n": 32, "m_kl": 20, "beta": 0.02, "seed": 0, "x": 1}}"#,
            r#"{"problem": {"name": "quadratic", "eps": 0.01},
                "sampler": {"variant": "vanilla", "steps": 10, "proposal_var": 0.5, "seed": 0, "thin": 2}}"#,
            r#"{"problem": {"name": "quadratic", "eps": 0.01},
                "subspace": {"estimator": {"method": "quadrature", "points_per_dim": 5, "seed": 1}}}"#,
        ] {
            assert!(parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in [
            r#"{"problem": {"name": "quadratic", "eps": -1}}"#,
            r#"{"problem": {"name": "quadratic", "eps": 0.01},
                "sampler": {"variant": "vanilla", "steps": 10, "proposal_var": 0, "seed": 0}}"#,
            r#"{"problem": {"name": "quadratic", "eps": 0.01},
                "subspace": {"estimator": {"method": "quadrature", "points_per_dim": 5}, "n": 2}}"#,
            r#"{"problem": {"name": "poisson_kl", "grid_n": 8, "m_kl": 20, "beta": 0.02, "seed": 0}}"#,
            r#"{"problem": {"name": "poisson_kl", "grid_n": 32, "m_kl": 20, "beta": 0.02, "seed": 0},
                "subspace": {"estimator": {"method": "quadrature", "points_per_dim": 5}}}"#,
        ] {
            assert!(parse(text).is_err(), "{text}");
        }
    }
}
