//! Random-walk Metropolis–Hastings in the full space, the same walk on the
//! active variables with the surrogate misfit, and reconstruction of
//! full-space samples from an active chain.
//!
//! A chain of `n_steps` states starts with the initial state itself (marked
//! accepted) followed by `n_steps − 1` transitions, so the target is
//! evaluated exactly `n_steps` times. The log-density of the current state
//! is cached and never recomputed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posterior::{BayesProblem, MisfitSurrogate};
use crate::rng::{fill_standard_normal, stream, ChainRng};
use crate::subspace::ActiveSubspace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceTag {
    Full,
    Active,
    Reconstructed,
}

/// States stored row-major, one row per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    dim: usize,
    values: Vec<f64>,
    log_density: Vec<f64>,
    accepted: Vec<bool>,
    pub proposal_var: f64,
    pub seed: Option<u64>,
    pub space: SpaceTag,
    /// Proposals rejected because the target was not finite there.
    pub nonfinite_rejections: usize,
}

impl Chain {
    pub fn new(dim: usize, proposal_var: f64, seed: Option<u64>, space: SpaceTag) -> Self {
        Self {
            dim,
            values: Vec::new(),
            log_density: Vec::new(),
            accepted: Vec::new(),
            proposal_var,
            seed,
            space,
            nonfinite_rejections: 0,
        }
    }

    pub fn with_capacity(mut self, steps: usize) -> Self {
        self.values.reserve(steps * self.dim);
        self.log_density.reserve(steps);
        self.accepted.reserve(steps);
        self
    }

    pub fn push(&mut self, state: &[f64], log_density: f64, accepted: bool) -> Result<()> {
        if state.len() != self.dim {
            return Err(Error::Dimension(format!(
                "state has {} coordinates, chain has {}",
                state.len(),
                self.dim
            )));
        }
        self.values.extend_from_slice(state);
        self.log_density.push(log_density);
        self.accepted.push(accepted);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.accepted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accepted.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim.max(1)).take(self.len())
    }

    pub fn log_density(&self) -> &[f64] {
        &self.log_density
    }

    pub fn accepted(&self) -> &[bool] {
        &self.accepted
    }

    /// One coordinate across all states.
    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.values.iter().skip(j).step_by(self.dim).copied().collect()
    }

    /// Fraction of accepted steps, the initial state included.
    pub fn acceptance_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.accepted.iter().filter(|&&a| a).count() as f64 / self.len() as f64
    }

    /// Acceptance over the transitions only, the initial state excluded.
    pub fn transition_acceptance_rate(&self) -> f64 {
        if self.len() < 2 {
            return 0.0;
        }
        self.accepted[1..].iter().filter(|&&a| a).count() as f64 / (self.len() - 1) as f64
    }

    /// The chain with its first `burn_in` states dropped.
    pub fn discard(&self, burn_in: usize) -> Chain {
        let k = burn_in.min(self.len());
        Chain {
            dim: self.dim,
            values: self.values[k * self.dim..].to_vec(),
            log_density: self.log_density[k..].to_vec(),
            accepted: self.accepted[k..].to_vec(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Chain {
        Chain::new(self.dim, self.proposal_var, self.seed, self.space)
    }
}

/// A random walk `x' = x + √var ξ`, `ξ ~ N(0, I)`, with its cached state.
#[derive(Debug, Clone)]
pub struct RandomWalk<R> {
    proposal_sd: f64,
    rng: R,
    state: Vec<f64>,
    log_density: f64,
    proposal: Vec<f64>,
    nonfinite_rejections: usize,
}

impl<R: Rng> RandomWalk<R> {
    /// Starts from a state whose log-density is already known.
    pub fn resume(state: Vec<f64>, log_density: f64, proposal_var: f64, rng: R) -> Result<Self> {
        if !(proposal_var > 0.0 && proposal_var.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "proposal variance must be positive, got {proposal_var}"
            )));
        }
        if !log_density.is_finite() {
            return Err(Error::InvalidArgument(
                "log-density at the initial state is not finite".into(),
            ));
        }
        let dim = state.len();
        Ok(Self {
            proposal_sd: proposal_var.sqrt(),
            rng,
            state,
            log_density,
            proposal: vec![0.0; dim],
            nonfinite_rejections: 0,
        })
    }

    /// One transition. Errors from the target abort the step; non-finite
    /// target values reject the proposal.
    pub fn step<F>(&mut self, mut log_target: F) -> Result<bool>
    where
        F: FnMut(&[f64]) -> Result<f64>,
    {
        fill_standard_normal(&mut self.rng, &mut self.proposal);
        for (p, x) in self.proposal.iter_mut().zip(&self.state) {
            *p = x + self.proposal_sd * *p;
        }
        let u: f64 = self.rng.random();
        let candidate = log_target(&self.proposal)?;
        if !candidate.is_finite() {
            self.nonfinite_rejections += 1;
            return Ok(false);
        }
        if u.ln() < candidate - self.log_density {
            std::mem::swap(&mut self.state, &mut self.proposal);
            self.log_density = candidate;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn log_density(&self) -> f64 {
        self.log_density
    }

    pub fn rng(&self) -> &R {
        &self.rng
    }

    pub fn nonfinite_rejections(&self) -> usize {
        self.nonfinite_rejections
    }
}

fn run<R, F>(mut log_target: F, x0: &[f64], n_steps: usize, proposal_var: f64, rng: R, space: SpaceTag) -> Result<Chain>
where
    R: Rng,
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut chain = Chain::new(x0.len(), proposal_var, None, space).with_capacity(n_steps);
    if n_steps == 0 {
        if !(proposal_var > 0.0) {
            return Err(Error::InvalidArgument("proposal variance must be positive".into()));
        }
        return Ok(chain);
    }
    let l0 = log_target(x0).map_err(|e| Error::ChainStep {
        step: 0,
        source: Box::new(e),
    })?;
    let mut walk = RandomWalk::resume(x0.to_vec(), l0, proposal_var, rng)?;
    chain.push(x0, l0, true)?;
    for step in 1..n_steps {
        let accepted = walk.step(&mut log_target).map_err(|e| Error::ChainStep {
            step,
            source: Box::new(e),
        })?;
        chain.push(walk.state(), walk.log_density(), accepted)?;
    }
    chain.nonfinite_rejections = walk.nonfinite_rejections();
    Ok(chain)
}

/// Random-walk Metropolis–Hastings on an arbitrary log-density.
pub fn metropolis_hastings<R, F>(log_target: F, x0: &[f64], n_steps: usize, proposal_var: f64, rng: &mut R) -> Result<Chain>
where
    R: Rng,
    F: FnMut(&[f64]) -> Result<f64>,
{
    run(log_target, x0, n_steps, proposal_var, rng, SpaceTag::Full)
}

/// The vanilla full-space chain on a Bayesian problem, proposals from
/// stream 0 of `seed`.
pub fn vanilla_chain(problem: &BayesProblem, x0: &[f64], n_steps: usize, proposal_var: f64, seed: u64) -> Result<Chain> {
    let mut chain = run(
        |x| problem.log_posterior(x),
        x0,
        n_steps,
        proposal_var,
        stream(seed, 0),
        SpaceTag::Full,
    )?;
    chain.seed = Some(seed);
    Ok(chain)
}

/// The walk on the active variables with target `exp(−ĝ(y)) ρ_pri(y)`.
/// Proposals come from `proposal_rng`, inner surrogate draws from
/// `inner_rng`.
pub fn as_mcmc<R1, R2>(
    surrogate: &MisfitSurrogate<'_>,
    y0: &[f64],
    n_steps: usize,
    proposal_var: f64,
    proposal_rng: &mut R1,
    inner_rng: &mut R2,
) -> Result<Chain>
where
    R1: Rng,
    R2: Rng,
{
    if y0.len() != surrogate.active_dim() {
        return Err(Error::Dimension(format!(
            "initial state has {} coordinates, active space has {}",
            y0.len(),
            surrogate.active_dim()
        )));
    }
    run(
        |y| surrogate.log_approx_posterior(y, inner_rng),
        y0,
        n_steps,
        proposal_var,
        proposal_rng,
        SpaceTag::Active,
    )
}

/// [`as_mcmc`] with proposals on stream 0 and inner draws on stream 1 of `seed`.
pub fn as_mcmc_seeded(surrogate: &MisfitSurrogate<'_>, y0: &[f64], n_steps: usize, proposal_var: f64, seed: u64) -> Result<Chain> {
    let mut chain = as_mcmc(
        surrogate,
        y0,
        n_steps,
        proposal_var,
        &mut stream(seed, 0),
        &mut stream(seed, 1),
    )?;
    chain.seed = Some(seed);
    Ok(chain)
}

/// Full-space samples `x = W1 y + W2 z`, `draws_per_state` per active state.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedChain {
    pub chain: Chain,
    pub draws_per_state: usize,
}

/// Lifts an active chain with fresh standard Gaussian inactive draws.
pub fn reconstruct<R: Rng + ?Sized>(
    active: &Chain,
    subspace: &ActiveSubspace,
    draws_per_state: usize,
    rng: &mut R,
) -> Result<ReconstructedChain> {
    reconstruct_with(active, subspace, draws_per_state, |z| fill_standard_normal(rng, z))
}

/// Lifts an active chain with inactive coordinates supplied by `inactive`.
pub fn reconstruct_with<F>(
    active: &Chain,
    subspace: &ActiveSubspace,
    draws_per_state: usize,
    mut inactive: F,
) -> Result<ReconstructedChain>
where
    F: FnMut(&mut [f64]),
{
    if draws_per_state == 0 {
        return Err(Error::InvalidArgument("draws per state must be at least 1".into()));
    }
    if active.dim() != subspace.active_dim() {
        return Err(Error::Dimension(format!(
            "chain has {} coordinates, active space has {}",
            active.dim(),
            subspace.active_dim()
        )));
    }
    let w1 = subspace.w1();
    let w2 = subspace.w2();
    let m = subspace.dim();
    let mut out = Chain::new(m, active.proposal_var, active.seed, SpaceTag::Reconstructed)
        .with_capacity(active.len() * draws_per_state);
    let mut z = vec![0.0; subspace.inactive_dim()];
    let mut x = vec![0.0; m];
    for k in 0..active.len() {
        let y = active.state(k);
        for _ in 0..draws_per_state {
            inactive(&mut z);
            for (i, xi) in x.iter_mut().enumerate() {
                let mut v = 0.0;
                for (a, ya) in y.iter().enumerate() {
                    v += w1[(i, a)] * ya;
                }
                for (b, zb) in z.iter().enumerate() {
                    v += w2[(i, b)] * zb;
                }
                *xi = v;
            }
            out.push(&x, active.log_density[k], active.accepted[k])?;
        }
    }
    Ok(ReconstructedChain {
        chain: out,
        draws_per_state,
    })
}

/// Convenience wrapper: proposals from stream 0 of `seed` over a plain
/// closure target.
pub fn metropolis_hastings_seeded<F>(log_target: F, x0: &[f64], n_steps: usize, proposal_var: f64, seed: u64) -> Result<Chain>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut chain = run(log_target, x0, n_steps, proposal_var, stream(seed, 0), SpaceTag::Full)?;
    chain.seed = Some(seed);
    Ok(chain)
}

/// Draws `ChainRng` for reconstruction from stream 2 of `seed`.
pub fn reconstruction_rng(seed: u64) -> ChainRng {
    stream(seed, 2)
}
