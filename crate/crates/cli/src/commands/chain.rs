//! `run-chain`: vanilla or active-subspace Metropolis–Hastings with
//! periodic checkpoints.
//!
//! A checkpoint records the walk state bit for bit, both random stream
//! positions and the byte length of the chain file at that point, so a
//! resumed run writes exactly the file an uninterrupted run would have.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use asmcmc::io::ChainWriter;
use asmcmc::posterior::{BayesProblem, InnerRule, MisfitSurrogate};
use asmcmc::rng::{stream, ChainRng, StreamPosition};
use asmcmc::sampler::RandomWalk;
use serde::{Deserialize, Serialize};

use super::load_subspace;
use crate::config::{RunConfig, SamplerSpec, Variant};
use crate::error::ConfigError;
use crate::output::{read_json, refuse_overwrite, sidecar_path, write_json, Outputs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSidecar {
    pub problem: String,
    pub variant: Variant,
    /// Coordinates per state: `m` for vanilla chains, `n` for active ones.
    pub dim: usize,
    pub steps: usize,
    pub proposal_var: f64,
    pub seed: u64,
    pub burn_in: usize,
    /// Accepted states over all states, the initial state counted as
    /// accepted.
    pub acceptance_rate: f64,
    pub nonfinite_rejections: u64,
    pub inner_rule: Option<InnerRule>,
    /// Forward-model evaluations spent producing the chain.
    pub forward_calls: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    /// Problem, sampler and surrogate settings the run was started with.
    settings: serde_json::Value,
    next_step: usize,
    state_bits: Vec<u64>,
    log_density_bits: u64,
    proposal_rng: StreamPosition,
    inner_rng: Option<StreamPosition>,
    chain_bytes: u64,
    accepted: u64,
    nonfinite_rejections: u64,
    forward_calls: u64,
}

pub struct RunChainOptions {
    pub name: Option<String>,
    pub resume: bool,
    pub checkpoint_every: usize,
    /// Stop (leaving a checkpoint) after this many transitions in this
    /// invocation.
    pub pause_after: Option<usize>,
}

#[allow(clippy::large_enum_variant)]
enum Target<'a> {
    Vanilla(&'a BayesProblem),
    Active {
        surrogate: MisfitSurrogate<'a>,
        inner: ChainRng,
    },
}

impl Target<'_> {
    fn log_density(&mut self, x: &[f64]) -> asmcmc::Result<f64> {
        match self {
            Target::Vanilla(p) => p.log_posterior(x),
            Target::Active { surrogate, inner } => surrogate.log_approx_posterior(x, inner),
        }
    }

    fn inner_position(&self, seed: u64) -> Option<StreamPosition> {
        match self {
            Target::Vanilla(_) => None,
            Target::Active { inner, .. } => Some(StreamPosition::of(inner, seed)),
        }
    }
}

struct Paths {
    chain: PathBuf,
    sidecar: PathBuf,
    checkpoint: PathBuf,
}

impl Paths {
    fn new(out: &Outputs, name: &str) -> Self {
        let chain = out.path(&format!("{name}.csv"));
        Self {
            sidecar: sidecar_path(&chain),
            checkpoint: out.path(&format!("{name}.checkpoint.json")),
            chain,
        }
    }
}

pub fn run_chain(config: &RunConfig, out: &Outputs, subspace_dir: &Path, opts: &RunChainOptions) -> anyhow::Result<()> {
    let spec = config.sampler()?.clone();
    if opts.checkpoint_every == 0 {
        return Err(ConfigError("--checkpoint-every must be positive".into()).into());
    }
    let name = opts.name.clone().unwrap_or_else(|| match spec.variant {
        Variant::Vanilla => "vanilla".to_string(),
        Variant::Active => "active".to_string(),
    });
    let paths = Paths::new(out, &name);
    if opts.resume {
        if !paths.checkpoint.exists() {
            return Err(ConfigError(format!("no checkpoint at {}", paths.checkpoint.display())).into());
        }
        refuse_overwrite(&paths.sidecar, false)?;
    } else {
        out.claim(&[
            &format!("{name}.csv"),
            &format!("{name}.json"),
            &format!("{name}.checkpoint.json"),
        ])?;
    }

    let built = config.problem.build()?;
    let problem = &built.bayes;
    let (mut target, dim, inner_rule) = match spec.variant {
        Variant::Vanilla => (Target::Vanilla(problem), problem.dim(), None),
        Variant::Active => {
            let (subspace, _) = load_subspace(subspace_dir, problem.dim())?;
            let rule = config
                .surrogate
                .unwrap_or_else(|| InnerRule::default_for(subspace.inactive_dim()));
            let dim = subspace.active_dim();
            let surrogate = MisfitSurrogate::new(problem, &subspace, rule)?;
            (
                Target::Active {
                    surrogate,
                    inner: stream(spec.seed, 1),
                },
                dim,
                Some(rule),
            )
        }
    };
    let x0 = spec.x0.clone().unwrap_or_else(|| vec![0.0; dim]);
    if x0.len() != dim {
        return Err(ConfigError(format!("sampler.x0 has {} entries, chain has {dim} coordinates", x0.len())).into());
    }
    let settings = serde_json::json!({
        "problem": config.problem,
        "sampler": spec,
        "inner_rule": inner_rule,
        "dim": dim,
    });
    let sidecar = |acceptance_rate: f64, nonfinite: u64, forward_calls: u64| ChainSidecar {
        problem: config.problem.name().to_string(),
        variant: spec.variant,
        dim,
        steps: spec.steps,
        proposal_var: spec.proposal_var,
        seed: spec.seed,
        burn_in: spec.burn_in,
        acceptance_rate,
        nonfinite_rejections: nonfinite,
        inner_rule,
        forward_calls,
    };

    let started = Instant::now();
    problem.reset_counters();
    let (mut walk, mut writer, start, mut accepted, calls_before, nonfinite_before) = if opts.resume {
        let ck: Checkpoint = read_json(&paths.checkpoint)?;
        if ck.settings != settings {
            return Err(ConfigError(format!(
                "checkpoint {} was written with different settings",
                paths.checkpoint.display()
            ))
            .into());
        }
        if let (Target::Active { inner, .. }, Some(pos)) = (&mut target, ck.inner_rng) {
            *inner = pos.restore();
        }
        let state: Vec<f64> = ck.state_bits.iter().map(|&b| f64::from_bits(b)).collect();
        let walk = RandomWalk::resume(
            state,
            f64::from_bits(ck.log_density_bits),
            spec.proposal_var,
            ck.proposal_rng.restore(),
        )?;
        let writer = ChainWriter::append(&paths.chain, dim, ck.chain_bytes)?;
        eprintln!("resuming at step {} of {}", ck.next_step, spec.steps);
        (walk, writer, ck.next_step, ck.accepted, ck.forward_calls, ck.nonfinite_rejections)
    } else {
        let mut writer = ChainWriter::create(&paths.chain, dim)?;
        if spec.steps == 0 {
            writer.flush()?;
            write_json(&paths.sidecar, &sidecar(f64::NAN, 0, 0))?;
            println!("{name}: empty chain");
            return Ok(());
        }
        let l0 = target.log_density(&x0).map_err(|e| asmcmc::Error::ChainStep {
            step: 0,
            source: Box::new(e),
        })?;
        writer.write(0, &x0, l0, true)?;
        let walk = RandomWalk::resume(x0.clone(), l0, spec.proposal_var, stream(spec.seed, 0))?;
        (walk, writer, 1, 1, 0, 0)
    };

    let save = |walk: &RandomWalk<ChainRng>,
                target: &Target<'_>,
                writer: &mut ChainWriter,
                next_step: usize,
                accepted: u64|
     -> anyhow::Result<()> {
        let ck = Checkpoint {
            settings: settings.clone(),
            next_step,
            state_bits: walk.state().iter().map(|v| v.to_bits()).collect(),
            log_density_bits: walk.log_density().to_bits(),
            proposal_rng: StreamPosition::of(walk.rng(), spec.seed),
            inner_rng: target.inner_position(spec.seed),
            chain_bytes: writer.flush()?,
            accepted,
            nonfinite_rejections: nonfinite_before + walk.nonfinite_rejections() as u64,
            forward_calls: calls_before + problem.forward_calls(),
        };
        let tmp = paths.checkpoint.with_extension("json.tmp");
        write_json(&tmp, &ck)?;
        fs::rename(&tmp, &paths.checkpoint)?;
        Ok(())
    };

    if start == 1 {
        save(&walk, &target, &mut writer, 1, accepted)?;
    }
    for step in start..spec.steps {
        if opts.pause_after.is_some_and(|p| step - start >= p) {
            save(&walk, &target, &mut writer, step, accepted)?;
            println!(
                "{name}: paused at step {step} of {}; continue with --resume",
                spec.steps
            );
            return Ok(());
        }
        // on failure the last checkpoint stays valid
        let ok = walk
            .step(|x| target.log_density(x))
            .map_err(|e| asmcmc::Error::ChainStep {
                step,
                source: Box::new(e),
            })?;
        accepted += u64::from(ok);
        writer.write(step, walk.state(), walk.log_density(), ok)?;
        if (step + 1) % opts.checkpoint_every == 0 && step + 1 < spec.steps {
            save(&walk, &target, &mut writer, step + 1, accepted)?;
        }
    }
    writer.flush()?;
    let rate = accepted as f64 / spec.steps as f64;
    let calls = calls_before + problem.forward_calls();
    let nonfinite = nonfinite_before + walk.nonfinite_rejections() as u64;
    write_json(&paths.sidecar, &sidecar(rate, nonfinite, calls))?;
    if paths.checkpoint.exists() {
        fs::remove_file(&paths.checkpoint)?;
    }
    println!(
        "{name}: {} steps, acceptance {:.2}%, {calls} forward calls, {:.1?}",
        spec.steps,
        100.0 * rate,
        started.elapsed()
    );
    Ok(())
}

/// Applies command-line overrides to the sampler section.
pub fn override_sampler(
    config: &mut RunConfig,
    variant: Option<Variant>,
    steps: Option<usize>,
    proposal_var: Option<f64>,
    seed: Option<u64>,
) -> anyhow::Result<()> {
    let base = config.sampler.clone();
    let mut spec = match base {
        Some(s) => s,
        None => SamplerSpec {
            variant: variant.ok_or_else(|| ConfigError("missing section `sampler` (or pass --variant, --steps and --proposal-var)".into()))?,
            steps: steps.ok_or_else(|| ConfigError("missing sampler steps".into()))?,
            proposal_var: proposal_var.ok_or_else(|| ConfigError("missing sampler proposal_var".into()))?,
            seed: 0,
            burn_in: 0,
            x0: None,
        },
    };
    if let Some(v) = variant {
        if v != spec.variant {
            spec.x0 = None;
        }
        spec.variant = v;
    }
    if let Some(s) = steps {
        spec.steps = s;
        spec.burn_in = spec.burn_in.min(s);
    }
    if let Some(p) = proposal_var {
        spec.proposal_var = p;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    config.sampler = Some(spec);
    config.validate()?;
    Ok(())
}
