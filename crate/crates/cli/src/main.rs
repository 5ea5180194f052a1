//! `asmcmc`: experiment driver for active-subspace accelerated MCMC.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use asmcmc::diagnostics::{DiagnoseOptions, DEFAULT_THETA};
use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::chain::{override_sampler, RunChainOptions};
use config::{RunConfig, Variant};
use error::{exit_status, ConfigError};
use output::Outputs;

#[derive(Parser)]
#[command(name = "asmcmc", version, about = "Active-subspace accelerated MCMC experiments")]
struct Cli {
    /// Worker threads for parallel sections; results do not depend on it.
    #[arg(long, global = true)]
    lanes: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `output` from the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<(RunConfig, Outputs)> {
        let config = RunConfig::load(&self.config)?;
        let dir = self.out.clone().unwrap_or_else(|| config.output.clone());
        let out = Outputs::new(&dir, self.force);
        Ok((config, out))
    }

    fn out_dir(&self, config: &RunConfig) -> PathBuf {
        self.out.clone().unwrap_or_else(|| config.output.clone())
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Vanilla,
    Active,
}

#[derive(Subcommand)]
enum Command {
    /// Build the configured problem and write its data and generating truth.
    GenProblem(ConfigArgs),
    /// Estimate C, its eigendecomposition, the gap report and bootstrap
    /// subspace errors.
    EstimateSubspace(ConfigArgs),
    /// Run a vanilla or active-subspace chain.
    RunChain {
        #[command(flatten)]
        common: ConfigArgs,
        /// Directory holding the subspace files (default: output directory).
        #[arg(long)]
        subspace: Option<PathBuf>,
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        proposal_var: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Base name of the chain files (default: the variant).
        #[arg(long)]
        name: Option<String>,
        /// Continue an interrupted run from its checkpoint.
        #[arg(long)]
        resume: bool,
        #[arg(long, default_value_t = 10_000)]
        checkpoint_every: usize,
        /// Stop after this many transitions, leaving a checkpoint.
        #[arg(long)]
        pause_after: Option<usize>,
    },
    /// Lift an active chain to the full parameter space.
    Reconstruct {
        /// Active chain CSV.
        #[arg(long)]
        chain: PathBuf,
        /// Directory holding the subspace files.
        #[arg(long)]
        subspace: PathBuf,
        /// Inactive draws per active state.
        #[arg(long, default_value_t = 10)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output chain CSV; its sidecar is written next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// ESS, autocorrelation and batch-means intervals for chain files.
    Diagnose {
        #[arg(required = true)]
        chains: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        labels: Option<Vec<String>>,
        /// States to discard (default: the sidecar's burn-in).
        #[arg(long)]
        burn_in: Option<usize>,
        /// Eigenvector CSV; report KDEs of the first coordinates of `Wᵀx`.
        #[arg(long)]
        transform: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        transform_coords: usize,
        #[arg(long, default_value_t = 100)]
        acf_lags: usize,
        /// Batch size exponent: batches of ⌊N^θ⌋ states.
        #[arg(long, default_value_t = DEFAULT_THETA)]
        theta: f64,
        #[arg(long, default_value_t = 0.99)]
        level: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Coefficient of variation of the Monte Carlo misfit estimate.
    CovStudy {
        #[command(flatten)]
        common: ConfigArgs,
        #[arg(long)]
        subspace: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1,5,10,20,50")]
        samples: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Hellinger distance between the posterior and its approximation on a
    /// two-parameter problem.
    Hellinger {
        #[command(flatten)]
        common: ConfigArgs,
        #[arg(long)]
        subspace: Option<PathBuf>,
        #[arg(long, default_value_t = 6.0)]
        half_width: f64,
        #[arg(long, default_value_t = 201)]
        grid_points: usize,
        #[arg(long, default_value_t = 40)]
        inner_points: usize,
        /// Inner sample counts for the Monte Carlo bounds.
        #[arg(long, value_delimiter = ',', default_value = "1,10,100")]
        samples: Vec<usize>,
        /// Subspace error ε for the perturbed bounds (default: bootstrap
        /// mean at n, or 0).
        #[arg(long)]
        subspace_error: Option<f64>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(lanes) = cli.lanes {
        if lanes == 0 {
            return Err(ConfigError("--lanes must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(lanes).build_global()?;
    }
    match cli.command {
        Command::GenProblem(args) => {
            let (config, out) = args.load()?;
            commands::problem::gen_problem(&config, &out)
        }
        Command::EstimateSubspace(args) => {
            let (config, out) = args.load()?;
            commands::subspace::estimate_subspace(&config, &out)
        }
        Command::RunChain {
            common,
            subspace,
            variant,
            steps,
            proposal_var,
            seed,
            name,
            resume,
            checkpoint_every,
            pause_after,
        } => {
            let mut config = RunConfig::load(&common.config)?;
            let variant = variant.map(|v| match v {
                VariantArg::Vanilla => Variant::Vanilla,
                VariantArg::Active => Variant::Active,
            });
            override_sampler(&mut config, variant, steps, proposal_var, seed)?;
            let dir = common.out_dir(&config);
            let out = Outputs::new(&dir, common.force);
            std::fs::create_dir_all(&dir)?;
            let subspace = subspace.unwrap_or(dir);
            let opts = RunChainOptions {
                name,
                resume,
                checkpoint_every,
                pause_after,
            };
            commands::chain::run_chain(&config, &out, &subspace, &opts)
        }
        Command::Reconstruct {
            chain,
            subspace,
            draws,
            seed,
            out,
            force,
        } => commands::reconstruct::reconstruct(&chain, &subspace, draws, seed, &out, force),
        Command::Diagnose {
            chains,
            labels,
            burn_in,
            transform,
            transform_coords,
            acf_lags,
            theta,
            level,
            out,
            force,
        } => {
            let args = commands::diagnose::DiagnoseArgs {
                chains,
                labels,
                burn_in,
                transform,
                transform_coords,
                options: DiagnoseOptions { acf_lags, theta, level },
            };
            commands::diagnose::diagnose(&args, &Outputs::new(&out, force))
        }
        Command::CovStudy {
            common,
            subspace,
            samples,
            points,
            seed,
        } => {
            let (config, out) = common.load()?;
            let subspace = subspace.unwrap_or_else(|| common.out_dir(&config));
            commands::studies::cov_study(&config, &subspace, &samples, points, seed, &out)
        }
        Command::Hellinger {
            common,
            subspace,
            half_width,
            grid_points,
            inner_points,
            samples,
            subspace_error,
        } => {
            let (config, out) = common.load()?;
            let subspace = subspace.unwrap_or_else(|| common.out_dir(&config));
            let args = commands::studies::HellingerArgs {
                half_width,
                grid_points,
                inner_points,
                samples,
                subspace_error,
            };
            commands::studies::hellinger(&config, &subspace, &args, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_status(&err))
        }
    }
}
