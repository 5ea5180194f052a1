//! `cov-study` and `hellinger`.

use std::path::Path;

use asmcmc::diagnostics::{
    coefficient_of_variation_study, posterior_bounds, posterior_hellinger, CovRow, Grid2d, HellingerResult,
    PosteriorBounds,
};
use serde::Serialize;

use super::load_subspace;
use crate::config::RunConfig;
use crate::error::ConfigError;
use crate::output::{num, Outputs};

#[derive(Serialize)]
struct CovSidecar {
    problem: String,
    n: usize,
    points: usize,
    seed: u64,
    rows: Vec<CovRow>,
    points_used: usize,
    excluded: usize,
    forward_calls: u64,
}

pub fn cov_study(
    config: &RunConfig,
    subspace_dir: &Path,
    samples: &[usize],
    points: usize,
    seed: u64,
    out: &Outputs,
) -> anyhow::Result<()> {
    if samples.is_empty() || samples.contains(&0) {
        return Err(ConfigError("--samples must list positive counts".into()).into());
    }
    out.claim(&["cov.csv", "cov_points.csv", "cov.json"])?;
    let built = config.problem.build()?;
    let problem = &built.bayes;
    let (subspace, _) = load_subspace(subspace_dir, problem.dim())?;
    problem.reset_counters();
    let study = coefficient_of_variation_study(problem, &subspace, samples, points, seed)?;

    let rows: Vec<Vec<String>> = study
        .rows
        .iter()
        .map(|r| vec![r.samples.to_string(), num(r.mean), num(r.median)])
        .collect();
    out.write_table("cov.csv", "samples,mean,median", &rows)?;
    let header = samples.iter().map(|m| format!("m{m}")).collect::<Vec<_>>().join(",");
    let per_point: Vec<Vec<String>> = study
        .per_point
        .iter()
        .map(|r| r.iter().map(|v| num(*v)).collect())
        .collect();
    out.write_table("cov_points.csv", &header, &per_point)?;
    out.write_json(
        "cov.json",
        &CovSidecar {
            problem: config.problem.name().into(),
            n: subspace.active_dim(),
            points,
            seed,
            rows: study.rows.clone(),
            points_used: study.points_used,
            excluded: study.excluded,
            forward_calls: problem.forward_calls(),
        },
    )?;
    println!("{:>6} {:>12} {:>12}", "M", "mean CoV", "median CoV");
    for r in &study.rows {
        println!("{:>6} {:>12.5} {:>12.5}", r.samples, r.mean, r.median);
    }
    if study.excluded > 0 {
        println!("{} points excluded (zero estimate)", study.excluded);
    }
    Ok(())
}

#[derive(Serialize)]
struct BoundRow {
    samples: usize,
    bounds: PosteriorBounds,
}

#[derive(Serialize)]
struct HellingerSidecar {
    problem: String,
    n: usize,
    half_width: f64,
    grid_points: usize,
    inner_points: usize,
    subspace_error: f64,
    result: HellingerResult,
    bounds: Vec<BoundRow>,
    forward_calls: u64,
}

pub struct HellingerArgs {
    pub half_width: f64,
    pub grid_points: usize,
    pub inner_points: usize,
    pub samples: Vec<usize>,
    pub subspace_error: Option<f64>,
}

pub fn hellinger(config: &RunConfig, subspace_dir: &Path, args: &HellingerArgs, out: &Outputs) -> anyhow::Result<()> {
    if config.problem.dim() != 2 {
        return Err(ConfigError(format!(
            "hellinger needs a two-parameter problem, {} has {}",
            config.problem.name(),
            config.problem.dim()
        ))
        .into());
    }
    out.claim(&["hellinger.json"])?;
    let built = config.problem.build()?;
    let problem = &built.bayes;
    let (subspace, sidecar) = load_subspace(subspace_dir, problem.dim())?;
    let grid = Grid2d::square(args.half_width, args.grid_points)?;
    problem.reset_counters();
    let result = posterior_hellinger(problem, &subspace, &grid, args.inner_points)?;
    let eps = args.subspace_error.unwrap_or_else(|| {
        sidecar
            .bootstrap
            .as_ref()
            .and_then(|b| b.mean_at(subspace.active_dim()))
            .unwrap_or(0.0)
    });
    let bounds: Vec<BoundRow> = args
        .samples
        .iter()
        .map(|&m| BoundRow {
            samples: m,
            bounds: posterior_bounds(result.l, 1.0, subspace.leading_sum(), subspace.trailing_sum(), m, eps),
        })
        .collect();
    out.write_json(
        "hellinger.json",
        &HellingerSidecar {
            problem: config.problem.name().into(),
            n: subspace.active_dim(),
            half_width: args.half_width,
            grid_points: args.grid_points,
            inner_points: args.inner_points,
            subspace_error: eps,
            result,
            bounds,
            forward_calls: problem.forward_calls(),
        },
    )?;
    println!("H(posterior, approximation) = {:.6e}", result.distance);
    println!("bound L·sqrt(λ_{{n+1}} + … + λ_m) = {:.6e} (L = {:.4})", result.bound, result.l);
    println!(
        "∫(f − g)² ρ = {:.6e} ≤ trailing eigenvalue sum {:.6e}",
        result.misfit_error, result.trailing_eigensum
    );
    Ok(())
}
