use std::path::Path;

use asmcmc::io::{read_chain_csv, write_chain_csv};
use asmcmc::sampler::{reconstruct as lift, reconstruction_rng};
use serde::{Deserialize, Serialize};

use super::load_subspace;
use crate::error::ConfigError;
use crate::output::{read_json, refuse_overwrite, sidecar_path, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructSidecar {
    pub draws_per_state: usize,
    pub seed: u64,
    pub steps: usize,
    pub dim: usize,
    /// Burn-in of the active chain, scaled by the draws per state.
    pub burn_in: usize,
    /// Acceptance rate of the active chain.
    pub acceptance_rate: Option<f64>,
    /// Forward-model evaluations of the active chain; reconstruction itself
    /// makes none.
    pub forward_calls: Option<u64>,
    pub reconstruction_forward_calls: u64,
}

pub fn reconstruct(
    chain_path: &Path,
    subspace_dir: &Path,
    draws: usize,
    seed: u64,
    out_path: &Path,
    force: bool,
) -> anyhow::Result<()> {
    let out_sidecar = sidecar_path(out_path);
    refuse_overwrite(out_path, force)?;
    refuse_overwrite(&out_sidecar, force)?;
    if draws == 0 {
        return Err(ConfigError("--draws must be positive".into()).into());
    }
    let source: Option<serde_json::Value> = {
        let p = sidecar_path(chain_path);
        if p.exists() {
            Some(read_json(&p)?)
        } else {
            None
        }
    };
    let field = |key: &str| source.as_ref().and_then(|v| v.get(key).cloned());
    let eigen_dim = asmcmc::io::read_vector_csv(&subspace_dir.join(super::EIGENVALUES))
        .map(|v| v.len())
        .map_err(|e| ConfigError(format!("reading the subspace in {}: {e}", subspace_dir.display())))?;
    let (subspace, _) = load_subspace(subspace_dir, eigen_dim)?;
    let active = read_chain_csv(chain_path)?;
    if active.dim() != subspace.active_dim() {
        return Err(ConfigError(format!(
            "chain has {} coordinates but the subspace has n = {}",
            active.dim(),
            subspace.active_dim()
        ))
        .into());
    }
    let rec = lift(&active, &subspace, draws, &mut reconstruction_rng(seed))?;
    if let Some(parent) = out_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    write_chain_csv(out_path, &rec.chain)?;
    let sidecar = ReconstructSidecar {
        draws_per_state: draws,
        seed,
        steps: rec.chain.len(),
        dim: rec.chain.dim(),
        burn_in: field("burn_in").and_then(|v| v.as_u64()).unwrap_or(0) as usize * draws,
        acceptance_rate: field("acceptance_rate").and_then(|v| v.as_f64()),
        forward_calls: field("forward_calls").and_then(|v| v.as_u64()),
        reconstruction_forward_calls: 0,
    };
    write_json(&out_sidecar, &sidecar)?;
    println!(
        "reconstructed {} full-space states ({} per active state) in {} dimensions",
        rec.chain.len(),
        draws,
        rec.chain.dim()
    );
    Ok(())
}
