pub mod chain;
pub mod diagnose;
pub mod problem;
pub mod reconstruct;
pub mod studies;
pub mod subspace;

use std::path::Path;

use asmcmc::io::{read_matrix_csv, read_vector_csv};
use asmcmc::subspace::{partition, ActiveSubspace, Spectrum};
use nalgebra::DVector;

use crate::error::ConfigError;
use crate::output::read_json;
use subspace::SubspaceSidecar;

pub const EIGENVALUES: &str = "eigenvalues.csv";
pub const EIGENVECTORS: &str = "eigenvectors.csv";
pub const SUBSPACE_SIDECAR: &str = "subspace.json";

/// Reads the files written by `estimate-subspace` and splits at the
/// recorded dimension.
pub fn load_subspace(dir: &Path, expected_dim: usize) -> anyhow::Result<(ActiveSubspace, SubspaceSidecar)> {
    let sidecar_path = dir.join(SUBSPACE_SIDECAR);
    if !sidecar_path.exists() {
        return Err(ConfigError(format!(
            "no subspace in {}; run estimate-subspace first",
            dir.display()
        ))
        .into());
    }
    let sidecar: SubspaceSidecar = read_json(&sidecar_path)?;
    let eigenvalues = read_vector_csv(&dir.join(EIGENVALUES))?;
    let eigenvectors = read_matrix_csv(&dir.join(EIGENVECTORS))?;
    if eigenvalues.len() != expected_dim {
        return Err(ConfigError(format!(
            "subspace in {} has dimension {}, problem has {expected_dim}",
            dir.display(),
            eigenvalues.len()
        ))
        .into());
    }
    let spectrum = Spectrum {
        eigenvalues: DVector::from_vec(eigenvalues),
        eigenvectors,
    };
    Ok((partition(&spectrum, sidecar.n)?, sidecar))
}
