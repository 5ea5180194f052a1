use asmcmc::io::{write_matrix_csv, write_vector_csv};
use asmcmc::subspace::{
    bootstrap_subspace_error_seeded, eigendecompose, estimate_c_monte_carlo, estimate_c_quadrature, partition,
    standard_gaussian_sampler, subspace_error_bound,
};
use serde::{Deserialize, Serialize};

use super::{EIGENVALUES, EIGENVECTORS, SUBSPACE_SIDECAR};
use crate::config::{EstimatorSpec, RunConfig};
use crate::output::{num, Outputs};

const GAPS: &str = "gaps.csv";
const BOOTSTRAP: &str = "bootstrap.csv";
const C_MATRIX: &str = "c_matrix.csv";
const GRADIENTS: &str = "gradients.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub replicates: usize,
    pub skipped: usize,
    pub candidates: Vec<usize>,
    pub mean_distance: Vec<f64>,
    pub max_distance: Vec<f64>,
}

impl BootstrapSummary {
    pub fn mean_at(&self, n: usize) -> Option<f64> {
        self.candidates
            .iter()
            .position(|&c| c == n)
            .map(|i| self.mean_distance[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceSidecar {
    pub problem: String,
    pub estimator: EstimatorSpec,
    /// Dimension used to split `W` into `W1` and `W2`.
    pub n: usize,
    /// Split with the largest logarithmic gap among `n ≤ max_n`.
    pub flagged_n: Option<usize>,
    pub eigenvalues: Vec<f64>,
    /// Rows of `W`; column `k` is the `k`-th eigenvector.
    pub eigenvectors: Vec<Vec<f64>>,
    /// Rows of `Ĉ`.
    pub c_matrix: Vec<Vec<f64>>,
    /// `λ_n − λ_{n+1}`, `n = 1..m−1`.
    pub gaps: Vec<f64>,
    /// Perturbation bound `4 λ₁ δ / (λ_n − λ_{n+1})` at `δ = 0.1`.
    pub error_bound_delta_0_1: f64,
    pub bootstrap: Option<BootstrapSummary>,
    pub forward_calls: u64,
    pub gradient_calls: u64,
}

pub fn estimate_subspace(config: &RunConfig, out: &Outputs) -> anyhow::Result<()> {
    let spec = config.subspace()?;
    out.claim(&[EIGENVALUES, EIGENVECTORS, C_MATRIX, GRADIENTS, GAPS, BOOTSTRAP, SUBSPACE_SIDECAR])?;
    let built = config.problem.build()?;
    let problem = &built.bayes;
    let dim = problem.dim();
    problem.reset_counters();
    let gradient = |x: &[f64]| problem.misfit_gradient(x);
    let (c, samples) = match spec.estimator {
        EstimatorSpec::Quadrature { points_per_dim } => (estimate_c_quadrature(gradient, dim, points_per_dim)?, None),
        EstimatorSpec::MonteCarlo { samples, seed } => {
            let (c, set) = estimate_c_monte_carlo(gradient, standard_gaussian_sampler(dim), samples, seed)?;
            (c, Some((set, seed)))
        }
    };
    let spectrum = eigendecompose(&c)?;
    let max_n = spec.max_n.min(dim - 1);
    let flagged = spectrum.largest_log_gap(max_n);
    let n = spec.n.or(flagged).unwrap_or(1);
    let subspace = partition(&spectrum, n)?;
    if !subspace.identifiable() {
        eprintln!("warning: λ_{n} = λ_{} so the split at n = {n} is not identifiable", n + 1);
    }

    let bootstrap = match (&samples, spec.bootstrap) {
        (Some((set, seed)), replicates) if replicates > 0 => {
            let candidates: Vec<usize> = (1..=max_n).collect();
            let est = bootstrap_subspace_error_seeded(set, &candidates, replicates, *seed)?;
            Some(BootstrapSummary {
                replicates: est.replicates,
                skipped: est.skipped,
                candidates: est.candidates,
                mean_distance: est.mean,
                max_distance: est.max,
            })
        }
        _ => None,
    };

    let eigenvalues: Vec<f64> = spectrum.eigenvalues.iter().copied().collect();
    let gaps = spectrum.gaps();
    write_vector_csv(&out.path(EIGENVALUES), &eigenvalues)?;
    write_matrix_csv(&out.path(EIGENVECTORS), &spectrum.eigenvectors)?;
    write_matrix_csv(&out.path(C_MATRIX), &c.matrix)?;
    if let Some((set, _)) = &samples {
        let header = (0..dim).map(|j| format!("g{j}")).collect::<Vec<_>>().join(",");
        let rows: Vec<Vec<String>> = set.gradients().iter().map(|g| g.iter().map(|v| num(*v)).collect()).collect();
        out.write_table(GRADIENTS, &header, &rows)?;
    }
    let rows_of = |m: &nalgebra::DMatrix<f64>| -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    };
    let gap_rows: Vec<Vec<String>> = gaps
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let k = i + 1;
            vec![
                k.to_string(),
                num(eigenvalues[i]),
                num(eigenvalues[k]),
                num(*g),
                u8::from(Some(k) == flagged).to_string(),
            ]
        })
        .collect();
    out.write_table(GAPS, "n,lambda_n,lambda_next,gap,flagged", &gap_rows)?;
    if let Some(b) = &bootstrap {
        let rows: Vec<Vec<String>> = b
            .candidates
            .iter()
            .enumerate()
            .map(|(i, k)| vec![k.to_string(), num(b.mean_distance[i]), num(b.max_distance[i])])
            .collect();
        out.write_table(BOOTSTRAP, "n,mean_distance,max_distance", &rows)?;
    }
    let sidecar = SubspaceSidecar {
        problem: config.problem.name().to_string(),
        estimator: spec.estimator,
        n,
        flagged_n: flagged,
        eigenvalues: eigenvalues.clone(),
        eigenvectors: rows_of(&spectrum.eigenvectors),
        c_matrix: rows_of(&c.matrix),
        gaps: gaps.clone(),
        error_bound_delta_0_1: subspace_error_bound(&subspace, 0.1),
        bootstrap: bootstrap.clone(),
        forward_calls: problem.forward_calls(),
        gradient_calls: problem.gradient_calls(),
    };
    out.write_json(SUBSPACE_SIDECAR, &sidecar)?;

    println!("{:>4} {:>14} {:>14} {:>10}", "n", "lambda_n", "gap", "boot mean");
    for (i, g) in gaps.iter().enumerate().take(max_n.max(1)) {
        let k = i + 1;
        let boot = bootstrap
            .as_ref()
            .and_then(|b| b.mean_at(k))
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "-".into());
        let mark = if Some(k) == flagged { "  <- largest gap" } else { "" };
        println!("{k:>4} {:>14.6e} {g:>14.6e} {boot:>10}{mark}", eigenvalues[i]);
    }
    println!("active dimension n = {n}; {} gradient evaluations", problem.gradient_calls());
    Ok(())
}
