use asmcmc::io::{write_matrix_csv, write_vector_csv};
use serde::Serialize;

use crate::config::{ProblemSpec, RunConfig};
use crate::output::Outputs;

#[derive(Serialize)]
struct ProblemSidecar<'a> {
    problem: &'a ProblemSpec,
    dim: usize,
    obs_dim: usize,
    noise_var: f64,
    data: &'a [f64],
    x_true: Option<&'a [f64]>,
    /// Forward solves spent generating the data.
    forward_calls: u64,
}

pub fn gen_problem(config: &RunConfig, out: &Outputs) -> anyhow::Result<()> {
    out.claim(&["problem.json", "data.csv", "x_true.csv", "matrix.csv"])?;
    let built = config.problem.build()?;
    let bayes = &built.bayes;
    write_vector_csv(&out.path("data.csv"), bayes.data())?;
    if let Some(x) = &built.x_true {
        write_vector_csv(&out.path("x_true.csv"), x)?;
    }
    if let Some(m) = &built.matrix {
        write_matrix_csv(&out.path("matrix.csv"), m)?;
    }
    out.write_json(
        "problem.json",
        &ProblemSidecar {
            problem: &config.problem,
            dim: bayes.dim(),
            obs_dim: bayes.obs_dim(),
            noise_var: bayes.noise_var(),
            data: bayes.data(),
            x_true: built.x_true.as_deref(),
            forward_calls: built.generation_calls,
        },
    )?;
    println!(
        "{}: {} parameters, {} observations, noise variance {:e}",
        config.problem.name(),
        bayes.dim(),
        bayes.obs_dim(),
        bayes.noise_var()
    );
    Ok(())
}
