use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite gradient at sample {index}")]
    NonFiniteGradient { index: usize },

    #[error("non-finite misfit at inner draw {index} (z = {z:?})")]
    NonFiniteSurrogate { index: usize, z: Vec<f64> },

    #[error("symmetric eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    EigenNoConvergence { sweeps: usize, off_norm: f64 },

    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("columns are not orthonormal (‖WᵀW − I‖ = {0:e})")]
    NotOrthonormal(f64),

    #[error("tensor quadrature in {dim} dimensions exceeds the limit of {max}; use the Monte Carlo estimator")]
    QuadratureDimension { dim: usize, max: usize },

    #[error("series has zero variance")]
    ZeroVariance,

    #[error("linear system is not positive definite (pivot {pivot:e} at row {row})")]
    SingularSystem { row: usize, pivot: f64 },

    #[error("grid too small: only {mass:.6} of the mass lies away from the grid boundary")]
    GridTooSmall { mass: f64 },

    #[error("forward model failed: {0}")]
    Forward(String),

    #[error("chain aborted at step {step}: {source}")]
    ChainStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFiniteGradient { .. }
            | Error::NonFiniteSurrogate { .. }
            | Error::EigenNoConvergence { .. }
            | Error::SingularSystem { .. }
            | Error::ZeroVariance
            | Error::GridTooSmall { .. }
            | Error::Forward(_) => true,
            Error::ChainStep { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
