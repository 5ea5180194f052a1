//! Built-in inverse problems.

pub mod linear_gaussian;
pub mod poisson_kl;
pub mod quadratic;

pub use linear_gaussian::{linear_closed_forms, LinearClosedForms, LinearGaussianProblem, LinearModel};
pub use poisson_kl::{poisson_kl_problem, KlBasis, PoissonKlConfig, PoissonKlModel, PoissonKlProblem};
pub use quadratic::{quadratic_problem, QuadraticModel};
