//! Active-subspace accelerated Markov chain Monte Carlo.
//!
//! The pipeline has three stages:
//!
//! 1. Estimate `C = E[∇f ∇fᵀ]` of the data misfit `f` under the standard
//!    Gaussian prior and split its eigenvectors into active (`W1`) and
//!    inactive (`W2`) blocks ([`subspace`]).
//! 2. Run random-walk Metropolis–Hastings on the active variables
//!    `y = W1ᵀx`, replacing the misfit by an average over inactive draws
//!    ([`posterior`], [`sampler`]).
//! 3. Lift the active chain back to the full parameter space by sampling the
//!    inactive variables from the prior, and measure chain quality
//!    ([`diagnostics`]).
//!
//! [`problems`] contains the built-in test problems: a two-parameter
//! quadratic model, a linear-Gaussian model with closed forms, and a Poisson
//! equation with a Karhunen–Loève coefficient field.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diagnostics;
pub mod error;
pub mod io;
pub mod linalg;
pub mod posterior;
pub mod problems;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod subspace;

pub use error::{Error, Result};
