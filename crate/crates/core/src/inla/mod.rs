//! Nested Laplace approximation: Gaussian approximations of the latent
//! field given the hyperparameters, a Laplace estimate of the hyperparameter
//! posterior explored on a grid, and mixture marginals.

mod gaussian;
mod hyper;
mod marginals;

pub use gaussian::{gaussian_approx, log_posterior_hyper, Approximator, GaussianApprox};
pub use hyper::{explore, explore_hyper, GridPoint, HyperExploration};
pub use marginals::{fit, InlaFit};

use thiserror::Error;

use crate::model::ModelError;
use crate::sparse::GmrfError;

/// Largest number of free hyperparameters the grid strategy handles.
pub const MAX_HYPER: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InlaError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Gmrf(#[from] GmrfError),
    #[error("Newton iterations did not converge after {iterations} steps (projected gradient {gradient:.3e})")]
    NonConvergence { iterations: usize, gradient: f64 },
    #[error("hyperparameter optimisation failed: {0}")]
    Optimizer(String),
    #[error("{0} free hyperparameters; at most {MAX_HYPER} are supported")]
    TooManyHypers(usize),
    #[error("no grid point produced a valid approximation")]
    EmptyGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InlaOptions {
    /// Relative tolerance on the projected Newton gradient.
    pub newton_tol: f64,
    pub max_newton: usize,
    pub max_halvings: usize,
    /// Simplex cost sd at which Nelder–Mead stops.
    pub optimizer_tol: f64,
    pub max_optimizer_iters: u64,
    /// Finite-difference step for the hyperparameter Hessian.
    pub hessian_step: f64,
    /// Grid spacing in standardised coordinates.
    pub dz: f64,
    /// Log-density drop below the mode that ends an axial walk.
    pub drop: f64,
    pub max_axial_steps: usize,
}

impl Default for InlaOptions {
    fn default() -> Self {
        Self {
            newton_tol: 1e-8,
            max_newton: 100,
            max_halvings: 30,
            optimizer_tol: 1e-5,
            max_optimizer_iters: 500,
            hessian_step: 1e-3,
            dz: 1.0,
            drop: 2.5,
            max_axial_steps: 10,
        }
    }
}
