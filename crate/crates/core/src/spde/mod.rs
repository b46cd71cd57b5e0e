//! Matérn fields through the SPDE representation with ν = 1 in two
//! dimensions, and penalised-complexity priors on range and sd.

mod bessel;
mod matern;
mod precision;
mod prior;

pub use bessel::bessel_k;
pub use matern::{matern_corr, matern_cov, MaternParams};
pub use precision::{spde_precision, SpdeError, SpdeOperator};
pub use prior::{pc_log_prior, PCPrior, PriorError};

/// Smoothness supported by the sparse construction.
pub const NU: f64 = 1.0;
