//! Sparse symmetric linear algebra for GMRF precision matrices.
//!
//! Factorization is a left-to-right up-looking Cholesky on a minimum-degree
//! ordering. Factors are immutable once built and can be shared across
//! threads for concurrent solves.

mod cholesky;
mod constraint;
mod matrix;
mod ordering;

pub use cholesky::{cholesky, CholFactor, SymbolicCholesky, PIVOT_TOL};
pub use constraint::{constrain, ConstrainedMoments, KrigingCorrection, LinearConstraints};
pub use matrix::SparseSymMatrix;
pub use ordering::{inverse_permutation, minimum_degree};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GmrfError {
    #[error("entry ({row}, {col}) out of bounds for dimension {n}")]
    IndexOutOfBounds { row: usize, col: usize, n: usize },
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is not positive definite: zero or negative pivot at step {pivot} (original index {index})")]
    NotPositiveDefinite { pivot: usize, index: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("sparsity pattern differs from the analyzed one")]
    PatternMismatch,
    #[error("constraint matrix A Q^-1 A' is singular")]
    SingularConstraint,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}
