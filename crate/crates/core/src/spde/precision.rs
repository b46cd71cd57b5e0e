use thiserror::Error;

use crate::mesh::FemMatrices;
use crate::sparse::SparseSymMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpdeError {
    #[error("mass matrix must be diagonal (lumped)")]
    NonDiagonalMass,
    #[error("mass matrix has a non-positive entry at vertex {0}")]
    NonPositiveMass(usize),
    #[error("mass and stiffness dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("kappa and tau must be positive and finite")]
    InvalidScale,
}

/// The three fixed matrices of the ν = 1 SPDE precision, assembled once per
/// mesh so that each `(κ, τ)` only costs a weighted sum.
#[derive(Debug, Clone)]
pub struct SpdeOperator {
    c: SparseSymMatrix,
    g: SparseSymMatrix,
    g_cinv_g: SparseSymMatrix,
}

impl SpdeOperator {
    pub fn new(c: &SparseSymMatrix, g: &SparseSymMatrix) -> Result<Self, SpdeError> {
        if c.n() != g.n() {
            return Err(SpdeError::DimensionMismatch(c.n(), g.n()));
        }
        if !c.is_diagonal() {
            return Err(SpdeError::NonDiagonalMass);
        }
        let diag = c.diagonal();
        if let Some(i) = diag.iter().position(|&v| !(v > 0.0)) {
            return Err(SpdeError::NonPositiveMass(i));
        }
        let inv: Vec<f64> = diag.iter().map(|v| 1.0 / v).collect();
        let g_cinv_g = g.sandwich_diagonal(&inv);
        // zero-weight copies put all three on the common pattern
        let union = |m: &SparseSymMatrix| SparseSymMatrix::linear_combination(&[(1.0, m), (0.0, &g_cinv_g)]);
        Ok(Self {
            c: union(c),
            g: union(g),
            g_cinv_g: g_cinv_g.clone(),
        })
    }

    pub fn from_fem(fem: &FemMatrices) -> Result<Self, SpdeError> {
        Self::new(&fem.mass_matrix(), &fem.stiffness)
    }

    pub fn n(&self) -> usize {
        self.c.n()
    }

    /// `Q = τ²(κ⁴C + 2κ²G + G C⁻¹ G)`. The sparsity pattern does not depend
    /// on `(κ, τ)`.
    pub fn precision(&self, kappa: f64, tau: f64) -> Result<SparseSymMatrix, SpdeError> {
        if !(kappa > 0.0 && tau > 0.0 && kappa.is_finite() && tau.is_finite()) {
            return Err(SpdeError::InvalidScale);
        }
        let t2 = tau * tau;
        let k2 = kappa * kappa;
        Ok(SparseSymMatrix::linear_combination(&[
            (t2 * k2 * k2, &self.c),
            (2.0 * t2 * k2, &self.g),
            (t2, &self.g_cinv_g),
        ]))
    }
}

pub fn spde_precision(c: &SparseSymMatrix, g: &SparseSymMatrix, kappa: f64, tau: f64) -> Result<SparseSymMatrix, SpdeError> {
    SpdeOperator::new(c, g)?.precision(kappa, tau)
}
