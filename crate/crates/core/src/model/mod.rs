//! Latent Gaussian model specification: fixed effects with a vague prior,
//! latent components (iid, ICAR, SPDE field), observation rows with a
//! sparse linear predictor, and the hyperpriors.

mod lgcp;
mod likelihood;

pub use lgcp::{distance_covariate, lgcp_augment, LgcpCovariate};
pub use likelihood::{gaussian_loglik, poisson_loglik, Likelihood, LogLik};

use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::areal::{icar_log_pdet, icar_structure, sum_to_zero_constraints, AdjacencyGraph, ArealError};
use crate::sparse::{cholesky, GmrfError, LinearConstraints, SparseSymMatrix};
use crate::spde::{pc_log_prior, MaternParams, PCPrior, SpdeError, SpdeOperator, NU};

pub const VAGUE_PRECISION: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("expected {expected} hyperparameters, got {found}")]
    HyperDimension { expected: usize, found: usize },
    #[error("hyperparameter {0} is not finite")]
    NonFiniteHyper(usize),
    #[error("observation {0} refers to a latent index outside the model")]
    InvalidRow(usize),
    #[error("observation {0} has a negative count")]
    NegativeCount(usize),
    #[error("observation {0} has a negative or non-finite exposure")]
    NegativeExposure(usize),
    #[error("distance covariate needs at least one source segment")]
    EmptySource,
    #[error("duplicate component name `{0}`")]
    DuplicateName(String),
    #[error(transparent)]
    Spde(#[from] SpdeError),
    #[error(transparent)]
    Gmrf(#[from] GmrfError),
    #[error(transparent)]
    Areal(#[from] ArealError),
}

/// A row of the linear predictor: `η = Σ w_j θ_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRow {
    pub y: f64,
    pub exposure: f64,
    pub terms: Vec<(usize, f64)>,
}

/// Gamma(shape, rate) prior on a precision, applied on the log scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogGammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl Default for LogGammaPrior {
    fn default() -> Self {
        Self { shape: 1.0, rate: 5e-5 }
    }
}

impl LogGammaPrior {
    /// Density of `log τ` when `τ ~ Gamma(shape, rate)`.
    pub fn log_density(&self, log_tau: f64) -> f64 {
        self.shape * self.rate.ln() - ln_gamma(self.shape) + self.shape * log_tau - self.rate * log_tau.exp()
    }
}

#[derive(Debug, Clone)]
pub enum ComponentKind {
    Iid {
        size: usize,
        prior: LogGammaPrior,
    },
    Icar {
        graph: AdjacencyGraph,
        structure: SparseSymMatrix,
        log_pdet: f64,
        prior: LogGammaPrior,
    },
    Spde {
        operator: SpdeOperator,
        prior: PCPrior,
    },
}

#[derive(Debug, Clone)]
pub struct Component {
    pub name: String,
    pub kind: ComponentKind,
    /// Internal-scale hyperparameters held fixed instead of estimated.
    pub fixed: Option<Vec<f64>>,
}

impl Component {
    pub fn size(&self) -> usize {
        match &self.kind {
            ComponentKind::Iid { size, .. } => *size,
            ComponentKind::Icar { graph, .. } => graph.n(),
            ComponentKind::Spde { operator, .. } => operator.n(),
        }
    }

    pub fn n_hyper(&self) -> usize {
        match self.kind {
            ComponentKind::Spde { .. } => 2,
            _ => 1,
        }
    }
}

/// What an internal-scale hyperparameter measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HyperKind {
    LogPrecision,
    LogRange,
    LogSd,
}

impl HyperKind {
    /// `user = exp(scale · internal)`: variance for precisions, range, and
    /// variance for the field sd.
    pub fn user_scale(self) -> f64 {
        match self {
            HyperKind::LogPrecision => -1.0,
            HyperKind::LogRange => 1.0,
            HyperKind::LogSd => 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperInfo {
    pub component: usize,
    pub kind: HyperKind,
    pub name: String,
    pub user_name: String,
}

/// Prior precision of the full latent vector with its constraints.
#[derive(Debug, Clone)]
pub struct PriorPrecision {
    pub q: SparseSymMatrix,
    pub constraints: LinearConstraints,
    /// Log of the product of non-zero eigenvalues of `q`.
    pub log_pdet: f64,
    /// Rank of `q`: latent dimension minus the number of constraints.
    pub rank: usize,
}

impl PriorPrecision {
    /// Log density of `θ` on the constraint surface.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        -0.5 * self.rank as f64 * (2.0 * PI).ln() + 0.5 * self.log_pdet - 0.5 * self.q.quad_form(theta)
    }
}

#[derive(Debug, Clone)]
pub struct LatentModel {
    pub fixed_names: Vec<String>,
    pub fixed_precision: f64,
    pub components: Vec<Component>,
    pub likelihood: Likelihood,
    pub rows: Vec<ObservationRow>,
}

impl LatentModel {
    pub fn new(fixed_names: Vec<String>, likelihood: Likelihood) -> Self {
        Self {
            fixed_names,
            fixed_precision: VAGUE_PRECISION,
            components: Vec::new(),
            likelihood,
            rows: Vec::new(),
        }
    }

    fn push(&mut self, name: &str, kind: ComponentKind) -> Result<usize, ModelError> {
        if self.components.iter().any(|c| c.name == name) {
            return Err(ModelError::DuplicateName(name.to_string()));
        }
        let offset = self.latent_dim();
        self.components.push(Component {
            name: name.to_string(),
            kind,
            fixed: None,
        });
        Ok(offset)
    }

    /// Adds an iid component; returns its latent offset.
    pub fn add_iid(&mut self, name: &str, size: usize, prior: LogGammaPrior) -> Result<usize, ModelError> {
        self.push(name, ComponentKind::Iid { size, prior })
    }

    pub fn add_icar(&mut self, name: &str, graph: AdjacencyGraph, prior: LogGammaPrior) -> Result<usize, ModelError> {
        let structure = icar_structure(&graph)?;
        let log_pdet = icar_log_pdet(&graph)?;
        self.push(
            name,
            ComponentKind::Icar {
                graph,
                structure,
                log_pdet,
                prior,
            },
        )
    }

    pub fn add_spde(&mut self, name: &str, operator: SpdeOperator, prior: PCPrior) -> Result<usize, ModelError> {
        self.push(name, ComponentKind::Spde { operator, prior })
    }

    /// Holds a component's hyperparameters at the given internal values.
    pub fn fix_hyper(&mut self, name: &str, values: Vec<f64>) {
        let c = self
            .components
            .iter_mut()
            .find(|c| c.name == name)
            .unwrap_or_else(|| panic!("no component named `{name}`"));
        assert_eq!(values.len(), c.n_hyper(), "wrong number of fixed hyperparameters");
        c.fixed = Some(values);
    }

    pub fn n_fixed(&self) -> usize {
        self.fixed_names.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.n_fixed() + self.components.iter().map(Component::size).sum::<usize>()
    }

    pub fn component_offset(&self, name: &str) -> Option<usize> {
        let mut offset = self.n_fixed();
        for c in &self.components {
            if c.name == name {
                return Some(offset);
            }
            offset += c.size();
        }
        None
    }

    /// Names of every latent coordinate, `name[i]` for component entries.
    pub fn latent_names(&self) -> Vec<String> {
        let mut out = self.fixed_names.clone();
        for c in &self.components {
            out.extend((0..c.size()).map(|i| format!("{}[{}]", c.name, i)));
        }
        out
    }

    /// Free hyperparameters in order.
    pub fn hyper_info(&self) -> Vec<HyperInfo> {
        let mut out = Vec::new();
        for (k, c) in self.components.iter().enumerate() {
            if c.fixed.is_some() {
                continue;
            }
            match c.kind {
                ComponentKind::Spde { .. } => {
                    out.push(HyperInfo {
                        component: k,
                        kind: HyperKind::LogRange,
                        name: format!("log_range_{}", c.name),
                        user_name: format!("range_{}", c.name),
                    });
                    out.push(HyperInfo {
                        component: k,
                        kind: HyperKind::LogSd,
                        name: format!("log_sd_{}", c.name),
                        user_name: format!("variance_{}", c.name),
                    });
                }
                _ => out.push(HyperInfo {
                    component: k,
                    kind: HyperKind::LogPrecision,
                    name: format!("log_precision_{}", c.name),
                    user_name: format!("variance_{}", c.name),
                }),
            }
        }
        out
    }

    pub fn n_hyper(&self) -> usize {
        self.components.iter().filter(|c| c.fixed.is_none()).map(Component::n_hyper).sum()
    }

    /// Checks rows and exposures against the declared latent dimension.
    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.latent_dim();
        for (i, r) in self.rows.iter().enumerate() {
            if r.terms.iter().any(|&(j, w)| j >= n || !w.is_finite()) {
                return Err(ModelError::InvalidRow(i));
            }
            if !(r.exposure >= 0.0 && r.exposure.is_finite()) {
                return Err(ModelError::NegativeExposure(i));
            }
            if matches!(self.likelihood, Likelihood::Poisson) && !(r.y >= 0.0) {
                return Err(ModelError::NegativeCount(i));
            }
        }
        Ok(())
    }

    /// Per-component internal hyperparameters, with fixed values filled in.
    fn split_hyper<'a>(&'a self, psi: &'a [f64]) -> Result<Vec<Vec<f64>>, ModelError> {
        if psi.len() != self.n_hyper() {
            return Err(ModelError::HyperDimension {
                expected: self.n_hyper(),
                found: psi.len(),
            });
        }
        if let Some(i) = psi.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteHyper(i));
        }
        let mut it = psi.iter().copied();
        Ok(self
            .components
            .iter()
            .map(|c| match &c.fixed {
                Some(v) => v.clone(),
                None => (0..c.n_hyper()).map(|_| it.next().unwrap()).collect(),
            })
            .collect())
    }

    /// Block-diagonal prior precision and the sum-to-zero constraints of
    /// every ICAR component.
    pub fn assemble_prior_precision(&self, psi: &[f64]) -> Result<PriorPrecision, ModelError> {
        let hyper = self.split_hyper(psi)?;
        let nf = self.n_fixed();
        let mut blocks = vec![SparseSymMatrix::from_diagonal(&vec![self.fixed_precision; nf])];
        let mut constraints = LinearConstraints::new();
        let mut log_pdet = nf as f64 * self.fixed_precision.ln();
        let mut offset = nf;
        for (c, h) in self.components.iter().zip(&hyper) {
            match &c.kind {
                ComponentKind::Iid { size, .. } => {
                    let tau = h[0].exp();
                    blocks.push(SparseSymMatrix::from_diagonal(&vec![tau; *size]));
                    log_pdet += *size as f64 * h[0];
                }
                ComponentKind::Icar {
                    graph,
                    structure,
                    log_pdet: lp,
                    ..
                } => {
                    let tau = h[0].exp();
                    blocks.push(structure.scaled(tau));
                    let cons = sum_to_zero_constraints(graph, offset);
                    log_pdet += (graph.n() - cons.len()) as f64 * h[0] + lp;
                    for (row, rhs) in cons.rows.into_iter().zip(cons.rhs) {
                        constraints.push(row, rhs);
                    }
                }
                ComponentKind::Spde { operator, .. } => {
                    let p = spde_params(h);
                    let q = operator.precision(p.kappa, p.tau())?;
                    log_pdet += cholesky(&q)?.logdet();
                    blocks.push(q);
                }
            }
            offset += c.size();
        }
        let refs: Vec<&SparseSymMatrix> = blocks.iter().collect();
        let q = SparseSymMatrix::block_diagonal(&refs);
        let rank = q.n() - constraints.len();
        Ok(PriorPrecision {
            q,
            constraints,
            log_pdet,
            rank,
        })
    }

    /// Sum of the component hyperpriors on the internal scale. Fixed
    /// hyperparameters contribute nothing.
    pub fn log_hyperprior(&self, psi: &[f64]) -> Result<f64, ModelError> {
        let hyper = self.split_hyper(psi)?;
        let mut total = 0.0;
        for (c, h) in self.components.iter().zip(&hyper) {
            if c.fixed.is_some() {
                continue;
            }
            total += match &c.kind {
                ComponentKind::Iid { prior, .. } | ComponentKind::Icar { prior, .. } => prior.log_density(h[0]),
                ComponentKind::Spde { prior, .. } => pc_log_prior(spde_params(h), prior),
            };
        }
        Ok(total)
    }

    /// `η = A θ`.
    pub fn linear_predictor(&self, theta: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.terms.iter().map(|&(j, w)| w * theta[j]).sum())
            .collect()
    }

    pub fn observations(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.rows.iter().map(|r| r.y).collect(),
            self.rows.iter().map(|r| r.exposure).collect(),
        )
    }

    /// Log-likelihood kernel in `η` with its derivatives.
    pub fn loglik(&self, eta: &[f64]) -> Result<LogLik, ModelError> {
        let (y, e) = self.observations();
        self.likelihood.evaluate(&y, eta, &e)
    }

    /// The data-only constant dropped by [`LatentModel::loglik`].
    pub fn loglik_constant(&self) -> f64 {
        self.rows.iter().map(|r| self.likelihood.constant(r.y, r.exposure)).sum()
    }

    /// Full log density of each observation at predictor values `eta`.
    pub fn observation_log_densities(&self, eta: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .zip(eta)
            .map(|(r, &e)| self.likelihood.log_density(r.y, e, r.exposure))
            .collect()
    }
}

/// Matérn parameters from internal `(log r, log σ)`.
pub fn spde_params(h: &[f64]) -> MaternParams {
    MaternParams::from_range(NU, h[0].exp(), h[1].exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intercept_only() {
        let m = LatentModel::new(vec!["intercept".into()], Likelihood::Poisson);
        let p = m.assemble_prior_precision(&[]).unwrap();
        assert_eq!(p.q.to_dense()[(0, 0)], 1e-6);
        assert!(p.constraints.is_empty());
        assert_eq!(p.rank, 1);
    }

    #[test]
    fn iid_block() {
        let mut m = LatentModel::new(vec!["intercept".into()], Likelihood::Poisson);
        m.add_iid("u", 3, LogGammaPrior::default()).unwrap();
        let p = m.assemble_prior_precision(&[2f64.ln()]).unwrap();
        let d = p.q.to_dense();
        for i in 1..4 {
            assert!((d[(i, i)] - 2.0).abs() < 1e-15);
        }
        assert_eq!(m.latent_dim(), 4);
    }

    #[test]
    fn bym_on_two_node_path() {
        let mut m = LatentModel::new(vec!["intercept".into()], Likelihood::Poisson);
        let off = m.add_icar("v", AdjacencyGraph::path(2), LogGammaPrior::default()).unwrap();
        m.add_iid("nu", 2, LogGammaPrior::default()).unwrap();
        let p = m.assemble_prior_precision(&[0.0, 0.0]).unwrap();
        let d = p.q.to_dense();
        assert_eq!((d[(1, 1)], d[(1, 2)], d[(2, 2)]), (1.0, -1.0, 1.0));
        assert_eq!(p.constraints.rows, vec![vec![(off, 1.0), (off + 1, 1.0)]]);
        assert_eq!(p.rank, 4);
        // pdet: 1e-6 · 2 · 1 · 1
        assert!((p.log_pdet - (1e-6f64.ln() + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn hyperprior_values() {
        let mut m = LatentModel::new(vec![], Likelihood::Poisson);
        m.add_iid("a", 1, LogGammaPrior::default()).unwrap();
        let lp = m.log_hyperprior(&[0.0]).unwrap();
        assert!((lp - (5e-5f64.ln() - 5e-5)).abs() < 1e-14);
        m.add_iid("b", 2, LogGammaPrior { shape: 2.0, rate: 1.0 }).unwrap();
        let both = m.log_hyperprior(&[0.0, 0.3]).unwrap();
        let b = LogGammaPrior { shape: 2.0, rate: 1.0 }.log_density(0.3);
        assert!((both - lp - b).abs() < 1e-14);
        assert!(matches!(m.log_hyperprior(&[0.0]), Err(ModelError::HyperDimension { .. })));
    }

    #[test]
    fn fixed_hyper_is_not_free() {
        let mut m = LatentModel::new(vec![], Likelihood::Poisson);
        m.add_iid("a", 1, LogGammaPrior::default()).unwrap();
        m.fix_hyper("a", vec![0.5]);
        assert_eq!(m.n_hyper(), 0);
        let p = m.assemble_prior_precision(&[]).unwrap();
        assert!((p.q.to_dense()[(0, 0)] - 0.5f64.exp()).abs() < 1e-15);
        assert_eq!(m.log_hyperprior(&[]).unwrap(), 0.0);
    }

    #[test]
    fn validation_catches_bad_rows() {
        let mut m = LatentModel::new(vec!["a".into()], Likelihood::Poisson);
        m.rows.push(ObservationRow {
            y: 1.0,
            exposure: 1.0,
            terms: vec![(3, 1.0)],
        });
        assert_eq!(m.validate().unwrap_err(), ModelError::InvalidRow(0));
    }
}
