//! Brute-force references for small models: tensor-grid quadrature of the
//! joint posterior, nested quadrature with exact Gaussian inner integrals,
//! leave-one-out refits, and Riemann sums of intensities.
//!
//! Only the observation densities are shared with the rest of the crate;
//! priors, constraints and integration are rebuilt here from the raw model
//! description.

pub mod toys;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::geometry::{Point, Polygon};
use crate::marginal::Marginal;
use crate::model::{ComponentKind, LatentModel, Likelihood};

pub const MAX_POINTS: usize = 10_000_000;
/// Largest number of quadrature dimensions for the full-grid posterior.
pub const MAX_DIMS: usize = 5;
pub const MAX_LOO_OBSERVATIONS: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("grid has {0} points, more than the cap of {MAX_POINTS}")]
    TooManyPoints(usize),
    #[error("grid has {found} dimensions, model needs {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("{0} quadrature dimensions exceed the limit of {MAX_DIMS}")]
    TooManyDims(usize),
    #[error("{0} observations exceed the leave-one-out limit of {MAX_LOO_OBSERVATIONS}")]
    TooManyObservations(usize),
    #[error("unsupported model: {0}")]
    Unsupported(&'static str),
    #[error("invalid grid dimension {0}")]
    BadGrid(usize),
}

/// Per-dimension `(lo, hi, count)` of a tensor trapezoid grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub dims: Vec<(f64, f64, usize)>,
}

impl GridSpec {
    pub fn new(dims: Vec<(f64, f64, usize)>) -> Self {
        Self { dims }
    }

    pub fn total(&self) -> usize {
        self.dims.iter().fold(1usize, |a, d| a.saturating_mul(d.2))
    }

    fn validate(&self) -> Result<(), OracleError> {
        for (i, &(lo, hi, n)) in self.dims.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo && n >= 2) {
                return Err(OracleError::BadGrid(i));
            }
        }
        let t = self.total();
        if t > MAX_POINTS {
            return Err(OracleError::TooManyPoints(t));
        }
        Ok(())
    }

    fn axis(&self, d: usize) -> (Vec<f64>, Vec<f64>) {
        let (lo, hi, n) = self.dims[d];
        let h = (hi - lo) / (n - 1) as f64;
        let x = (0..n).map(|k| lo + h * k as f64).collect();
        let w = (0..n).map(|k| if k == 0 || k == n - 1 { 0.5 * h } else { h }).collect();
        (x, w)
    }
}

/// Quadrature posterior: grid marginals per quadrature coordinate
/// (hyperparameters first, then free latent coordinates) and exact moments
/// of the full latent vector.
#[derive(Debug, Clone)]
pub struct DensePosterior {
    pub marginals: Vec<Marginal>,
    pub latent_mean: Vec<f64>,
    pub latent_sd: Vec<f64>,
    /// `log ∫ p(y, θ, ψ)` over the grid.
    pub log_evidence: f64,
}

enum Block {
    Fixed(f64),
    Iid(usize),
    Icar(Vec<(usize, usize)>, usize),
}

enum Hyper {
    Free(usize, f64, f64),
    Fixed(f64),
    None,
}

/// The model in free coordinates: ICAR components lose their last node in
/// each connected component, which is then minus the sum of the others.
struct Reduced {
    blocks: Vec<(Block, Hyper)>,
    n_full: usize,
    n_hyper: usize,
    /// `θ = T φ`.
    t: DMatrix<f64>,
    /// Design in free coordinates.
    a: DMatrix<f64>,
    y: Vec<f64>,
    e: Vec<f64>,
    likelihood: Likelihood,
}

fn label_components(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for &(a, b) in edges {
        let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    (0..n).map(|i| root(&mut parent, i)).collect()
}

impl Reduced {
    fn new(model: &LatentModel) -> Result<Self, OracleError> {
        let mut blocks = Vec::new();
        let mut n_hyper = 0;
        for _ in 0..model.n_fixed() {
            blocks.push((Block::Fixed(model.fixed_precision), Hyper::None));
        }
        for c in &model.components {
            let hyper = |shape: f64, rate: f64, n_hyper: &mut usize| match &c.fixed {
                Some(v) => Hyper::Fixed(v[0]),
                None => {
                    *n_hyper += 1;
                    Hyper::Free(*n_hyper - 1, shape, rate)
                }
            };
            match &c.kind {
                ComponentKind::Iid { size, prior } => {
                    let h = hyper(prior.shape, prior.rate, &mut n_hyper);
                    blocks.push((Block::Iid(*size), h));
                }
                ComponentKind::Icar { graph, prior, .. } => {
                    let h = hyper(prior.shape, prior.rate, &mut n_hyper);
                    blocks.push((Block::Icar(graph.edges(), graph.n()), h));
                }
                ComponentKind::Spde { .. } => return Err(OracleError::Unsupported("SPDE components")),
            }
        }

        let mut cols: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut offset = 0;
        for (b, _) in &blocks {
            match b {
                Block::Fixed(_) => {
                    cols.push(vec![(offset, 1.0)]);
                    offset += 1;
                }
                Block::Iid(n) => {
                    for i in 0..*n {
                        cols.push(vec![(offset + i, 1.0)]);
                    }
                    offset += n;
                }
                Block::Icar(edges, n) => {
                    let label = label_components(*n, edges);
                    // the largest node of each component is the dependent one
                    let last: Vec<usize> = (0..*n).map(|i| (0..*n).filter(|&j| label[j] == label[i]).max().unwrap()).collect();
                    for i in 0..*n {
                        if last[i] != i {
                            cols.push(vec![(offset + i, 1.0), (offset + last[i], -1.0)]);
                        }
                    }
                    offset += n;
                }
            }
        }
        let n_full = offset;
        let mut t = DMatrix::zeros(n_full, cols.len());
        for (j, col) in cols.iter().enumerate() {
            for &(i, v) in col {
                t[(i, j)] = v;
            }
        }
        let mut a_full = DMatrix::zeros(model.rows.len(), n_full);
        for (r, row) in model.rows.iter().enumerate() {
            for &(j, w) in &row.terms {
                a_full[(r, j)] += w;
            }
        }
        Ok(Self {
            blocks,
            n_full,
            n_hyper,
            a: &a_full * &t,
            t,
            y: model.rows.iter().map(|r| r.y).collect(),
            e: model.rows.iter().map(|r| r.exposure).collect(),
            likelihood: model.likelihood,
        })
    }

    fn n_free(&self) -> usize {
        self.t.ncols()
    }

    fn log_hyperprior(&self, psi: &[f64]) -> f64 {
        self.blocks
            .iter()
            .map(|(_, h)| match *h {
                Hyper::Free(k, a, b) => a * b.ln() - ln_gamma(a) + a * psi[k] - b * psi[k].exp(),
                _ => 0.0,
            })
            .sum()
    }

    /// Prior precision of the free coordinates.
    fn prior_precision(&self, psi: &[f64]) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(self.n_full, self.n_full);
        let mut offset = 0;
        for (b, h) in &self.blocks {
            let tau = match *h {
                Hyper::Free(k, ..) => psi[k].exp(),
                Hyper::Fixed(v) => v.exp(),
                Hyper::None => 1.0,
            };
            match b {
                Block::Fixed(p) => {
                    q[(offset, offset)] = *p;
                    offset += 1;
                }
                Block::Iid(n) => {
                    for i in 0..*n {
                        q[(offset + i, offset + i)] = tau;
                    }
                    offset += n;
                }
                Block::Icar(edges, n) => {
                    for &(i, j) in edges {
                        let (i, j) = (offset + i, offset + j);
                        q[(i, i)] += tau;
                        q[(j, j)] += tau;
                        q[(i, j)] -= tau;
                        q[(j, i)] -= tau;
                    }
                    offset += n;
                }
            }
        }
        self.t.transpose() * q * &self.t
    }

    fn loglik(&self, eta: &DVector<f64>, exclude: Option<usize>) -> f64 {
        (0..self.y.len())
            .filter(|&i| Some(i) != exclude)
            .map(|i| self.likelihood.log_density(self.y[i], eta[i], self.e[i]))
            .sum()
    }
}

/// `(½ log|P|, L)` for a dense SPD matrix.
fn dense_factor(p: DMatrix<f64>) -> Option<(f64, nalgebra::Cholesky<f64, nalgebra::Dyn>)> {
    let ch = p.cholesky()?;
    let half = ch.l().diagonal().iter().map(|d| d.ln()).sum();
    Some((half, ch))
}

#[derive(Clone)]
struct Acc {
    max: f64,
    z: f64,
    marg: Vec<Vec<f64>>,
    m1: Vec<f64>,
    m2: Vec<f64>,
}

impl Acc {
    fn new(sizes: &[usize], n_full: usize) -> Self {
        Self {
            max: f64::NEG_INFINITY,
            z: 0.0,
            marg: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            m1: vec![0.0; n_full],
            m2: vec![0.0; n_full],
        }
    }

    fn rescale(&mut self, new_max: f64) {
        if new_max > self.max {
            let f = if self.max == f64::NEG_INFINITY { 0.0 } else { (self.max - new_max).exp() };
            self.z *= f;
            for m in &mut self.marg {
                m.iter_mut().for_each(|v| *v *= f);
            }
            self.m1.iter_mut().for_each(|v| *v *= f);
            self.m2.iter_mut().for_each(|v| *v *= f);
            self.max = new_max;
        }
    }

    /// Adds mass `w·exp(lj)` at grid indices `idx` with latent moments.
    fn add(&mut self, lj: f64, w: f64, idx: &[usize], mean: &[f64], second: &[f64]) {
        if !lj.is_finite() {
            return;
        }
        self.rescale(lj);
        let m = w * (lj - self.max).exp();
        self.z += m;
        for (d, &k) in idx.iter().enumerate() {
            self.marg[d][k] += m;
        }
        for i in 0..mean.len() {
            self.m1[i] += m * mean[i];
            self.m2[i] += m * second[i];
        }
    }

    fn merge(mut self, other: Acc) -> Acc {
        if other.max == f64::NEG_INFINITY {
            return self;
        }
        self.rescale(other.max);
        let f = (other.max - self.max).exp();
        self.z += f * other.z;
        for (a, b) in self.marg.iter_mut().zip(&other.marg) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += f * y;
            }
        }
        for i in 0..self.m1.len() {
            self.m1[i] += f * other.m1[i];
            self.m2[i] += f * other.m2[i];
        }
        self
    }

    fn finish(self, spec: &GridSpec) -> DensePosterior {
        let marginals = (0..spec.dims.len())
            .map(|d| {
                let (x, w) = spec.axis(d);
                let dens = self.marg[d].iter().zip(&w).map(|(m, w)| m / w).collect();
                Marginal::grid(x, dens)
            })
            .collect();
        let latent_mean: Vec<f64> = self.m1.iter().map(|v| v / self.z).collect();
        let latent_sd = self
            .m2
            .iter()
            .zip(&latent_mean)
            .map(|(v, m)| (v / self.z - m * m).max(0.0).sqrt())
            .collect();
        DensePosterior {
            marginals,
            latent_mean,
            latent_sd,
            log_evidence: self.max + self.z.ln(),
        }
    }
}

fn unravel(mut k: usize, sizes: &[usize], out: &mut [usize]) {
    for (d, &n) in sizes.iter().enumerate().rev() {
        out[d] = k % n;
        k /= n;
    }
}

fn dense_grid(model: &LatentModel, spec: &GridSpec, exclude: Option<usize>) -> Result<DensePosterior, OracleError> {
    let red = Reduced::new(model)?;
    let nh = red.n_hyper;
    let nf = red.n_free();
    if nh + nf > MAX_DIMS {
        return Err(OracleError::TooManyDims(nh + nf));
    }
    if spec.dims.len() != nh + nf {
        return Err(OracleError::Dimension {
            expected: nh + nf,
            found: spec.dims.len(),
        });
    }
    spec.validate()?;
    let axes: Vec<(Vec<f64>, Vec<f64>)> = (0..spec.dims.len()).map(|d| spec.axis(d)).collect();
    let sizes: Vec<usize> = spec.dims.iter().map(|d| d.2).collect();
    let n_outer: usize = sizes[..nh].iter().product();
    let n_inner: usize = sizes[nh..].iter().product();
    const CHUNK: usize = 1 << 14;
    let jobs: Vec<(usize, usize)> = (0..n_outer)
        .flat_map(|o| (0..n_inner.div_ceil(CHUNK)).map(move |c| (o, c)))
        .collect();

    let acc = jobs
        .par_iter()
        .map(|&(o, c)| {
            let mut acc = Acc::new(&sizes, red.n_full);
            let mut idx = vec![0; sizes.len()];
            unravel(o, &sizes[..nh], &mut idx[..nh]);
            let psi: Vec<f64> = (0..nh).map(|d| axes[d].0[idx[d]]).collect();
            let w_outer: f64 = (0..nh).map(|d| axes[d].1[idx[d]]).product();
            let p = red.prior_precision(&psi);
            let Some((half_logdet, _)) = dense_factor(p.clone()) else {
                return acc;
            };
            let base = red.log_hyperprior(&psi) + half_logdet - 0.5 * nf as f64 * (2.0 * PI).ln();
            let mut phi = DVector::zeros(nf);
            for k in c * CHUNK..((c + 1) * CHUNK).min(n_inner) {
                unravel(k, &sizes[nh..], &mut idx[nh..]);
                let mut w = w_outer;
                for d in 0..nf {
                    phi[d] = axes[nh + d].0[idx[nh + d]];
                    w *= axes[nh + d].1[idx[nh + d]];
                }
                let eta = &red.a * &phi;
                let lj = base - 0.5 * phi.dot(&(&p * &phi)) + red.loglik(&eta, exclude);
                let full = &red.t * &phi;
                let sq: Vec<f64> = full.iter().map(|v| v * v).collect();
                acc.add(lj, w, &idx, full.as_slice(), &sq);
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Acc::new(&sizes, red.n_full), Acc::merge);
    Ok(acc.finish(spec))
}

/// Quadrature of the joint posterior over a full tensor grid in
/// (hyperparameters, free latent coordinates).
pub fn dense_posterior(model: &LatentModel, spec: &GridSpec) -> Result<DensePosterior, OracleError> {
    dense_grid(model, spec, None)
}

/// Exact leave-one-out predictive densities `p(y_i | y_{-i})` on the same
/// grid as [`dense_posterior`].
pub fn loo_refit(model: &LatentModel, spec: &GridSpec) -> Result<Vec<f64>, OracleError> {
    let n = model.rows.len();
    if n > MAX_LOO_OBSERVATIONS {
        return Err(OracleError::TooManyObservations(n));
    }
    let full = dense_grid(model, spec, None)?.log_evidence;
    (0..n)
        .map(|i| Ok((full - dense_grid(model, spec, Some(i))?.log_evidence).exp()))
        .collect()
}

/// Quadrature over the hyperparameter grid only, integrating the latent
/// field exactly; needs a Gaussian likelihood.
pub fn nested_gaussian_posterior(model: &LatentModel, spec: &GridSpec) -> Result<DensePosterior, OracleError> {
    let Likelihood::Gaussian { precision } = model.likelihood else {
        return Err(OracleError::Unsupported("nested quadrature needs a Gaussian likelihood"));
    };
    let red = Reduced::new(model)?;
    let nh = red.n_hyper;
    if spec.dims.len() != nh {
        return Err(OracleError::Dimension {
            expected: nh,
            found: spec.dims.len(),
        });
    }
    spec.validate()?;
    let axes: Vec<(Vec<f64>, Vec<f64>)> = (0..nh).map(|d| spec.axis(d)).collect();
    let sizes: Vec<usize> = spec.dims.iter().map(|d| d.2).collect();
    let y = DVector::from_vec(red.y.clone());
    let ata = red.a.transpose() * &red.a * precision;
    let aty = red.a.transpose() * &y * precision;

    let acc = (0..spec.total())
        .into_par_iter()
        .map(|o| {
            let mut acc = Acc::new(&sizes, red.n_full);
            let mut idx = vec![0; nh];
            unravel(o, &sizes, &mut idx);
            let psi: Vec<f64> = (0..nh).map(|d| axes[d].0[idx[d]]).collect();
            let w: f64 = (0..nh).map(|d| axes[d].1[idx[d]]).product();
            let p0 = red.prior_precision(&psi);
            let (Some((h0, _)), Some((h1, ch))) = (dense_factor(p0.clone()), dense_factor(&p0 + &ata)) else {
                return acc;
            };
            let mu = ch.solve(&aty);
            let eta = &red.a * &mu;
            // exact for a Gaussian integrand: joint at the mode times the
            // normalising volume
            let lj = red.log_hyperprior(&psi) + h0 - 0.5 * mu.dot(&(&p0 * &mu)) + red.loglik(&eta, None) - h1;
            let cov = &red.t * ch.inverse() * red.t.transpose();
            let mean = &red.t * &mu;
            let second: Vec<f64> = (0..red.n_full).map(|i| cov[(i, i)] + mean[i] * mean[i]).collect();
            acc.add(lj, w, &idx, mean.as_slice(), &second);
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Acc::new(&sizes, red.n_full), Acc::merge);
    Ok(acc.finish(spec))
}

/// Midpoint Riemann sum of `f` over `window` on an `n × n` grid covering
/// its bounding box.
pub fn riemann_intensity(f: impl Fn(Point) -> f64 + Sync, window: &Polygon, n: usize) -> f64 {
    let bb = window.bbox();
    let (hx, hy) = (bb.width() / n as f64, bb.height() / n as f64);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let x = bb.min.x + (i as f64 + 0.5) * hx;
            (0..n)
                .map(|j| Point::new(x, bb.min.y + (j as f64 + 0.5) * hy))
                .filter(|p| window.contains(*p))
                .map(&f)
                .sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum::<f64>()
        * hx
        * hy
}
