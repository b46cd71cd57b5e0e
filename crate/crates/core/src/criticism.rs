//! Posterior sampling from the fitted hyperparameter grid, DIC and
//! conditional predictive ordinates.
//!
//! Samples are drawn in blocks of [`BLOCK`]; block `b` of a run with master
//! seed `s` uses ChaCha stream `b` of `s`, so the first `n` samples of a run
//! do not depend on how many are requested in total.

use std::fmt::Write as _;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::inla::{GridPoint, HyperExploration};
use crate::model::{LatentModel, ModelError};
use crate::sparse::{GmrfError, SparseSymMatrix};

pub const BLOCK: usize = 64;
pub const DEFAULT_SAMPLES: usize = 1000;
/// Relative Monte Carlo error of the harmonic mean above which an observation is flagged.
pub const MAX_REL_ERROR: f64 = 0.3;
pub const MAX_INVERSE_DENSITY: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CriticismError {
    #[error("at least one posterior sample is required")]
    NoSamples,
    #[error("the hyperparameter grid is empty")]
    EmptyGrid,
    #[error(transparent)]
    Gmrf(#[from] GmrfError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitCriticism {
    pub dic: f64,
    pub p_d: f64,
    /// Posterior mean of `−2 log p(y | θ)`.
    pub mean_deviance: f64,
    /// `−2 log p(y | θ̄)` at the mixture mean.
    pub deviance_at_mean: f64,
    /// `Σ log CPO_i` over unflagged observations.
    pub sum_log_cpo: f64,
    pub cpo: Vec<f64>,
    /// Relative Monte Carlo error of each harmonic mean at the full sample count.
    pub rel_error: Vec<f64>,
    pub flagged: Vec<bool>,
    /// Kish effective sample size of the importance weights, summed over grid points.
    pub effective_samples: f64,
    pub samples: usize,
    pub seed: u64,
}

impl FitCriticism {
    pub fn n_flagged(&self) -> usize {
        self.flagged.iter().filter(|&&f| f).count()
    }

    /// Delta-method Monte Carlo standard error of `sum_log_cpo`.
    pub fn sum_log_cpo_se(&self) -> f64 {
        self.rel_error
            .iter()
            .zip(&self.flagged)
            .filter(|(_, &f)| !f)
            .map(|(r, _)| r * r)
            .sum::<f64>()
            .sqrt()
    }

    /// Flat `key = value` block.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "dic = {}", self.dic);
        let _ = writeln!(s, "p_d = {}", self.p_d);
        let _ = writeln!(s, "mean_deviance = {}", self.mean_deviance);
        let _ = writeln!(s, "deviance_at_mean = {}", self.deviance_at_mean);
        let _ = writeln!(s, "sum_log_cpo = {}", self.sum_log_cpo);
        let _ = writeln!(s, "sum_log_cpo_se = {}", self.sum_log_cpo_se());
        let _ = writeln!(s, "observations = {}", self.cpo.len());
        let _ = writeln!(s, "flagged = {}", self.n_flagged());
        let _ = writeln!(s, "samples = {}", self.samples);
        let _ = writeln!(s, "effective_samples = {}", self.effective_samples);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }

    /// One CSV row per observation.
    pub fn write_cpo_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "observation,cpo,log_cpo,rel_error,flagged")?;
        for (i, ((&c, &r), &f)) in self.cpo.iter().zip(&self.rel_error).zip(&self.flagged).enumerate() {
            writeln!(w, "{i},{c},{},{r},{}", c.ln(), u8::from(f))?;
        }
        Ok(())
    }
}

/// Running `log Σ exp(x)`.
#[derive(Debug, Clone, Copy)]
struct LogSum {
    max: f64,
    scaled: f64,
}

impl LogSum {
    const EMPTY: Self = Self {
        max: f64::NEG_INFINITY,
        scaled: 0.0,
    };

    fn push(&mut self, x: f64) {
        if x <= self.max {
            self.scaled += (x - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    fn value(&self) -> f64 {
        self.max + self.scaled.ln()
    }
}

/// Self-normalised importance sums at one grid point: draws from the
/// Gaussian approximation weighted by `ω = p(y | θ) π(θ | ψ) / q(θ)`.
#[derive(Debug, Clone)]
struct PointStats {
    w: LogSum,
    w2: LogSum,
    /// `Σ ω d / Σ ω` kept as a rescaled pair.
    dev_max: f64,
    dev_w: f64,
    dev_wd: f64,
    // Σ ω/p, Σ ω²/p and Σ ω²/p² per observation
    inv: Vec<LogSum>,
    inv_w2: Vec<LogSum>,
    inv2_w2: Vec<LogSum>,
}

impl PointStats {
    fn new(n: usize) -> Self {
        Self {
            w: LogSum::EMPTY,
            w2: LogSum::EMPTY,
            dev_max: f64::NEG_INFINITY,
            dev_w: 0.0,
            dev_wd: 0.0,
            inv: vec![LogSum::EMPTY; n],
            inv_w2: vec![LogSum::EMPTY; n],
            inv2_w2: vec![LogSum::EMPTY; n],
        }
    }

    fn push(&mut self, lw: f64, dev: f64, log_p: &[f64]) {
        self.w.push(lw);
        self.w2.push(2.0 * lw);
        if lw > self.dev_max {
            let r = (self.dev_max - lw).exp();
            self.dev_w *= r;
            self.dev_wd *= r;
            self.dev_max = lw;
        }
        let e = (lw - self.dev_max).exp();
        self.dev_w += e;
        self.dev_wd += e * dev;
        for (i, &l) in log_p.iter().enumerate() {
            self.inv[i].push(lw - l);
            self.inv_w2[i].push(2.0 * lw - l);
            self.inv2_w2[i].push(2.0 * (lw - l));
        }
    }

    /// `log E[1/p_i]` and the squared relative delta-method error.
    fn harmonic(&self, i: usize) -> (f64, f64) {
        let lw = self.w.value();
        let log_r = self.inv[i].value() - lw;
        let rel2 = (self.inv2_w2[i].value() - 2.0 * lw - 2.0 * log_r).exp()
            - 2.0 * (self.inv_w2[i].value() - 2.0 * lw - log_r).exp()
            + (self.w2.value() - 2.0 * lw).exp();
        (log_r, rel2.max(0.0))
    }

    fn effective_samples(&self) -> f64 {
        (2.0 * self.w.value() - self.w2.value()).exp()
    }
}

/// Importance sums for every grid point, mixed with the grid weights.
struct Accumulator {
    weights: Vec<f64>,
    points: Vec<Option<PointStats>>,
    max_inv: Vec<f64>,
    seen: usize,
}

impl Accumulator {
    fn new(weights: Vec<f64>, n_obs: usize) -> Self {
        Self {
            points: vec![None; weights.len()],
            weights,
            max_inv: vec![f64::NEG_INFINITY; n_obs],
            seen: 0,
        }
    }

    fn push(&mut self, s: &Scored) {
        let n = self.max_inv.len();
        self.points[s.point].get_or_insert_with(|| PointStats::new(n)).push(s.log_weight, s.deviance, &s.log_p);
        for (m, &l) in self.max_inv.iter_mut().zip(&s.log_p) {
            *m = m.max(-l);
        }
        self.seen += 1;
    }

    fn sampled(&self) -> impl Iterator<Item = (f64, &PointStats)> {
        let total: f64 = self.points.iter().zip(&self.weights).filter(|(p, _)| p.is_some()).map(|(_, w)| w).sum();
        self.points
            .iter()
            .zip(&self.weights)
            .filter_map(move |(p, &w)| p.as_ref().map(|p| (w / total, p)))
    }

    /// `log E[1/p_i]` and its relative Monte Carlo error.
    fn harmonic(&self, i: usize) -> (f64, f64) {
        let terms: Vec<(f64, f64)> = self
            .sampled()
            .map(|(w, p)| {
                let (log_r, rel2) = p.harmonic(i);
                (w.ln() + log_r, rel2)
            })
            .collect();
        let mut total = LogSum::EMPTY;
        terms.iter().for_each(|t| total.push(t.0));
        let log_e = total.value();
        let rel2: f64 = terms.iter().map(|(t, r)| (2.0 * (t - log_e)).exp() * r).sum();
        if self.seen < 2 {
            return (log_e, f64::INFINITY);
        }
        (log_e, rel2.sqrt())
    }

    fn unstable(&self, i: usize) -> bool {
        self.max_inv[i] > MAX_INVERSE_DENSITY.ln() || !(self.harmonic(i).1 <= MAX_REL_ERROR)
    }

    fn mean_deviance(&self) -> f64 {
        self.sampled().map(|(w, p)| w * p.dev_wd / p.dev_w).sum()
    }

    fn effective_samples(&self) -> f64 {
        self.sampled().map(|(_, p)| p.effective_samples()).sum()
    }
}

/// One posterior draw.
struct Draw {
    point: usize,
    theta: Vec<f64>,
    /// `−½ (θ − μ)' H (θ − μ)`, the Gaussian log kernel.
    log_q: f64,
}

/// A draw reduced to what the criticism sums need.
struct Scored {
    point: usize,
    log_weight: f64,
    deviance: f64,
    log_p: Vec<f64>,
}

struct Sampler<'a> {
    points: &'a [GridPoint],
    cumulative: Vec<f64>,
}

impl<'a> Sampler<'a> {
    fn new(exploration: &'a HyperExploration) -> Result<Self, CriticismError> {
        let points = &exploration.points[..];
        if points.is_empty() {
            return Err(CriticismError::EmptyGrid);
        }
        let total: f64 = points.iter().map(|p| p.weight).sum();
        let mut acc = 0.0;
        let cumulative = points
            .iter()
            .map(|p| {
                acc += p.weight / total;
                acc
            })
            .collect();
        Ok(Self { points, cumulative })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<Draw, GmrfError> {
        let u: f64 = rng.random();
        let k = self.cumulative.partition_point(|&c| c <= u).min(self.points.len() - 1);
        let a = &self.points[k].approx;
        let z: Vec<f64> = (0..a.mode.len()).map(|_| rng.sample(StandardNormal)).collect();
        let mut x = a.factor.solve_lt(&z)?;
        for (xi, m) in x.iter_mut().zip(&a.mode) {
            *xi += m;
        }
        if let Some(k) = &a.kriging {
            // weakly identified directions give the first pass a large
            // correction, whose round-off the second pass removes
            k.correct(&mut x);
            k.correct(&mut x);
        }
        let d: Vec<f64> = x.iter().zip(&a.mode).map(|(x, m)| x - m).collect();
        let log_q = -0.5 * d.iter().zip(a.factor.multiply(&d)).map(|(a, b)| a * b).sum::<f64>();
        Ok(Draw { point: k, theta: x, log_q })
    }

    fn block(&self, seed: u64, b: usize, count: usize) -> Result<Vec<Draw>, GmrfError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64);
        let len = BLOCK.min(count - b * BLOCK);
        (0..len).map(|_| self.draw(&mut rng)).collect()
    }
}

fn n_blocks(count: usize) -> usize {
    count.div_ceil(BLOCK)
}

/// Draws `count` latent vectors: a grid point with probability equal to its
/// weight, then `θ` from its constrained Gaussian approximation.
pub fn sample_posterior(exploration: &HyperExploration, count: usize, seed: u64) -> Result<Vec<Vec<f64>>, CriticismError> {
    if count == 0 {
        return Err(CriticismError::NoSamples);
    }
    let sampler = Sampler::new(exploration)?;
    let blocks: Vec<Vec<Draw>> = (0..n_blocks(count))
        .into_par_iter()
        .map(|b| sampler.block(seed, b, count))
        .collect::<Result<_, _>>()?;
    Ok(blocks.into_iter().flatten().map(|d| d.theta).collect())
}

/// Weighted mean of the per-grid-point modes.
pub fn posterior_mean(exploration: &HyperExploration) -> Vec<f64> {
    let n = exploration.points.first().map_or(0, |p| p.approx.mode.len());
    let total: f64 = exploration.points.iter().map(|p| p.weight).sum();
    let mut mean = vec![0.0; n];
    for p in &exploration.points {
        for (m, v) in mean.iter_mut().zip(&p.approx.mode) {
            *m += p.weight / total * v;
        }
    }
    mean
}

fn deviance(model: &LatentModel, theta: &[f64]) -> (f64, Vec<f64>) {
    let l = model.observation_log_densities(&model.linear_predictor(theta));
    (-2.0 * l.iter().sum::<f64>(), l)
}

/// DIC and harmonic-mean CPO from one set of `count` posterior samples.
///
/// The Gaussian draws of each grid point are importance-weighted to the
/// exact conditional `p(θ | ψ, y)` and self-normalised per grid point
/// before mixing with the grid weights; without the weights the harmonic
/// mean of a Poisson density over Gaussian draws has no finite target.
///
/// Observation flags are evaluated at the checkpoints `BLOCK · 2^k ≤ count`;
/// an observation that passes any checkpoint stays unflagged, so raising
/// `count` with the same seed never flags an observation that was accepted
/// at a smaller count. With fewer than `BLOCK` samples every observation is
/// flagged.
pub fn criticise(model: &LatentModel, exploration: &HyperExploration, count: usize, seed: u64) -> Result<FitCriticism, CriticismError> {
    if count == 0 {
        return Err(CriticismError::NoSamples);
    }
    let sampler = Sampler::new(exploration)?;
    let priors: Vec<SparseSymMatrix> = exploration
        .points
        .par_iter()
        .map(|p| model.assemble_prior_precision(&p.psi).map(|q| q.q))
        .collect::<Result<_, _>>()?;
    let n_obs = model.rows.len();
    let blocks: Vec<Vec<Scored>> = (0..n_blocks(count))
        .into_par_iter()
        .map(|b| {
            Ok(sampler
                .block(seed, b, count)?
                .into_iter()
                .map(|d| {
                    let (deviance, log_p) = deviance(model, &d.theta);
                    let log_prior = -0.5 * priors[d.point].quad_form(&d.theta);
                    Scored {
                        point: d.point,
                        log_weight: -0.5 * deviance + log_prior - d.log_q,
                        deviance,
                        log_p,
                    }
                })
                .collect())
        })
        .collect::<Result<_, GmrfError>>()?;

    let weights = exploration.points.iter().map(|p| p.weight).collect();
    let mut acc = Accumulator::new(weights, n_obs);
    let mut flagged = vec![true; n_obs];
    let mut checkpoint = BLOCK;
    for s in blocks.iter().flatten() {
        acc.push(s);
        if acc.seen == checkpoint {
            for (i, f) in flagged.iter_mut().enumerate() {
                *f = *f && acc.unstable(i);
            }
            checkpoint *= 2;
        }
    }

    let (log_inv, rel_error): (Vec<f64>, Vec<f64>) = (0..n_obs).map(|i| acc.harmonic(i)).unzip();
    let sum_log_cpo = log_inv.iter().zip(&flagged).filter(|(_, &f)| !f).map(|(l, _)| -l).sum();
    let mean_deviance = acc.mean_deviance();
    let (deviance_at_mean, _) = deviance(model, &posterior_mean(exploration));
    let p_d = mean_deviance - deviance_at_mean;
    Ok(FitCriticism {
        dic: deviance_at_mean + 2.0 * p_d,
        p_d,
        mean_deviance,
        deviance_at_mean,
        sum_log_cpo,
        cpo: log_inv.iter().map(|l| (-l).exp()).collect(),
        rel_error,
        flagged,
        effective_samples: acc.effective_samples(),
        samples: count,
        seed,
    })
}

/// `(DIC, p_D)`.
pub fn dic(model: &LatentModel, exploration: &HyperExploration, count: usize, seed: u64) -> Result<(f64, f64), CriticismError> {
    let c = criticise(model, exploration, count, seed)?;
    Ok((c.dic, c.p_d))
}

/// `(Σ log CPO over unflagged, CPO_i, flags)`.
pub fn cpo(model: &LatentModel, exploration: &HyperExploration, count: usize, seed: u64) -> Result<(f64, Vec<f64>, Vec<bool>), CriticismError> {
    let c = criticise(model, exploration, count, seed)?;
    Ok((c.sum_log_cpo, c.cpo, c.flagged))
}
