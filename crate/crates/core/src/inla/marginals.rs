use rayon::prelude::*;

use crate::marginal::{Marginal, Summary};
use crate::model::{HyperInfo, LatentModel};

use super::gaussian::Approximator;
use super::hyper::{explore_hyper, HyperExploration};
use super::{InlaError, InlaOptions};

/// A fitted model: the hyperparameter grid with its Gaussian
/// approximations, from which all marginals are mixed.
#[derive(Debug, Clone)]
pub struct InlaFit {
    pub exploration: HyperExploration,
    pub hyper: Vec<HyperInfo>,
    pub latent_names: Vec<String>,
    pub n_fixed: usize,
    pub options: InlaOptions,
}

/// Standardised offsets at which the Laplace conditional is evaluated.
const LAPLACE_STEPS: std::ops::RangeInclusive<i32> = -10..=10;
const LAPLACE_SPACING: f64 = 0.5;
const LAPLACE_GRID: usize = 401;

/// Quadratic interpolation of tabulated log values at `x`; `-inf` outside.
fn interpolate_log(xs: &[f64], f: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x < xs[0] || x > xs[n - 1] {
        return f64::NEG_INFINITY;
    }
    let k = xs.partition_point(|&v| v < x).clamp(1, n - 1);
    let c = if k == 1 { 1 } else if k == n - 1 { n - 2 } else if x - xs[k - 1] < xs[k] - x { k - 1 } else { k };
    let (a, b, d) = (c - 1, c, c + 1);
    if !(f[a].is_finite() && f[b].is_finite() && f[d].is_finite()) {
        let (l, r) = (k - 1, k);
        let t = (x - xs[l]) / (xs[r] - xs[l]);
        return (1.0 - t) * f[l] + t * f[r];
    }
    let la = (x - xs[b]) * (x - xs[d]) / ((xs[a] - xs[b]) * (xs[a] - xs[d]));
    let lb = (x - xs[a]) * (x - xs[d]) / ((xs[b] - xs[a]) * (xs[b] - xs[d]));
    let ld = (x - xs[a]) * (x - xs[b]) / ((xs[d] - xs[a]) * (xs[d] - xs[b]));
    la * f[a] + lb * f[b] + ld * f[d]
}

/// Variance-preserving Gaussian kernel smooth of weighted values
/// `(w, x)`: kernels of width `h ≤ bandwidth` sit at values shrunk toward
/// the mean so the mixture keeps the weighted mean and variance.
pub fn smoothed_marginal(values: &[(f64, f64)], bandwidth: f64) -> Marginal {
    let mean: f64 = values.iter().map(|(w, v)| w * v).sum();
    let var: f64 = values.iter().map(|(w, v)| w * (v - mean).powi(2)).sum();
    let s = var.sqrt();
    if distinct_count(values.iter().map(|p| p.1)) == 1 || !(s > 0.0) {
        return Marginal::gaussian(mean, 0.0);
    }
    let h = bandwidth.min(0.9 * s);
    let a = (1.0 - h * h / (s * s)).sqrt();
    Marginal::mixture(values.iter().map(|&(w, v)| (w, mean + a * (v - mean), h)))
}

fn distinct_count(v: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<f64> = v.collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    v.len()
}

/// Fits `model` starting the hyperparameter search at `psi0`.
pub fn fit(model: &LatentModel, psi0: &[f64], opts: InlaOptions) -> Result<InlaFit, InlaError> {
    let approx = Approximator::new(model, opts)?;
    let exploration = explore_hyper(&approx, psi0)?;
    Ok(InlaFit {
        exploration,
        hyper: model.hyper_info(),
        latent_names: model.latent_names(),
        n_fixed: model.n_fixed(),
        options: approx.options().clone(),
    })
}

impl InlaFit {
    pub fn latent_dim(&self) -> usize {
        self.latent_names.len()
    }

    /// Mixture of the per-grid-point Gaussians for latent coordinate `i`.
    pub fn latent_marginal(&self, i: usize) -> Marginal {
        Marginal::mixture(
            self.exploration
                .points
                .iter()
                .map(|p| (p.weight, p.approx.mode[i], p.approx.sd(i))),
        )
    }

    /// Laplace marginal of latent coordinate `i`: at every grid point the
    /// conditional `p(θ_i | ψ, y)` is tabulated by re-solving the mode with
    /// `θ_i` pinned, then the grid densities are mixed.
    pub fn laplace_marginal(&self, model: &LatentModel, i: usize) -> Result<Marginal, InlaError> {
        let approx = Approximator::new(model, self.options.clone())?;
        let tables: Vec<(f64, Vec<f64>, Vec<f64>)> = self
            .exploration
            .points
            .par_iter()
            .map(|p| {
                let (mu, sd) = (p.approx.mode[i], p.approx.sd(i));
                let xs: Vec<f64> = LAPLACE_STEPS.map(|t| mu + LAPLACE_SPACING * t as f64 * sd).collect();
                let mut f = vec![f64::NEG_INFINITY; xs.len()];
                // walk outwards from the centre, warm-starting each solve
                // from its neighbour's mode
                let centre = xs.len() / 2;
                for side in [&mut (centre..xs.len()).collect::<Vec<_>>(), &mut (0..centre).rev().collect()] {
                    let mut start = p.approx.mode.clone();
                    for &k in side.iter() {
                        if let Ok((v, mode)) = approx.conditional(&p.psi, i, xs[k], Some(&start)) {
                            f[k] = v;
                            start = mode;
                        }
                    }
                }
                (p.weight, xs, f)
            })
            .collect();
        let lo = tables.iter().map(|t| t.1[0]).fold(f64::INFINITY, f64::min);
        let hi = tables.iter().map(|t| t.1[t.1.len() - 1]).fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            return Ok(self.latent_marginal(i));
        }
        let h = (hi - lo) / (LAPLACE_GRID - 1) as f64;
        let grid: Vec<f64> = (0..LAPLACE_GRID).map(|k| lo + h * k as f64).collect();
        let mut density = vec![0.0; LAPLACE_GRID];
        for (w, xs, f) in &tables {
            let max = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !max.is_finite() {
                continue;
            }
            let d: Vec<f64> = grid.iter().map(|&x| (interpolate_log(xs, f, x) - max).exp()).collect();
            let z: f64 = h * (d.iter().sum::<f64>() - 0.5 * (d[0] + d[LAPLACE_GRID - 1]));
            if z > 0.0 {
                for (acc, v) in density.iter_mut().zip(&d) {
                    *acc += w * v / z;
                }
            }
        }
        if density.iter().all(|&d| d == 0.0) {
            return Ok(self.latent_marginal(i));
        }
        Ok(Marginal::grid(grid, density))
    }

    /// Marginal of the linear combination `Σ b_j θ_j`.
    pub fn combination_marginal(&self, b: &[(usize, f64)]) -> Result<Marginal, InlaError> {
        let mut comps = Vec::with_capacity(self.exploration.points.len());
        for p in &self.exploration.points {
            let (mean, var) = p.approx.combination(b)?;
            comps.push((p.weight, mean, var.sqrt()));
        }
        Ok(Marginal::mixture(comps))
    }

    /// Posterior mean of the whole latent vector.
    pub fn latent_mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.latent_dim()];
        for p in &self.exploration.points {
            for (o, m) in out.iter_mut().zip(&p.approx.mode) {
                *o += p.weight * m;
            }
        }
        out
    }

    /// Marginal of internal hyperparameter `j`.
    pub fn hyper_marginal(&self, j: usize) -> Marginal {
        let pts = &self.exploration.points;
        let vals: Vec<(f64, f64)> = pts.iter().map(|p| (p.weight, p.psi[j])).collect();
        smoothed_marginal(&vals, 0.5 * self.exploration.dz * self.exploration.sd[j])
    }

    /// True when the grid has fewer than three distinct values of
    /// hyperparameter `j`, so its marginal is only a rough sketch.
    pub fn hyper_marginal_degenerate(&self, j: usize) -> bool {
        distinct_count(self.exploration.points.iter().map(|p| p.psi[j])) < 3
    }

    /// Hyperparameter `j` on its reporting scale (variance or range).
    pub fn hyper_marginal_user(&self, j: usize) -> Marginal {
        self.hyper_marginal(j).exp(self.hyper[j].kind.user_scale())
    }

    pub fn fixed_summaries(&self) -> Vec<(String, Summary)> {
        (0..self.n_fixed)
            .map(|i| (self.latent_names[i].clone(), self.latent_marginal(i).summary()))
            .collect()
    }

    pub fn hyper_summaries(&self) -> Vec<(String, Summary)> {
        (0..self.hyper.len())
            .map(|j| (self.hyper[j].user_name.clone(), self.hyper_marginal_user(j).summary()))
            .collect()
    }
}
