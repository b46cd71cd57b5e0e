use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::model::{LatentModel, ModelError, PriorPrecision};
use crate::sparse::{CholFactor, KrigingCorrection, LinearConstraints, SparseSymMatrix, SymbolicCholesky};

use super::{InlaError, InlaOptions};

/// Gaussian approximation of `p(θ | y, ψ)` at its mode.
#[derive(Debug, Clone)]
pub struct GaussianApprox {
    pub psi: Vec<f64>,
    pub mode: Vec<f64>,
    pub eta: Vec<f64>,
    /// Factor of `Q + A' diag(c) A` at the mode.
    pub factor: CholFactor,
    pub kriging: Option<KrigingCorrection>,
    /// Constraint-corrected marginal variances.
    pub variances: Vec<f64>,
    /// `log p(y | θ*)` with all constants.
    pub log_likelihood: f64,
    /// `log π(θ* | ψ)` on the constraint surface.
    pub log_prior: f64,
    /// Log density of the approximation at its own mode.
    pub log_gaussian: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl GaussianApprox {
    pub fn sd(&self, i: usize) -> f64 {
        self.variances[i].sqrt()
    }

    /// Mean and variance of `b'θ` under the (constrained) approximation.
    pub fn combination(&self, b: &[(usize, f64)]) -> Result<(f64, f64), InlaError> {
        let n = self.mode.len();
        let mut dense = vec![0.0; n];
        for &(j, v) in b {
            dense[j] += v;
        }
        let x = self.factor.solve(&dense)?;
        let mut var: f64 = dense.iter().zip(&x).map(|(a, b)| a * b).sum();
        if let Some(k) = &self.kriging {
            var -= k.combination_reduction(b);
        }
        let mean = b.iter().map(|&(j, v)| v * self.mode[j]).sum();
        Ok((mean, var.max(0.0)))
    }
}

/// Sparse design matrix rows and the fixed pattern of `A' D A`.
#[derive(Debug, Clone)]
pub(crate) struct Design {
    n: usize,
    /// Per row, the merged `(latent, weight)` terms.
    rows: Vec<Vec<(usize, f64)>>,
}

impl Design {
    pub(crate) fn new(model: &LatentModel) -> Self {
        let rows = model
            .rows
            .iter()
            .map(|r| {
                let mut t = r.terms.clone();
                t.sort_by_key(|e| e.0);
                let mut merged: Vec<(usize, f64)> = Vec::with_capacity(t.len());
                for (j, w) in t {
                    match merged.last_mut() {
                        Some(last) if last.0 == j => last.1 += w,
                        _ => merged.push((j, w)),
                    }
                }
                merged
            })
            .collect();
        Self {
            n: model.latent_dim(),
            rows,
        }
    }

    /// `A' diag(d) A`, with explicit zeros so the pattern never changes.
    fn weighted_gram(&self, d: &[f64]) -> SparseSymMatrix {
        let mut t = Vec::new();
        for (row, &di) in self.rows.iter().zip(d) {
            for (a, &(i, wi)) in row.iter().enumerate() {
                for &(j, wj) in &row[..=a] {
                    t.push((i, j, di * wi * wj));
                }
            }
        }
        SparseSymMatrix::from_triplets(self.n, &t).expect("validated latent indices")
    }

    /// `A' v`.
    fn transpose_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (row, &vi) in self.rows.iter().zip(v) {
            for &(j, w) in row {
                out[j] += w * vi;
            }
        }
        out
    }

    fn mul(&self, theta: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|&(j, w)| w * theta[j]).sum()).collect()
    }
}

/// Reusable state for repeated Gaussian approximations of one model.
#[derive(Debug)]
pub struct Approximator<'m> {
    pub(crate) model: &'m LatentModel,
    pub(crate) opts: InlaOptions,
    design: Design,
    symbolic: std::sync::OnceLock<SymbolicCholesky>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Projection of `g` onto the null space of the constraint rows.
fn project_out(g: &[f64], c: &LinearConstraints) -> Vec<f64> {
    let k = c.len();
    if k == 0 {
        return g.to_vec();
    }
    let n = g.len();
    let dense: Vec<Vec<f64>> = c
        .rows
        .iter()
        .map(|r| {
            let mut v = vec![0.0; n];
            for &(j, a) in r {
                v[j] += a;
            }
            v
        })
        .collect();
    let gram = DMatrix::from_fn(k, k, |a, b| dense[a].iter().zip(&dense[b]).map(|(x, y)| x * y).sum::<f64>());
    let cg = DVector::from_fn(k, |a, _| dense[a].iter().zip(g).map(|(x, y)| x * y).sum::<f64>());
    let lambda = gram.cholesky().map(|ch| ch.solve(&cg)).unwrap_or_else(|| DVector::zeros(k));
    let mut out = g.to_vec();
    for a in 0..k {
        for j in 0..n {
            out[j] -= dense[a][j] * lambda[a];
        }
    }
    out
}

impl<'m> Approximator<'m> {
    pub fn new(model: &'m LatentModel, opts: InlaOptions) -> Result<Self, InlaError> {
        model.validate()?;
        Ok(Self {
            model,
            opts,
            design: Design::new(model),
            symbolic: std::sync::OnceLock::new(),
        })
    }

    pub fn model(&self) -> &LatentModel {
        self.model
    }

    pub fn options(&self) -> &InlaOptions {
        &self.opts
    }

    fn factor(&self, h: &SparseSymMatrix) -> Result<CholFactor, InlaError> {
        let sym = self.symbolic.get_or_init(|| SymbolicCholesky::analyze(h));
        Ok(sym.factor(h)?)
    }

    fn objective(&self, prior: &PriorPrecision, theta: &[f64]) -> Result<f64, ModelError> {
        let eta = self.design.mul(theta);
        Ok(self.model.loglik(&eta)?.value - 0.5 * prior.q.quad_form(theta))
    }

    /// Newton iterations for the mode of `log p(y|θ) + log π(θ|ψ)` subject
    /// to the prior constraints, from `start` (or zero).
    pub fn approximate(&self, psi: &[f64], start: Option<&[f64]>) -> Result<GaussianApprox, InlaError> {
        self.approximate_given(psi, start, &[])
    }

    /// As [`Approximator::approximate`] with extra linear equality
    /// constraints `(row, rhs)` on top of the prior ones. The prior density
    /// keeps its own normalisation; the Gaussian density lives on the
    /// reduced surface.
    pub fn approximate_given(
        &self,
        psi: &[f64],
        start: Option<&[f64]>,
        extra: &[(Vec<(usize, f64)>, f64)],
    ) -> Result<GaussianApprox, InlaError> {
        self.solve(psi, start, extra, true)
    }

    /// Newton solve for the mode; marginal variances are left empty unless
    /// `with_variances`.
    fn solve(
        &self,
        psi: &[f64],
        start: Option<&[f64]>,
        extra: &[(Vec<(usize, f64)>, f64)],
        with_variances: bool,
    ) -> Result<GaussianApprox, InlaError> {
        let model = self.model;
        let prior = model.assemble_prior_precision(psi)?;
        let n = model.latent_dim();
        let mut all = prior.constraints.clone();
        for (row, rhs) in extra {
            all.push(row.clone(), *rhs);
        }
        let cons = &all;

        let mut theta = match start {
            Some(s) => s.to_vec(),
            None => vec![0.0; n],
        };
        let mut f = self.objective(&prior, &theta)?;
        let mut iterations = 0;
        let mut grad_norm;
        let mut kriging: Option<KrigingCorrection>;
        let mut first = true;
        let mut stalled = false;
        loop {
            let eta = self.design.mul(&theta);
            let ll = model.loglik(&eta)?;
            let h = SparseSymMatrix::linear_combination(&[(1.0, &prior.q), (1.0, &self.design.weighted_gram(&ll.curvature))]);
            let factor = self.factor(&h)?;
            kriging = if cons.is_empty() {
                None
            } else {
                Some(KrigingCorrection::new(&factor, cons)?)
            };
            if first {
                first = false;
                // make the start feasible, then linearise there
                if let Some(k) = &kriging {
                    k.correct(&mut theta);
                    f = self.objective(&prior, &theta)?;
                    continue;
                }
            }
            let qtheta = prior.q.mul_vec(&theta);
            let grad: Vec<f64> = self
                .design
                .transpose_mul(&ll.gradient)
                .iter()
                .zip(&qtheta)
                .map(|(a, b)| a - b)
                .collect();
            grad_norm = inf_norm(&project_out(&grad, cons));
            let tol = self.opts.newton_tol * (1.0 + inf_norm(&theta));
            // gradient noise floor once steps stop improving the objective
            let relaxed = 1e-5 * (1.0 + inf_norm(&theta));
            if grad_norm <= tol || (stalled && grad_norm <= relaxed) {
                // one more full step squares the residual; log|H| depends on
                // θ* to first order, so this keeps hyper densities smooth in ψ
                let mut step = factor.solve(&grad)?;
                if let Some(k) = &kriging {
                    let rhs: Vec<f64> = cons.residual(&theta).iter().map(|r| -r).collect();
                    k.correct_with_rhs(&mut step, &rhs);
                }
                let trial: Vec<f64> = theta.iter().zip(&step).map(|(t, s)| t + s).collect();
                if self.objective(&prior, &trial)? >= f - 1e-12 * f.abs().max(1.0) {
                    theta = trial;
                }
                break;
            }
            if iterations >= self.opts.max_newton {
                return Err(InlaError::NonConvergence {
                    iterations,
                    gradient: grad_norm,
                });
            }
            iterations += 1;

            // Newton step H d = ∇, kept on the constraint surface; solving for
            // the step rather than the new point keeps roundoff proportional
            // to the gradient
            let mut step = factor.solve(&grad)?;
            if let Some(k) = &kriging {
                let rhs: Vec<f64> = cons.residual(&theta).iter().map(|r| -r).collect();
                k.correct_with_rhs(&mut step, &rhs);
            }
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..=self.opts.max_halvings {
                let trial: Vec<f64> = theta.iter().zip(&step).map(|(t, s)| t + scale * s).collect();
                let ft = self.objective(&prior, &trial)?;
                if ft.is_finite() && ft >= f - 1e-12 * f.abs().max(1.0) {
                    stalled = ft - f <= 1e-13 * f.abs().max(1.0);
                    theta = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted || inf_norm(&step) * scale <= 1e-14 * (1.0 + inf_norm(&theta)) {
                if grad_norm <= relaxed {
                    break;
                }
                return Err(InlaError::NonConvergence {
                    iterations,
                    gradient: grad_norm,
                });
            }
        }

        // refactor at the final θ
        let eta = self.design.mul(&theta);
        let ll = model.loglik(&eta)?;
        let h = SparseSymMatrix::linear_combination(&[(1.0, &prior.q), (1.0, &self.design.weighted_gram(&ll.curvature))]);
        let factor = self.factor(&h)?;
        if !cons.is_empty() {
            kriging = Some(KrigingCorrection::new(&factor, cons)?);
        }
        let mut variances = if with_variances { factor.marginal_variances() } else { Vec::new() };
        if let (Some(k), true) = (&kriging, with_variances) {
            for (v, r) in variances.iter_mut().zip(k.variance_reduction()) {
                *v = (*v - r).max(0.0);
            }
        }
        let k = cons.len();
        let mut log_gaussian = -0.5 * (n - k) as f64 * (2.0 * PI).ln() + factor.half_logdet();
        if let Some(kc) = &kriging {
            log_gaussian += 0.5 * kc.log_det_s() - 0.5 * cons.log_det_gram();
        }
        Ok(GaussianApprox {
            psi: psi.to_vec(),
            log_likelihood: ll.value + model.loglik_constant(),
            log_prior: prior.log_density(&theta),
            log_gaussian,
            mode: theta,
            eta,
            factor,
            kriging,
            variances,
            iterations,
            gradient_norm: grad_norm,
        })
    }

    /// Laplace approximation of `log p(ψ | y)` up to a constant.
    pub fn log_posterior_hyper(&self, psi: &[f64], start: Option<&[f64]>) -> Result<(f64, GaussianApprox), InlaError> {
        let ga = self.approximate(psi, start)?;
        let lp = self.model.log_hyperprior(psi)? + ga.log_likelihood + ga.log_prior - ga.log_gaussian;
        Ok((lp, ga))
    }

    /// Unnormalised Laplace log density of `θ_i = x` given ψ.
    pub fn log_conditional(&self, psi: &[f64], i: usize, x: f64, start: Option<&[f64]>) -> Result<f64, InlaError> {
        self.conditional(psi, i, x, start).map(|(v, _)| v)
    }

    /// [`Approximator::log_conditional`] together with the pinned mode, for
    /// warm-starting the next evaluation.
    pub(crate) fn conditional(&self, psi: &[f64], i: usize, x: f64, start: Option<&[f64]>) -> Result<(f64, Vec<f64>), InlaError> {
        let ga = self.solve(psi, start, &[(vec![(i, 1.0)], x)], false)?;
        Ok((ga.log_likelihood + ga.log_prior - ga.log_gaussian, ga.mode))
    }
}

/// One-shot Gaussian approximation with default options.
pub fn gaussian_approx(model: &LatentModel, psi: &[f64]) -> Result<GaussianApprox, InlaError> {
    Approximator::new(model, InlaOptions::default())?.approximate(psi, None)
}

/// One-shot Laplace log posterior of ψ with default options.
pub fn log_posterior_hyper(model: &LatentModel, psi: &[f64]) -> Result<f64, InlaError> {
    Ok(Approximator::new(model, InlaOptions::default())?.log_posterior_hyper(psi, None)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Likelihood, LogGammaPrior, ObservationRow};

    /// `η ~ N(0, 1)` with `y = 3 ~ Poisson(e^η)`.
    fn scalar_poisson(fixed_prec: Option<f64>) -> LatentModel {
        let mut m = LatentModel::new(vec![], Likelihood::Poisson);
        m.add_iid("eta", 1, LogGammaPrior { shape: 1.0, rate: 1.0 }).unwrap();
        if let Some(p) = fixed_prec {
            m.fix_hyper("eta", vec![p.ln()]);
        }
        m.rows.push(ObservationRow {
            y: 3.0,
            exposure: 1.0,
            terms: vec![(0, 1.0)],
        });
        m
    }

    #[test]
    fn scalar_mode_and_variance() {
        // η + e^η = 3, solved independently by bisection
        let (mut lo, mut hi) = (0.0f64, 1.5f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid + mid.exp() < 3.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let root = 0.5 * (lo + hi);
        assert!((root - 0.7921).abs() < 1e-4);
        let ga = gaussian_approx(&scalar_poisson(Some(1.0)), &[]).unwrap();
        assert!((ga.mode[0] - root).abs() < 1e-8);
        assert!((ga.variances[0] - 1.0 / (1.0 + root.exp())).abs() < 1e-8);
        assert!((ga.variances[0] - 0.3117).abs() < 1e-4);
    }

    #[test]
    fn gaussian_likelihood_converges_in_one_step() {
        let mut m = LatentModel::new(vec![], Likelihood::Gaussian { precision: 4.0 });
        m.add_iid("x", 2, LogGammaPrior::default()).unwrap();
        m.fix_hyper("x", vec![0.0]);
        for (y, j) in [(1.0, 0), (2.0, 1), (0.5, 0)] {
            m.rows.push(ObservationRow {
                y,
                exposure: 1.0,
                terms: vec![(j, 1.0)],
            });
        }
        let ga = gaussian_approx(&m, &[]).unwrap();
        assert!(ga.iterations <= 1);
        // x0: precision 1 + 8, mean 4·1.5 / 9
        assert!((ga.mode[0] - 6.0 / 9.0).abs() < 1e-12);
        assert!((ga.variances[0] - 1.0 / 9.0).abs() < 1e-12);
        assert!((ga.mode[1] - 8.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn hyperprior_shift_moves_log_posterior() {
        let m = scalar_poisson(None);
        let a = log_posterior_hyper(&m, &[0.2]).unwrap();
        let mut shifted = m.clone();
        if let crate::model::ComponentKind::Iid { prior, .. } = &mut shifted.components[0].kind {
            // doubling the rate adds log 2 − (e^ψ)·1 to the log prior
            prior.rate = 2.0;
        }
        let b = log_posterior_hyper(&shifted, &[0.2]).unwrap();
        assert!((b - a - (2f64.ln() - 0.2f64.exp())).abs() < 1e-12);
    }
}
