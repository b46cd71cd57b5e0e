use std::cell::RefCell;
use std::collections::BTreeMap;

use argmin::core::{CostFunction, Error as ArgminError, Executor, State};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use super::gaussian::{Approximator, GaussianApprox};
use super::{InlaError, InlaOptions, MAX_HYPER};

/// Cost reported for hyperparameters where the inner approximation fails.
/// Finite so the simplex spread stays defined.
const FAILED_COST: f64 = 1e100;

#[derive(Debug, Clone)]
pub struct GridPoint<T = GaussianApprox> {
    /// Integer lattice coordinates; `z = dz · index`.
    pub index: Vec<i32>,
    pub psi: Vec<f64>,
    pub log_post: f64,
    /// Normalised integration weight.
    pub weight: f64,
    pub approx: T,
}

#[derive(Debug, Clone)]
pub struct HyperExploration<T = GaussianApprox> {
    pub mode: Vec<f64>,
    pub log_post_mode: f64,
    /// Columns map standardised `z` to `ψ − ψ*`.
    pub transform: DMatrix<f64>,
    /// Approximate posterior sd of each internal hyperparameter.
    pub sd: Vec<f64>,
    pub dz: f64,
    /// False when the Hessian was not positive definite and the grid fell
    /// back to axis-aligned steps.
    pub hessian_ok: bool,
    pub points: Vec<GridPoint<T>>,
    pub failed_points: usize,
    pub optimizer_evaluations: usize,
}

impl<T> HyperExploration<T> {
    pub fn mode_point(&self) -> &GridPoint<T> {
        self.points
            .iter()
            .find(|p| p.index.iter().all(|&i| i == 0))
            .expect("the mode is always on the grid")
    }
}

struct NegLogPost<'a, T, F> {
    eval: &'a F,
    warm: RefCell<Option<T>>,
    evaluations: RefCell<usize>,
}

impl<T: Clone, F: Fn(&[f64], Option<&T>) -> Option<(f64, T)>> CostFunction for NegLogPost<'_, T, F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, psi: &Vec<f64>) -> Result<f64, ArgminError> {
        *self.evaluations.borrow_mut() += 1;
        let warm = self.warm.borrow().clone();
        let mut out = (self.eval)(psi, warm.as_ref());
        if out.is_none() && warm.is_some() {
            out = (self.eval)(psi, None);
        }
        match out {
            Some((lp, t)) if lp.is_finite() => {
                *self.warm.borrow_mut() = Some(t);
                Ok(-lp)
            }
            _ => Ok(FAILED_COST),
        }
    }
}

fn optimise<T: Clone, F>(eval: &F, psi0: &[f64], tol: f64, iters: u64) -> Result<(Vec<f64>, usize), InlaError>
where
    F: Fn(&[f64], Option<&T>) -> Option<(f64, T)>,
{
    let m = psi0.len();
    let mut simplex = vec![psi0.to_vec()];
    for i in 0..m {
        let mut v = psi0.to_vec();
        v[i] += 1.0;
        simplex.push(v);
    }
    let problem = NegLogPost {
        eval,
        warm: RefCell::new(None),
        evaluations: RefCell::new(0),
    };
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(tol)
        .map_err(|e| InlaError::Optimizer(e.to_string()))?;
    let res = Executor::new(problem, solver)
        .configure(|s| s.max_iters(iters))
        .timer(false)
        .run()
        .map_err(|e| InlaError::Optimizer(e.to_string()))?;
    if res.state().get_best_cost() >= FAILED_COST {
        return Err(InlaError::Optimizer("no hyperparameter value gave a valid approximation".into()));
    }
    let best = res
        .state()
        .get_best_param()
        .cloned()
        .ok_or_else(|| InlaError::Optimizer("no best parameter".into()))?;
    let evals = *res.problem().problem.as_ref().map(|p| p.evaluations.borrow()).expect("problem is returned");
    Ok((best, evals))
}

/// Central-difference gradient and Hessian of `f` at `x`.
fn fd_hessian(f: &(dyn Fn(&[f64]) -> Option<f64> + Sync), x: &[f64], f0: f64, h: f64) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let m = x.len();
    let shifted = |steps: &[(usize, f64)]| {
        let mut v = x.to_vec();
        for &(i, s) in steps {
            v[i] += s * h;
        }
        v
    };
    let mut pts = Vec::new();
    for i in 0..m {
        pts.push(shifted(&[(i, 1.0)]));
        pts.push(shifted(&[(i, -1.0)]));
        for j in 0..i {
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                pts.push(shifted(&[(i, si), (j, sj)]));
            }
        }
    }
    let vals: Vec<Option<f64>> = pts.par_iter().map(|p| f(p)).collect();
    let vals: Vec<f64> = vals.into_iter().collect::<Option<_>>()?;
    let mut hess = DMatrix::zeros(m, m);
    let mut grad = vec![0.0; m];
    let mut k = 0;
    for i in 0..m {
        grad[i] = (vals[k] - vals[k + 1]) / (2.0 * h);
        hess[(i, i)] = (vals[k] - 2.0 * f0 + vals[k + 1]) / (h * h);
        k += 2;
        for j in 0..i {
            let v = (vals[k] - vals[k + 1] - vals[k + 2] + vals[k + 3]) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
            k += 4;
        }
    }
    Some((grad, hess))
}

/// `(transform, sd, positive definite)` from the Hessian of `log p(ψ|y)`.
fn standardise(hess: Option<DMatrix<f64>>, m: usize) -> (DMatrix<f64>, Vec<f64>, bool) {
    if let Some(h) = &hess {
        let prec = -h;
        let eig = SymmetricEigen::new(prec.clone());
        if eig.eigenvalues.iter().all(|&l| l > 0.0 && l.is_finite()) {
            let mut t = eig.eigenvectors.clone();
            for (c, &l) in eig.eigenvalues.iter().enumerate() {
                t.column_mut(c).scale_mut(1.0 / l.sqrt());
            }
            let sd = (0..m).map(|i| t.row(i).norm_squared().sqrt()).collect();
            return (t, sd, true);
        }
    }
    // axis-aligned steps from whatever curvature is usable
    let curv: Vec<f64> = (0..m)
        .map(|i| {
            let c = hess.as_ref().map_or(f64::NAN, |h| -h[(i, i)]);
            if c > 0.0 && c.is_finite() {
                c
            } else {
                1.0
            }
        })
        .collect();
    let t = DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 / curv[i].sqrt() } else { 0.0 });
    let sd = curv.iter().map(|c| 1.0 / c.sqrt()).collect();
    (t, sd, false)
}

/// Finds the posterior mode of the hyperparameters from `psi0`, builds a
/// standardised grid around it and evaluates the Laplace approximation at
/// every grid point.
pub fn explore_hyper(approx: &Approximator, psi0: &[f64]) -> Result<HyperExploration, InlaError> {
    let m = approx.model().n_hyper();
    if m > MAX_HYPER {
        return Err(InlaError::TooManyHypers(m));
    }
    if psi0.len() != m {
        return Err(crate::model::ModelError::HyperDimension {
            expected: m,
            found: psi0.len(),
        }
        .into());
    }
    if m == 0 {
        let (lp, ga) = approx.log_posterior_hyper(&[], None)?;
        return Ok(HyperExploration {
            mode: vec![],
            log_post_mode: lp,
            transform: DMatrix::zeros(0, 0),
            sd: vec![],
            dz: approx.options().dz,
            hessian_ok: true,
            points: vec![GridPoint {
                index: vec![],
                psi: vec![],
                log_post: lp,
                weight: 1.0,
                approx: ga,
            }],
            failed_points: 0,
            optimizer_evaluations: 1,
        });
    }
    let eval = |psi: &[f64], warm: Option<&GaussianApprox>| -> Option<(f64, GaussianApprox)> {
        let attempt = approx.log_posterior_hyper(psi, warm.map(|g| g.mode.as_slice()));
        let attempt = match (attempt, warm) {
            (Err(_), Some(_)) => approx.log_posterior_hyper(psi, None),
            (r, _) => r,
        };
        attempt.ok().filter(|(lp, _)| lp.is_finite())
    };
    explore(&eval, psi0, approx.options())
}

/// Grid exploration of an arbitrary log density `eval(ψ, warm start)`.
pub fn explore<T, F>(eval: &F, psi0: &[f64], opts: &InlaOptions) -> Result<HyperExploration<T>, InlaError>
where
    T: Clone + Send + Sync,
    F: Fn(&[f64], Option<&T>) -> Option<(f64, T)> + Sync,
{
    let m = psi0.len();
    let (mut mode, evaluations) = optimise(eval, psi0, opts.optimizer_tol, opts.max_optimizer_iters)?;
    let (mut lp_mode, mut at_mode) = eval(&mode, None).ok_or(InlaError::EmptyGrid)?;

    let fd = {
        let lp_only = |psi: &[f64]| eval(psi, Some(&at_mode)).map(|r| r.0);
        fd_hessian(&lp_only, &mode, lp_mode, opts.hessian_step)
    };
    let grad = fd.as_ref().map(|f| f.0.clone());
    let (transform, sd, hessian_ok) = standardise(fd.map(|f| f.1), m);
    if let (true, Some(g)) = (hessian_ok, grad) {
        // one Newton step polishes the simplex optimum
        let zg = transform.transpose() * nalgebra::DVector::from_vec(g);
        if zg.norm() <= 1.0 {
            let step = &transform * zg;
            let cand: Vec<f64> = mode.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            if let Some((lp, t)) = eval(&cand, Some(&at_mode)) {
                if lp >= lp_mode {
                    (mode, lp_mode, at_mode) = (cand, lp, t);
                }
            }
        }
    }
    let from_mode = |psi: &[f64]| eval(psi, Some(&at_mode));

    let psi_at = |index: &[i32]| -> Vec<f64> {
        let mut psi = mode.clone();
        for (c, &k) in index.iter().enumerate() {
            if k != 0 {
                let z = opts.dz * k as f64;
                for (r, p) in psi.iter_mut().enumerate() {
                    *p += transform[(r, c)] * z;
                }
            }
        }
        psi
    };

    let mut cache: BTreeMap<Vec<i32>, Option<(f64, T)>> = BTreeMap::new();
    cache.insert(vec![0; m], Some((lp_mode, at_mode.clone())));

    // axial walks until the density drops far enough below the mode
    let walks: Vec<(usize, i32)> = (0..m).flat_map(|j| [(j, 1), (j, -1)]).collect();
    let walked: Vec<Vec<(Vec<i32>, Option<(f64, T)>)>> = walks
        .par_iter()
        .map(|&(j, dir)| {
            let mut out = Vec::new();
            for k in 1..=opts.max_axial_steps as i32 {
                let mut index = vec![0; m];
                index[j] = dir * k;
                let r = from_mode(&psi_at(&index));
                let stop = r.as_ref().is_none_or(|(lp, _)| lp_mode - lp > opts.drop);
                out.push((index, r));
                if stop {
                    break;
                }
            }
            out
        })
        .collect();
    let mut extent = vec![(0i32, 0i32); m];
    for ((j, dir), walk) in walks.iter().zip(walked) {
        for (index, r) in walk {
            if r.is_some() {
                let e = &mut extent[*j];
                if *dir > 0 {
                    e.1 = e.1.max(index[*j]);
                } else {
                    e.0 = e.0.min(index[*j]);
                }
            }
            cache.insert(index, r);
        }
    }

    let mut wanted: Vec<Vec<i32>> = Vec::new();
    if m <= 2 {
        let mut acc: Vec<Vec<i32>> = vec![vec![]];
        for &(lo, hi) in &extent {
            acc = acc
                .into_iter()
                .flat_map(|p| {
                    (lo..=hi).map(move |k| {
                        let mut q = p.clone();
                        q.push(k);
                        q
                    })
                })
                .collect();
        }
        wanted = acc;
    } else {
        for c in 0..(1u32 << m) {
            wanted.push((0..m).map(|j| if c >> j & 1 == 1 { 1 } else { -1 }).collect());
        }
    }
    let missing: Vec<Vec<i32>> = wanted.into_iter().filter(|i| !cache.contains_key(i)).collect();
    let results: Vec<Option<(f64, T)>> = missing.par_iter().map(|i| from_mode(&psi_at(i))).collect();
    cache.extend(missing.into_iter().zip(results));

    let failed_points = cache.values().filter(|r| r.is_none()).count();
    let valid: Vec<(Vec<i32>, f64, T)> = cache
        .into_iter()
        .filter_map(|(i, r)| r.map(|(lp, t)| (i, lp, t)))
        .collect();
    let max = valid.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = valid.iter().map(|v| (v.1 - max).exp()).sum();
    if !(total > 0.0) {
        return Err(InlaError::EmptyGrid);
    }
    let points = valid
        .into_iter()
        .map(|(index, lp, t)| GridPoint {
            psi: psi_at(&index),
            index,
            log_post: lp,
            weight: (lp - max).exp() / total,
            approx: t,
        })
        .collect();
    Ok(HyperExploration {
        mode,
        log_post_mode: lp_mode,
        transform,
        sd,
        dz: opts.dz,
        hessian_ok,
        points,
        failed_points,
        optimizer_evaluations: evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LatentModel, Likelihood, LogGammaPrior, ObservationRow};

    fn poisson_iid(counts: &[f64]) -> LatentModel {
        let mut m = LatentModel::new(vec!["b0".into()], Likelihood::Poisson);
        let off = m.add_iid("u", counts.len(), LogGammaPrior { shape: 1.0, rate: 0.1 }).unwrap();
        for (i, &y) in counts.iter().enumerate() {
            m.rows.push(ObservationRow {
                y,
                exposure: 1.0,
                terms: vec![(0, 1.0), (off + i, 1.0)],
            });
        }
        m
    }

    #[test]
    fn one_hyper_grid_brackets_the_mode() {
        let m = poisson_iid(&[0.0, 3.0, 1.0, 7.0, 2.0, 4.0, 0.0, 5.0]);
        let a = Approximator::new(&m, InlaOptions::default()).unwrap();
        let ex = explore_hyper(&a, &[0.0]).unwrap();
        assert!(ex.hessian_ok);
        let lo = ex.points.iter().map(|p| p.index[0]).min().unwrap();
        let hi = ex.points.iter().map(|p| p.index[0]).max().unwrap();
        assert!(lo <= -2 && hi >= 2);
        // the mode carries the largest weight
        let best = ex.points.iter().max_by(|a, b| a.weight.total_cmp(&b.weight)).unwrap();
        assert_eq!(best.index, vec![0]);
        assert!((ex.points.iter().map(|p| p.weight).sum::<f64>() - 1.0).abs() < 1e-12);
        // the mode is stationary in ψ
        let f = |d: f64| a.log_posterior_hyper(&[ex.mode[0] + d], None).unwrap().0;
        assert!((f(1e-3) - f(-1e-3)).abs() / 2e-3 < 1e-2);
    }

    #[test]
    fn exploration_is_deterministic() {
        let m = poisson_iid(&[2.0, 0.0, 5.0, 1.0, 3.0]);
        let a = Approximator::new(&m, InlaOptions::default()).unwrap();
        let x = explore_hyper(&a, &[0.0]).unwrap();
        let y = explore_hyper(&a, &[0.0]).unwrap();
        let key = |e: &HyperExploration| -> Vec<(Vec<i32>, u64)> {
            e.points.iter().map(|p| (p.index.clone(), p.weight.to_bits())).collect()
        };
        assert_eq!(key(&x), key(&y));
    }

    #[test]
    fn gaussian_target_grid_and_mean() {
        // log density of N(μ, Σ) with correlated coordinates
        let mu = [0.4, -1.0];
        let p = [[2.0, 0.6], [0.6, 1.0]];
        let f = |x: &[f64], _: Option<&()>| {
            let d = [x[0] - mu[0], x[1] - mu[1]];
            let q = p[0][0] * d[0] * d[0] + 2.0 * p[0][1] * d[0] * d[1] + p[1][1] * d[1] * d[1];
            Some((-0.5 * q, ()))
        };
        let ex = explore(&f, &[0.0, 0.0], &InlaOptions::default()).unwrap();
        assert!(ex.hessian_ok);
        for j in 0..2 {
            let lo = ex.points.iter().map(|p| p.index[j]).min().unwrap();
            let hi = ex.points.iter().map(|p| p.index[j]).max().unwrap();
            // axial drop of z²/2 first exceeds 2.5 at z = 3
            assert_eq!((lo, hi), (-3, 3));
        }
        assert_eq!(ex.points.len(), 49);
        for j in 0..2 {
            let mean: f64 = ex.points.iter().map(|p| p.weight * p.psi[j]).sum();
            assert!((mean - mu[j]).abs() < 1e-3);
        }
        // symmetric density, symmetric weights
        for p in &ex.points {
            let mirror: Vec<i32> = p.index.iter().map(|i| -i).collect();
            let q = ex.points.iter().find(|q| q.index == mirror).unwrap();
            assert!((p.weight - q.weight).abs() < 1e-9);
        }
    }

    #[test]
    fn four_hypers_use_axes_and_corners() {
        let f = |x: &[f64], _: Option<&()>| Some((-0.5 * x.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>(), ()));
        let ex = explore(&f, &[0.0; 4], &InlaOptions::default()).unwrap();
        // mode, 4 axes × 6 steps, 16 corners
        assert_eq!(ex.points.len(), 1 + 24 + 16);
    }

    #[test]
    fn too_many_hypers_rejected() {
        let mut m = LatentModel::new(vec![], Likelihood::Poisson);
        for k in 0..5 {
            m.add_iid(&format!("u{k}"), 1, LogGammaPrior::default()).unwrap();
        }
        let a = Approximator::new(&m, InlaOptions::default()).unwrap();
        assert_eq!(explore_hyper(&a, &[0.0; 5]).unwrap_err(), InlaError::TooManyHypers(5));
    }
}
