use nalgebra::{DMatrix, DVector};

use super::{CholFactor, GmrfError};

/// Linear equality constraints `A x = e`, one sparse row per constraint.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearConstraints {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
}

impl LinearConstraints {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push(row);
        self.rhs.push(rhs);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `A x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|&(j, a)| a * x[j]).sum()).collect()
    }

    /// `A x − e`.
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        self.apply(x).iter().zip(&self.rhs).map(|(a, e)| a - e).collect()
    }

    fn dense_row(&self, i: usize, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        for &(j, a) in &self.rows[i] {
            v[j] += a;
        }
        v
    }

    /// `log|A A'|`, the Jacobian term for densities on the constraint surface.
    pub fn log_det_gram(&self) -> f64 {
        let k = self.len();
        if k == 0 {
            return 0.0;
        }
        let mut g = DMatrix::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                let mut s = 0.0;
                for &(j, va) in &self.rows[a] {
                    for &(l, vb) in &self.rows[b] {
                        if j == l {
                            s += va * vb;
                        }
                    }
                }
                g[(a, b)] = s;
            }
        }
        g.cholesky().map_or(f64::NAN, |c| 2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
    }
}

/// Conditioning by kriging for `x ~ N(μ, Q^{-1})` given `A x = e`.
///
/// Holds `W = Q^{-1} A'` and the factor of `S = A Q^{-1} A'`, so corrections of
/// means, samples and variances share one set of solves.
#[derive(Debug, Clone)]
pub struct KrigingCorrection {
    constraints: LinearConstraints,
    // w[c] = Q^{-1} a_c
    w: Vec<Vec<f64>>,
    s_inv: DMatrix<f64>,
    log_det_s: f64,
}

impl KrigingCorrection {
    pub fn new(factor: &CholFactor, constraints: &LinearConstraints) -> Result<Self, GmrfError> {
        let n = factor.n();
        let k = constraints.len();
        let mut w = Vec::with_capacity(k);
        for c in 0..k {
            w.push(factor.solve(&constraints.dense_row(c, n))?);
        }
        let mut s = DMatrix::zeros(k, k);
        for a in 0..k {
            let wa = constraints.apply(&w[a]);
            for b in 0..k {
                s[(b, a)] = wa[b];
            }
        }
        let s = (&s + s.transpose()) * 0.5;
        let chol = s.clone().cholesky().ok_or(GmrfError::SingularConstraint)?;
        let log_det_s = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let max_diag = s.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if chol.l().diagonal().iter().any(|&d| d * d <= 1e-12 * max_diag) {
            return Err(GmrfError::SingularConstraint);
        }
        Ok(Self {
            constraints: constraints.clone(),
            w,
            s_inv: chol.inverse(),
            log_det_s,
        })
    }

    pub fn constraints(&self) -> &LinearConstraints {
        &self.constraints
    }

    /// `log|A Q^{-1} A'|`.
    pub fn log_det_s(&self) -> f64 {
        self.log_det_s
    }

    /// `x ← x − W S^{-1} (A x − rhs)`.
    pub fn correct_with_rhs(&self, x: &mut [f64], rhs: &[f64]) {
        if self.w.is_empty() {
            return;
        }
        let r: Vec<f64> = self.constraints.apply(x).iter().zip(rhs).map(|(a, e)| a - e).collect();
        let lambda = &self.s_inv * DVector::from_vec(r);
        for (c, wc) in self.w.iter().enumerate() {
            let l = lambda[c];
            for (xi, wi) in x.iter_mut().zip(wc) {
                *xi -= wi * l;
            }
        }
    }

    pub fn correct(&self, x: &mut [f64]) {
        let rhs = self.constraints.rhs.clone();
        self.correct_with_rhs(x, &rhs);
    }

    /// `diag(W S^{-1} W')`, subtracted from `diag(Q^{-1})` by the constraint.
    pub fn variance_reduction(&self) -> Vec<f64> {
        let n = self.w.first().map_or(0, |w| w.len());
        (0..n).map(|i| self.quadratic_in_w(|c| self.w[c][i])).collect()
    }

    /// Reduction of `Var(b'x)` for a sparse combination `b`.
    pub fn combination_reduction(&self, b: &[(usize, f64)]) -> f64 {
        self.quadratic_in_w(|c| b.iter().map(|&(j, v)| v * self.w[c][j]).sum())
    }

    fn quadratic_in_w(&self, coord: impl Fn(usize) -> f64) -> f64 {
        let k = self.w.len();
        let u: Vec<f64> = (0..k).map(&coord).collect();
        let mut acc = 0.0;
        for a in 0..k {
            for b in 0..k {
                acc += u[a] * self.s_inv[(a, b)] * u[b];
            }
        }
        acc
    }
}

/// Corrected mean and marginal variances of a constrained Gaussian.
#[derive(Debug, Clone)]
pub struct ConstrainedMoments {
    pub mean: Vec<f64>,
    pub variance_reduction: Vec<f64>,
    pub variances: Vec<f64>,
}

/// Conditions `N(mean, Q^{-1})` on `A x = e`, with `Q` given by its factor.
pub fn constrain(
    factor: &CholFactor,
    mean: &[f64],
    constraints: &LinearConstraints,
) -> Result<ConstrainedMoments, GmrfError> {
    if mean.len() != factor.n() {
        return Err(GmrfError::DimensionMismatch {
            expected: factor.n(),
            found: mean.len(),
        });
    }
    let kc = KrigingCorrection::new(factor, constraints)?;
    let mut m = mean.to_vec();
    kc.correct(&mut m);
    let red = kc.variance_reduction();
    let variances = factor
        .marginal_variances()
        .iter()
        .zip(&red)
        .map(|(v, r)| (v - r).max(0.0))
        .collect();
    Ok(ConstrainedMoments {
        mean: m,
        variance_reduction: red,
        variances,
    })
}
