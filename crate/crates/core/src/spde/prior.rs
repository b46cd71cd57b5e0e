use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PriorError {
    #[error("{name} must lie in (0, 1), got {value}")]
    Probability { name: &'static str, value: f64 },
    #[error("{name} must be positive, got {value}")]
    Scale { name: &'static str, value: f64 },
}

/// Penalised-complexity prior on the Matérn range and marginal sd, set by
/// the tail statements `P(r < r0) = p_r` and `P(σ > σ0) = p_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PCPrior {
    pub r0: f64,
    pub p_r: f64,
    pub sigma0: f64,
    pub p_s: f64,
}

impl PCPrior {
    pub fn new(r0: f64, p_r: f64, sigma0: f64, p_s: f64) -> Result<Self, PriorError> {
        for (name, value) in [("p_r", p_r), ("p_s", p_s)] {
            if !(value > 0.0 && value < 1.0) {
                return Err(PriorError::Probability { name, value });
            }
        }
        for (name, value) in [("r0", r0), ("sigma0", sigma0)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(PriorError::Scale { name, value });
            }
        }
        Ok(Self { r0, p_r, sigma0, p_s })
    }

    pub fn lambda_r(&self) -> f64 {
        -self.r0 * self.p_r.ln()
    }

    pub fn lambda_sigma(&self) -> f64 {
        -self.p_s.ln() / self.sigma0
    }

    /// Joint log density of `(r, σ)` on the natural scale.
    pub fn log_density(&self, range: f64, sigma: f64) -> f64 {
        let (lr, ls) = (self.lambda_r(), self.lambda_sigma());
        lr.ln() - 2.0 * range.ln() - lr / range + ls.ln() - ls * sigma
    }

    /// Log density on `(log r, log σ)`. The map from there to
    /// `(log κ, log τ)` is linear with unit absolute determinant, so this is
    /// also the density in the SPDE scale.
    pub fn log_density_internal(&self, log_range: f64, log_sigma: f64) -> f64 {
        self.log_density(log_range.exp(), log_sigma.exp()) + log_range + log_sigma
    }
}

/// PC log prior of Matérn parameters, expressed in the internal scale.
pub fn pc_log_prior(params: super::MaternParams, prior: &PCPrior) -> f64 {
    prior.log_density_internal(params.range().ln(), params.sigma.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> PCPrior {
        PCPrior::new(0.05, 0.01, 1.0, 0.01).unwrap()
    }

    #[test]
    fn rates() {
        let p = settings();
        assert!((p.lambda_sigma() - 4.605170185988091).abs() < 1e-12);
        assert!((p.lambda_r() - 0.23025850929940458).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_settings() {
        assert!(PCPrior::new(0.05, 1.0, 1.0, 0.01).is_err());
        assert!(PCPrior::new(0.05, 0.01, 0.0, 0.01).is_err());
    }

    /// Composite Simpson on `[a, b]` with `n` (even) panels.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn tail_probabilities_by_quadrature() {
        let p = settings();
        // marginal of log r: the σ factor integrates to one
        let range_mass = simpson(
            |u| {
                let r = u.exp();
                (p.lambda_r().ln() - 2.0 * u - p.lambda_r() / r).exp() * r
            },
            -12.0,
            0.05f64.ln(),
            20_000,
        );
        assert!((range_mass - 0.01).abs() < 1e-6);
        let sigma_tail = simpson(|s| p.lambda_sigma() * (-p.lambda_sigma() * s).exp(), 1.0, 40.0, 20_000);
        assert!((sigma_tail - 0.01).abs() < 1e-6);
    }

    #[test]
    fn internal_density_is_proper() {
        let p = settings();
        // 2-D trapezoid over (log r, log σ)
        let (lo_r, hi_r, lo_s, hi_s, n) = (-10.0, 16.0, -22.0, 4.0, 1300);
        let (hr, hs) = ((hi_r - lo_r) / n as f64, (hi_s - lo_s) / n as f64);
        let mut total = 0.0;
        for i in 0..=n {
            let wi = if i == 0 || i == n { 0.5 } else { 1.0 };
            let u = lo_r + i as f64 * hr;
            for j in 0..=n {
                let wj = if j == 0 || j == n { 0.5 } else { 1.0 };
                total += wi * wj * p.log_density_internal(u, lo_s + j as f64 * hs).exp();
            }
        }
        total *= hr * hs;
        assert!((total - 1.0).abs() < 1e-4, "{total}");
    }
}
