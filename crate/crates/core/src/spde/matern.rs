use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

use super::bessel::bessel_k;

/// Matérn parameters in two dimensions. The range is always derived from
/// κ as `r = √(8ν)/κ`, so the two cannot drift apart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaternParams {
    pub nu: f64,
    pub kappa: f64,
    pub sigma: f64,
}

impl MaternParams {
    pub fn new(nu: f64, kappa: f64, sigma: f64) -> Self {
        assert!(nu > 0.0 && kappa > 0.0 && sigma > 0.0, "Matérn parameters must be positive");
        Self { nu, kappa, sigma }
    }

    pub fn from_range(nu: f64, range: f64, sigma: f64) -> Self {
        Self::new(nu, (8.0 * nu).sqrt() / range, sigma)
    }

    /// From the SPDE scale pair, using `σ² = 1 / (4π ν κ^{2ν} τ²)`.
    pub fn from_kappa_tau(nu: f64, kappa: f64, tau: f64) -> Self {
        let var = 1.0 / (4.0 * PI * nu * kappa.powf(2.0 * nu) * tau * tau);
        Self::new(nu, kappa, var.sqrt())
    }

    pub fn range(&self) -> f64 {
        (8.0 * self.nu).sqrt() / self.kappa
    }

    pub fn tau(&self) -> f64 {
        1.0 / (self.sigma * (4.0 * PI * self.nu).sqrt() * self.kappa.powf(self.nu))
    }

    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }
}

/// Matérn covariance at distance `delta`.
pub fn matern_cov(delta: f64, params: MaternParams) -> f64 {
    params.variance() * matern_corr(delta, params.nu, params.kappa)
}

/// `(κΔ)^ν K_ν(κΔ) / (Γ(ν) 2^{ν-1})`, equal to 1 at Δ = 0.
pub fn matern_corr(delta: f64, nu: f64, kappa: f64) -> f64 {
    assert!(delta >= 0.0, "distance must be non-negative");
    let x = kappa * delta;
    if x == 0.0 {
        return 1.0;
    }
    let k = bessel_k(nu, x);
    if k == 0.0 {
        return 0.0;
    }
    let log = nu * x.ln() + k.ln() - ln_gamma(nu) - (nu - 1.0) * std::f64::consts::LN_2;
    // tiny arguments can round a hair above the limit
    log.exp().min(1.0)
}
