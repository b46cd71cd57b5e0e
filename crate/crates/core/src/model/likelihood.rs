use statrs::function::gamma::ln_gamma;

use super::ModelError;

/// Observation family; the link is always log for Poisson and identity
/// for the Gaussian case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Likelihood {
    /// `y ~ Poisson(E exp(η))`.
    Poisson,
    /// `y ~ N(η, 1/precision)` with known precision.
    Gaussian { precision: f64 },
}

/// Value, gradient and negative curvature of a log-likelihood in `η`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLik {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub curvature: Vec<f64>,
}

/// `Σ [y η − E e^η]` without the data-only constant. Rows with `E = 0`
/// contribute `y η`.
pub fn poisson_loglik(y: &[f64], eta: &[f64], exposure: &[f64]) -> Result<LogLik, ModelError> {
    assert!(y.len() == eta.len() && y.len() == exposure.len(), "length mismatch");
    let mut out = LogLik {
        value: 0.0,
        gradient: Vec::with_capacity(y.len()),
        curvature: Vec::with_capacity(y.len()),
    };
    for i in 0..y.len() {
        if !(y[i] >= 0.0) {
            return Err(ModelError::NegativeCount(i));
        }
        let mu = if exposure[i] == 0.0 { 0.0 } else { exposure[i] * eta[i].exp() };
        out.value += y[i] * eta[i] - mu;
        out.gradient.push(y[i] - mu);
        out.curvature.push(mu);
    }
    Ok(out)
}

/// `Σ −½ p (y − η)²` without the constant.
pub fn gaussian_loglik(y: &[f64], eta: &[f64], precision: f64) -> LogLik {
    assert_eq!(y.len(), eta.len(), "length mismatch");
    let mut out = LogLik {
        value: 0.0,
        gradient: Vec::with_capacity(y.len()),
        curvature: vec![precision; y.len()],
    };
    for (yi, ei) in y.iter().zip(eta) {
        let r = yi - ei;
        out.value -= 0.5 * precision * r * r;
        out.gradient.push(precision * r);
    }
    out
}

impl Likelihood {
    pub fn evaluate(&self, y: &[f64], eta: &[f64], exposure: &[f64]) -> Result<LogLik, ModelError> {
        match *self {
            Likelihood::Poisson => poisson_loglik(y, eta, exposure),
            Likelihood::Gaussian { precision } => Ok(gaussian_loglik(y, eta, precision)),
        }
    }

    /// The constant dropped by [`Likelihood::evaluate`] for one row.
    pub fn constant(&self, y: f64, exposure: f64) -> f64 {
        match *self {
            Likelihood::Poisson => {
                let log_e = if y > 0.0 && exposure > 0.0 { y * exposure.ln() } else { 0.0 };
                log_e - ln_gamma(y + 1.0)
            }
            Likelihood::Gaussian { precision } => 0.5 * (precision / (2.0 * std::f64::consts::PI)).ln(),
        }
    }

    /// Full log density of one observation.
    pub fn log_density(&self, y: f64, eta: f64, exposure: f64) -> f64 {
        let kernel = match *self {
            Likelihood::Poisson => {
                let mu = if exposure == 0.0 { 0.0 } else { exposure * eta.exp() };
                y * eta - mu
            }
            Likelihood::Gaussian { precision } => -0.5 * precision * (y - eta) * (y - eta),
        };
        kernel + self.constant(y, exposure)
    }
}
