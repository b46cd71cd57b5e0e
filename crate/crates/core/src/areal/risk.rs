use crate::marginal::Marginal;

use super::ArealError;

/// Internally standardised expected counts `E_i = pop_i · Σy / Σpop`, or
/// all ones without a population.
pub fn expected_counts(counts: &[u64], population: Option<&[f64]>) -> Result<Vec<f64>, ArealError> {
    let Some(pop) = population else {
        return Ok(vec![1.0; counts.len()]);
    };
    if pop.len() != counts.len() {
        return Err(ArealError::LengthMismatch(pop.len(), counts.len()));
    }
    if let Some(i) = pop.iter().position(|&p| !(p >= 0.0 && p.is_finite())) {
        return Err(ArealError::InvalidPopulation(i));
    }
    let total_pop: f64 = pop.iter().sum();
    if !(total_pop > 0.0) {
        return Err(ArealError::ZeroPopulation);
    }
    let total_y: f64 = counts.iter().map(|&y| y as f64).sum();
    Ok(pop.iter().map(|p| p * total_y / total_pop).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeRisk {
    /// Posterior mean of `exp(u)`.
    pub mean: f64,
    pub q025: f64,
    pub q975: f64,
    /// `exp` of the posterior mean of `u`, for comparison.
    pub exp_of_mean: f64,
}

/// Relative risk `ζ = exp(u)` from the marginal of the combined area effect.
pub fn relative_risk(u: &Marginal) -> RelativeRisk {
    let zeta = u.clone().exp(1.0);
    RelativeRisk {
        mean: zeta.mean(),
        q025: zeta.quantile(0.025),
        q975: zeta.quantile(0.975),
        exp_of_mean: u.mean().exp(),
    }
}

/// Share of variance carried by the structured effect:
/// `s²_v / (s²_v + σ²_ν)` with `s²_v` the sample variance of the posterior
/// means of `v`.
pub fn variance_fraction(v_means: &[f64], sigma2_nu: f64) -> f64 {
    let n = v_means.len();
    assert!(n >= 2, "need at least two regions");
    let mean = v_means.iter().sum::<f64>() / n as f64;
    let s2 = v_means.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    if s2 + sigma2_nu <= 0.0 {
        return 0.0;
    }
    s2 / (s2 + sigma2_nu)
}
