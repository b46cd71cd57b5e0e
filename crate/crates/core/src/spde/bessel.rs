//! Modified Bessel function of the second kind, K_ν(x), for real ν ≥ 0 and
//! x > 0.
//!
//! The order is split as ν = n + μ with |μ| ≤ 1/2. K_μ and K_{μ+1} come from
//! Temme's series when x < 2 and from Steed's continued fraction (CF2) when
//! x ≥ 2; K_ν then follows by the stable upward recurrence
//! K_{μ+k+1} = K_{μ+k-1} + 2(μ+k)/x · K_{μ+k}.

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

const EPS: f64 = 1e-16;
const MAX_TERMS: usize = 10_000;
const EULER: f64 = 0.577_215_664_901_532_9;

/// K_ν(x). Returns `+∞` at x = 0 and NaN for negative or non-finite input.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    if !(nu >= 0.0) || !(x >= 0.0) || !nu.is_finite() || x.is_nan() {
        return f64::NAN;
    }
    if x == 0.0 {
        return f64::INFINITY;
    }
    if x.is_infinite() {
        return 0.0;
    }
    let n = (nu + 0.5).floor();
    let mu = nu - n;
    let (mut k_mu, mut k_mu1) = if x < 2.0 { temme(mu, x) } else { steed(mu, x) };
    let two_over_x = 2.0 / x;
    for i in 1..=(n as usize) {
        let next = (mu + i as f64) * two_over_x * k_mu1 + k_mu;
        k_mu = k_mu1;
        k_mu1 = next;
    }
    k_mu
}

/// `Γ₁(μ) = (1/Γ(1-μ) - 1/Γ(1+μ)) / (2μ)` and `Γ₂(μ) = (1/Γ(1-μ) + 1/Γ(1+μ)) / 2`,
/// plus the two reciprocal gammas.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    let gam_plus = 1.0 / gamma(1.0 + mu);
    let gam_minus = 1.0 / gamma(1.0 - mu);
    let gam1 = if mu.abs() < 1e-6 {
        // the difference quotient cancels; its error is O(μ²)
        -EULER
    } else {
        (gam_minus - gam_plus) / (2.0 * mu)
    };
    let gam2 = 0.5 * (gam_minus + gam_plus);
    (gam1, gam2, gam_plus, gam_minus)
}

/// Series for (K_μ, K_{μ+1}) at small argument.
fn temme(mu: f64, x: f64) -> (f64, f64) {
    let half_x = 0.5 * x;
    let pimu = PI * mu;
    let fact = if pimu.abs() < EPS { 1.0 } else { pimu / pimu.sin() };
    let d = -half_x.ln();
    let e = mu * d;
    let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
    let (gam1, gam2, gam_plus, gam_minus) = temme_gammas(mu);
    // f_0, p_0, q_0 of the recurrences
    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let e = e.exp();
    let mut p = 0.5 * e / gam_plus;
    let mut q = 0.5 / (e * gam_minus);
    let mut c = 1.0;
    let d = half_x * half_x;
    let mut sum1 = p;
    let mu2 = mu * mu;
    for i in 1..=MAX_TERMS {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - mu2);
        c *= d / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        sum1 += c * (p - fi * ff);
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    (sum, sum1 * 2.0 / x)
}

/// Steed's continued fraction for (K_μ, K_{μ+1}) at x ≥ 2.
fn steed(mu: f64, x: f64) -> (f64, f64) {
    let mu2 = mu * mu;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = d;
    let (mut q1, mut q2) = (0.0, 1.0);
    let a1 = 0.25 - mu2;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 1..=MAX_TERMS {
        let fi = i as f64;
        a -= 2.0 * fi;
        c = -a * c / (fi + 1.0);
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            break;
        }
    }
    h *= a1;
    let k_mu = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    let k_mu1 = k_mu * (mu + x + 0.5 - h) / x;
    (k_mu, k_mu1)
}
