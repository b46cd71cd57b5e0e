//! Univariate posterior marginals: Gaussian mixtures, tabulated densities,
//! and monotone exponential transforms of either.

use std::f64::consts::{PI, SQRT_2};

use statrs::function::erf::erfc;

const QUANTILE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    pub mode: f64,
}

/// One mixture component: weight, mean, standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Marginal {
    /// Weights sum to one; a zero sd is a point mass at the mean.
    Mixture(Vec<Component>),
    /// Density tabulated on an increasing grid, normalised by the trapezoid rule.
    Grid { x: Vec<f64>, density: Vec<f64> },
    /// `y = exp(scale · x)` with `x` distributed as `base`; `scale ≠ 0`.
    Exp { base: Box<Marginal>, scale: f64 },
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

impl Marginal {
    pub fn gaussian(mean: f64, sd: f64) -> Self {
        Marginal::Mixture(vec![Component { weight: 1.0, mean, sd }])
    }

    /// Mixture from unnormalised weights; zero-weight components are dropped.
    pub fn mixture(components: impl IntoIterator<Item = (f64, f64, f64)>) -> Self {
        let comps: Vec<Component> = components
            .into_iter()
            .filter(|c| c.0 > 0.0)
            .map(|(weight, mean, sd)| Component { weight, mean, sd })
            .collect();
        let total: f64 = comps.iter().map(|c| c.weight).sum();
        assert!(total > 0.0 && total.is_finite(), "mixture needs positive total weight");
        Marginal::Mixture(
            comps
                .into_iter()
                .map(|c| Component {
                    weight: c.weight / total,
                    ..c
                })
                .collect(),
        )
    }

    /// Tabulated density; `density` is renormalised to integrate to one.
    pub fn grid(x: Vec<f64>, density: Vec<f64>) -> Self {
        assert!(x.len() >= 2 && x.len() == density.len(), "grid needs matching x and density");
        assert!(x.windows(2).all(|w| w[1] > w[0]), "grid must be increasing");
        let z = trapezoid(&x, &density);
        assert!(z > 0.0 && z.is_finite(), "grid density must have positive mass");
        Marginal::Grid {
            density: density.iter().map(|d| d / z).collect(),
            x,
        }
    }

    pub fn exp(self, scale: f64) -> Self {
        assert!(scale != 0.0 && scale.is_finite(), "transform scale must be non-zero");
        Marginal::Exp {
            base: Box::new(self),
            scale,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Marginal::Mixture(c) => c.iter().map(|c| c.weight * c.mean).sum(),
            Marginal::Grid { x, density } => {
                let f: Vec<f64> = x.iter().zip(density).map(|(x, d)| x * d).collect();
                trapezoid(x, &f)
            }
            Marginal::Exp { base, scale } => base.exp_moment(*scale),
        }
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let v = match self {
            Marginal::Mixture(c) => c
                .iter()
                .map(|c| c.weight * (c.sd * c.sd + (c.mean - m) * (c.mean - m)))
                .sum(),
            Marginal::Grid { x, density } => {
                let f: Vec<f64> = x.iter().zip(density).map(|(x, d)| (x - m) * (x - m) * d).collect();
                trapezoid(x, &f)
            }
            Marginal::Exp { base, scale } => base.exp_moment(2.0 * scale) - m * m,
        };
        v.max(0.0)
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    /// `E[exp(s X)]`.
    fn exp_moment(&self, s: f64) -> f64 {
        match self {
            Marginal::Mixture(c) => c
                .iter()
                .map(|c| c.weight * (s * c.mean + 0.5 * s * s * c.sd * c.sd).exp())
                .sum(),
            Marginal::Grid { x, density } => {
                let f: Vec<f64> = x.iter().zip(density).map(|(x, d)| (s * x).exp() * d).collect();
                trapezoid(x, &f)
            }
            Marginal::Exp { base, scale } => {
                // E[exp(s·exp(a X))] has no closed form; integrate on base quantiles
                let a = *scale;
                let n = 2000;
                (0..n)
                    .map(|i| {
                        let p = (i as f64 + 0.5) / n as f64;
                        (s * (a * base.quantile(p)).exp()).exp()
                    })
                    .sum::<f64>()
                    / n as f64
            }
        }
    }

    pub fn pdf(&self, v: f64) -> f64 {
        match self {
            Marginal::Mixture(c) => c
                .iter()
                .map(|c| {
                    if c.sd > 0.0 {
                        c.weight * normal_pdf((v - c.mean) / c.sd) / c.sd
                    } else if v == c.mean {
                        f64::INFINITY
                    } else {
                        0.0
                    }
                })
                .sum(),
            Marginal::Grid { x, density } => interpolate(x, density, v),
            Marginal::Exp { base, scale } => {
                if v <= 0.0 {
                    return 0.0;
                }
                let u = v.ln() / scale;
                base.pdf(u) / (scale.abs() * v)
            }
        }
    }

    pub fn cdf(&self, v: f64) -> f64 {
        match self {
            Marginal::Mixture(c) => c
                .iter()
                .map(|c| {
                    let p = if c.sd > 0.0 {
                        normal_cdf((v - c.mean) / c.sd)
                    } else if v >= c.mean {
                        1.0
                    } else {
                        0.0
                    };
                    c.weight * p
                })
                .sum::<f64>()
                .min(1.0),
            Marginal::Grid { x, density } => grid_cdf(x, density, v),
            Marginal::Exp { base, scale } => {
                if v <= 0.0 {
                    return 0.0;
                }
                let u = v.ln() / scale;
                if *scale > 0.0 {
                    base.cdf(u)
                } else {
                    1.0 - base.cdf(u)
                }
            }
        }
    }

    /// Inverse CDF by bisection, to well below 1e-8 in x.
    pub fn quantile(&self, p: f64) -> f64 {
        assert!((0.0..=1.0).contains(&p), "probability out of range");
        match self {
            Marginal::Exp { base, scale } => {
                let q = if *scale > 0.0 { base.quantile(p) } else { base.quantile(1.0 - p) };
                (scale * q).exp()
            }
            Marginal::Mixture(c) if c.len() == 1 && c[0].sd == 0.0 => c[0].mean,
            _ => {
                let (mut lo, mut hi) = self.bracket();
                let tol = QUANTILE_TOL * (1.0 + lo.abs().max(hi.abs()));
                while hi - lo > tol {
                    let mid = 0.5 * (lo + hi);
                    if self.cdf(mid) < p {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    fn bracket(&self) -> (f64, f64) {
        match self {
            Marginal::Mixture(c) => {
                let lo = c.iter().map(|c| c.mean - 40.0 * c.sd).fold(f64::INFINITY, f64::min);
                let hi = c.iter().map(|c| c.mean + 40.0 * c.sd).fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
            Marginal::Grid { x, .. } => (x[0], x[x.len() - 1]),
            Marginal::Exp { .. } => unreachable!("exp quantiles map the base quantile"),
        }
    }

    /// Mode of the density: a 2001-point scan over the central mass, refined
    /// by golden-section search.
    pub fn mode(&self) -> f64 {
        match self {
            Marginal::Mixture(c) if c.len() == 1 => c[0].mean,
            Marginal::Mixture(c) if c.iter().any(|c| c.sd == 0.0) => {
                // a point mass dominates any density
                c.iter()
                    .filter(|c| c.sd == 0.0)
                    .max_by(|a, b| a.weight.total_cmp(&b.weight))
                    .unwrap()
                    .mean
            }
            Marginal::Grid { x, density } => {
                let k = (0..x.len()).max_by(|&a, &b| density[a].total_cmp(&density[b]).then(b.cmp(&a))).unwrap();
                x[k]
            }
            _ => {
                let (lo, hi) = (self.quantile(1e-6), self.quantile(1.0 - 1e-6));
                let n = 2000;
                let step = (hi - lo) / n as f64;
                let mut best = 0;
                let mut best_val = f64::NEG_INFINITY;
                for i in 0..=n {
                    let d = self.pdf(lo + i as f64 * step);
                    if d > best_val {
                        best_val = d;
                        best = i;
                    }
                }
                let a = lo + (best as f64 - 1.0).max(0.0) * step;
                let b = lo + (best as f64 + 1.0).min(n as f64) * step;
                golden_max(|v| self.pdf(v), a, b)
            }
        }
    }

    pub fn summary(&self) -> Summary {
        Summary {
            mean: self.mean(),
            sd: self.sd(),
            q025: self.quantile(0.025),
            q50: self.quantile(0.5),
            q975: self.quantile(0.975),
            mode: self.mode(),
        }
    }

    /// `n` (x, density) pairs for plotting: mean ± 5 sd on the internal
    /// scale, mapped through the transform for `Exp` marginals.
    pub fn curve(&self, n: usize) -> Vec<(f64, f64)> {
        assert!(n >= 2, "curve needs at least two points");
        match self {
            Marginal::Exp { base, scale } => {
                let mut pts: Vec<(f64, f64)> = base
                    .curve(n)
                    .into_iter()
                    .map(|(u, _)| {
                        let y = (scale * u).exp();
                        (y, self.pdf(y))
                    })
                    .collect();
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                pts
            }
            Marginal::Grid { .. } | Marginal::Mixture(_) => {
                let (m, s) = (self.mean(), self.sd());
                let (lo, hi) = if s > 0.0 { (m - 5.0 * s, m + 5.0 * s) } else { (m - 1.0, m + 1.0) };
                (0..n)
                    .map(|i| {
                        let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                        (x, self.pdf(x))
                    })
                    .collect()
            }
        }
    }
}

fn trapezoid(x: &[f64], f: &[f64]) -> f64 {
    x.windows(2).zip(f.windows(2)).map(|(x, f)| 0.5 * (x[1] - x[0]) * (f[0] + f[1])).sum()
}

fn interpolate(x: &[f64], f: &[f64], v: f64) -> f64 {
    if v < x[0] || v > x[x.len() - 1] {
        return 0.0;
    }
    let k = x.partition_point(|&xi| xi <= v).clamp(1, x.len() - 1);
    let t = (v - x[k - 1]) / (x[k] - x[k - 1]);
    f[k - 1] + t * (f[k] - f[k - 1])
}

fn grid_cdf(x: &[f64], f: &[f64], v: f64) -> f64 {
    if v <= x[0] {
        return 0.0;
    }
    if v >= x[x.len() - 1] {
        return 1.0;
    }
    let mut acc = 0.0;
    for k in 1..x.len() {
        if x[k] <= v {
            acc += 0.5 * (x[k] - x[k - 1]) * (f[k - 1] + f[k]);
        } else {
            let fv = interpolate(x, f, v);
            acc += 0.5 * (v - x[k - 1]) * (f[k - 1] + fv);
            break;
        }
    }
    acc.min(1.0)
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
