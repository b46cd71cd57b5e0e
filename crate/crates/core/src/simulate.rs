//! Seeded synthetic data: log-Gaussian Cox process points by thinning and
//! areal counts with BYM effects.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use thiserror::Error;

use crate::areal::{icar_structure, sum_to_zero_constraints, AdjacencyGraph, ArealError};
use crate::geometry::{Point, Polygon};
use crate::mesh::{fem_matrices, MeshError, TriMesh};
use crate::sparse::{cholesky, GmrfError, KrigingCorrection, SparseSymMatrix};
use crate::spde::{MaternParams, SpdeError, SpdeOperator};

/// Multiplier on the per-triangle vertex maximum of `λ`, covering covariates
/// that are not linear inside a triangle.
pub const SAFETY: f64 = 1.2;
/// Ridge added to the ICAR structure before conditioning on the constraints.
pub const ICAR_RIDGE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulateError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Spde(#[from] SpdeError),
    #[error(transparent)]
    Gmrf(#[from] GmrfError),
    #[error(transparent)]
    Areal(#[from] ArealError),
    #[error("expected counts must be positive and finite (region {0})")]
    BadExpected(usize),
    #[error("{0} must be positive")]
    BadParameter(&'static str),
}

pub type Covariate<'a> = &'a (dyn Fn(Point) -> f64 + Sync);

/// `log λ(s) = β₀ + Σ β_j x_j(s) + u(s)`, with `u` the SPDE field on the mesh.
pub struct LgcpTruth<'a> {
    pub intercept: f64,
    pub covariates: Vec<(f64, Covariate<'a>)>,
    pub field: Option<MaternParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LgcpSimulation {
    pub points: Vec<Point>,
    /// Field values at the mesh vertices; zeros without a field.
    pub field: Vec<f64>,
    pub candidates: usize,
    /// Accepted candidates whose intensity exceeded the triangle bound.
    pub bound_violations: usize,
}

/// Draws a zero-mean GMRF sample `Q^{-1/2} z`.
fn gmrf_draw(q: &SparseSymMatrix, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, GmrfError> {
    let f = cholesky(q)?;
    let z: Vec<f64> = (0..q.n()).map(|_| rng.sample(StandardNormal)).collect();
    f.solve_lt(&z)
}

/// Simulates a Cox process on `window` given the latent truth. The mesh
/// must cover the window.
pub fn simulate_lgcp(mesh: &TriMesh, window: &Polygon, truth: &LgcpTruth, seed: u64) -> Result<LgcpSimulation, SimulateError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let field = match truth.field {
        Some(p) => {
            let op = SpdeOperator::from_fem(&fem_matrices(mesh)?)?;
            gmrf_draw(&op.precision(p.kappa, p.tau())?, &mut rng)?
        }
        None => vec![0.0; mesh.n_vertices()],
    };
    let log_lambda = |s: Point| -> f64 {
        truth.intercept + truth.covariates.iter().map(|(b, x)| b * x(s)).sum::<f64>()
    };
    let vertex_eta: Vec<f64> = mesh
        .vertices()
        .iter()
        .zip(&field)
        .map(|(&v, u)| log_lambda(v) + u)
        .collect();

    let mut points = Vec::new();
    let (mut candidates, mut bound_violations) = (0, 0);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let bound = SAFETY * tri.iter().map(|&v| vertex_eta[v]).fold(f64::NEG_INFINITY, f64::max).exp();
        let mean = bound * mesh.triangle_area(t);
        if !(mean > 0.0) {
            continue;
        }
        let n = Poisson::new(mean).map_err(|_| SimulateError::BadParameter("intensity"))?.sample(&mut rng) as usize;
        let [a, b, c] = mesh.corners(t);
        for _ in 0..n {
            let (mut r1, mut r2): (f64, f64) = (rng.random(), rng.random());
            if r1 + r2 > 1.0 {
                (r1, r2) = (1.0 - r1, 1.0 - r2);
            }
            let s = Point::new(
                a.x + r1 * (b.x - a.x) + r2 * (c.x - a.x),
                a.y + r1 * (b.y - a.y) + r2 * (c.y - a.y),
            );
            let u: f64 = rng.random();
            if !window.contains(s) {
                continue;
            }
            candidates += 1;
            let eta = log_lambda(s) + (1.0 - r1 - r2) * field[tri[0]] + r1 * field[tri[1]] + r2 * field[tri[2]];
            let ratio = eta.exp() / bound;
            if ratio > 1.0 {
                bound_violations += 1;
            }
            if u < ratio {
                points.push(s);
            }
        }
    }
    Ok(LgcpSimulation {
        points,
        field,
        candidates,
        bound_violations,
    })
}

/// `log λ_i = α + v_i + ν_i` with `v` intrinsic CAR (sum zero per connected
/// component) and `ν` iid. An infinite precision switches an effect off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BymTruth {
    pub alpha: f64,
    pub tau_v: f64,
    pub tau_nu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BymSimulation {
    pub v: Vec<f64>,
    pub nu: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Constrained ICAR draw: a sample of `τ(R + εI)` conditioned on the
/// sum-to-zero constraints.
pub fn sample_icar(graph: &AdjacencyGraph, tau: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, SimulateError> {
    let n = graph.n();
    let ridge = SparseSymMatrix::identity(n);
    let q = SparseSymMatrix::linear_combination(&[(tau, &icar_structure(graph)?), (tau * ICAR_RIDGE, &ridge)]);
    let f = cholesky(&q)?;
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut v = f.solve_lt(&z)?;
    let k = KrigingCorrection::new(&f, &sum_to_zero_constraints(graph, 0))?;
    // the ridge leaves a large constant component; two passes remove its round-off
    k.correct(&mut v);
    k.correct(&mut v);
    Ok(v)
}

pub fn simulate_bym(graph: &AdjacencyGraph, expected: &[f64], truth: BymTruth, seed: u64) -> Result<BymSimulation, SimulateError> {
    if let Some(i) = expected.iter().position(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(SimulateError::BadExpected(i));
    }
    let n = graph.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = match truth.tau_v {
        t if t == f64::INFINITY => vec![0.0; n],
        t if t > 0.0 => sample_icar(graph, t, &mut rng)?,
        _ => return Err(SimulateError::BadParameter("ICAR precision")),
    };
    let nu: Vec<f64> = match truth.tau_nu {
        t if t == f64::INFINITY => vec![0.0; n],
        t if t > 0.0 => {
            let d = Normal::new(0.0, t.powf(-0.5)).expect("finite sd");
            (0..n).map(|_| d.sample(&mut rng)).collect()
        }
        _ => return Err(SimulateError::BadParameter("iid precision")),
    };
    let counts = (0..n)
        .map(|i| {
            let mean = expected[i] * (truth.alpha + v[i] + nu[i]).exp();
            Poisson::new(mean).map(|p| p.sample(&mut rng) as u64).map_err(|_| SimulateError::BadParameter("mean count"))
        })
        .collect::<Result<_, _>>()?;
    Ok(BymSimulation { v, nu, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, MeshParams};
    use crate::oracle::riemann_intensity;

    fn unit_mesh() -> (Polygon, TriMesh) {
        let w = Polygon::unit_square();
        let m = build_mesh(&w, MeshParams::new(0.2, 0.4).with_extension(0.4)).unwrap();
        (w, m)
    }

    #[test]
    fn constant_intensity_count_is_poisson() {
        let (w, m) = unit_mesh();
        let truth = LgcpTruth {
            intercept: 50f64.ln(),
            covariates: vec![],
            field: None,
        };
        let counts: Vec<f64> = (0..200)
            .map(|s| simulate_lgcp(&m, &w, &truth, s).unwrap().points.len() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / 200.0;
        assert!((mean - 50.0).abs() < 3.0 * (50.0f64 / 200.0).sqrt(), "{mean}");
        assert!(simulate_lgcp(&m, &w, &truth, 1).unwrap().points.iter().all(|&p| w.contains(p)));
    }

    #[test]
    fn covariate_intensity_matches_riemann_integral() {
        let (w, m) = unit_mesh();
        let x = |p: Point| p.x + 0.5 * p.y * p.y;
        let truth = LgcpTruth {
            intercept: 3.0,
            covariates: vec![(-1.5, &x)],
            field: None,
        };
        let want = riemann_intensity(|p| (3.0 - 1.5 * x(p)).exp(), &w, 400);
        let runs = 300;
        let mut total = 0.0;
        for s in 0..runs {
            let sim = simulate_lgcp(&m, &w, &truth, s).unwrap();
            assert_eq!(sim.bound_violations, 0);
            total += sim.points.len() as f64;
        }
        let mean = total / runs as f64;
        assert!((mean - want).abs() < 3.0 * (want / runs as f64).sqrt(), "{mean} vs {want}");
    }

    #[test]
    fn simulations_are_seeded() {
        let (w, m) = unit_mesh();
        let truth = LgcpTruth {
            intercept: 4.0,
            covariates: vec![],
            field: Some(MaternParams::from_range(1.0, 0.5, 1.0)),
        };
        let a = simulate_lgcp(&m, &w, &truth, 9).unwrap();
        assert_eq!(a, simulate_lgcp(&m, &w, &truth, 9).unwrap());
        assert_ne!(a.points, simulate_lgcp(&m, &w, &truth, 10).unwrap().points);
        let g = AdjacencyGraph::cycle(6);
        let t = BymTruth {
            alpha: 1.0,
            tau_v: 2.0,
            tau_nu: 5.0,
        };
        assert_eq!(simulate_bym(&g, &[3.0; 6], t, 2).unwrap(), simulate_bym(&g, &[3.0; 6], t, 2).unwrap());
    }

    #[test]
    fn icar_draws_sum_to_zero_per_component() {
        let g = AdjacencyGraph::from_edges(7, &[(0, 1), (1, 2), (2, 3), (4, 5), (5, 6)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let v = sample_icar(&g, 0.5, &mut rng).unwrap();
            assert!(v[..4].iter().sum::<f64>().abs() < 1e-8);
            assert!(v[4..].iter().sum::<f64>().abs() < 1e-8);
        }
    }

    #[test]
    fn icar_draws_have_intrinsic_covariance() {
        // on a 3-path the constrained covariance is the pseudo-inverse of τR
        let g = AdjacencyGraph::path(3);
        let tau = 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 20_000;
        let mut s00 = 0.0;
        for _ in 0..n {
            let v = sample_icar(&g, tau, &mut rng).unwrap();
            s00 += v[0] * v[0];
        }
        // R⁺ for the path: diag (5, 2, 5) / 9
        let want = 5.0 / 9.0 / tau;
        let se = want * (2.0 / n as f64).sqrt();
        assert!((s00 / n as f64 - want).abs() < 4.0 * se, "{} vs {want}", s00 / n as f64);
    }

    #[test]
    fn unstructured_counts_are_poisson_lognormal() {
        let n = 4000;
        let g = AdjacencyGraph::path(n);
        let (alpha, tau_nu) = (1.0, 4.0);
        let sim = simulate_bym(
            &g,
            &vec![1.0; n],
            BymTruth {
                alpha,
                tau_v: f64::INFINITY,
                tau_nu,
            },
            3,
        )
        .unwrap();
        assert!(sim.v.iter().all(|&v| v == 0.0));
        let y: Vec<f64> = sim.counts.iter().map(|&c| c as f64).collect();
        let mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let s2 = 1.0 / tau_nu;
        let m = (alpha + 0.5 * s2).exp();
        let v = m + (2.0 * alpha).exp() * ((2.0 * s2).exp() - s2.exp());
        assert!((mean - m).abs() < 4.0 * (v / n as f64).sqrt(), "{mean} vs {m}");
        // the variance exceeds the Poisson value by the lognormal spread
        assert!((var / v - 1.0).abs() < 0.15, "{var} vs {v}");
        assert!(var > 1.2 * mean);
    }
}
