//! One PASS/FAIL line per acceptance criterion. Lines are written to
//! `/dev/stdout` so they survive the test harness's output capture.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use spatinla_cli::config::{ModelSpec, PriorSection};
use spatinla_cli::lgcp::{fit_model, prepare, LgcpData};
use spatinla_core::areal::{icar_structure, variance_fraction, AdjacencyGraph};
use spatinla_core::criticism::{criticise, sample_posterior};
use spatinla_core::geometry::{Point, Polygon, Segment};
use spatinla_core::inla::{explore_hyper, fit, Approximator, InlaOptions};
use spatinla_core::mesh::{build_mesh, fem_matrices, MeshParams};
use spatinla_core::model::{LatentModel, Likelihood, LogGammaPrior, ObservationRow};
use spatinla_core::oracle::toys::{self, Toy};
use spatinla_core::oracle::{dense_posterior, loo_refit, nested_gaussian_posterior};
use spatinla_core::simulate::{simulate_bym, simulate_lgcp, BymTruth, Covariate, LgcpTruth};
use spatinla_core::spde::{bessel_k, matern_corr, MaternParams, PCPrior, SpdeOperator, NU};

use common::{files_under, lgcp_header, lgcp_simulation, Workspace};

fn report(id: u32, pass: bool, elapsed: Duration, limit: Duration, detail: &str) {
    let within = elapsed <= limit;
    let verdict = if pass && within { "PASS" } else { "FAIL" };
    let mut out = std::fs::OpenOptions::new().write(true).open("/dev/stdout").unwrap();
    writeln!(
        out,
        "\ncriterion {id:>2}: {verdict} ({detail}; {:.1} s of {} s)",
        elapsed.as_secs_f64(),
        limit.as_secs()
    )
    .unwrap();
    out.flush().unwrap();
    assert!(pass, "criterion {id}: {detail}");
    assert!(within, "criterion {id}: {:.1} s over the {} s budget", elapsed.as_secs_f64(), limit.as_secs());
}

#[test]
fn criterion_01_spde_matches_matern() {
    let t = Instant::now();
    let window = Polygon::rectangle(0.0, 0.0, 10.0, 10.0);
    let mesh = build_mesh(&window, MeshParams::new(0.25, 0.5).with_extension(2.0)).unwrap();
    let params = MaternParams::from_range(NU, 2.0, 1.0);
    let q = SpdeOperator::from_fem(&fem_matrices(&mesh).unwrap())
        .unwrap()
        .precision(params.kappa, params.tau())
        .unwrap();
    let cov = q.to_dense().cholesky().expect("SPDE precision is positive definite").inverse();

    let xs = mesh.vertices();
    let (lo, hi) = xs.iter().fold((Point::new(f64::MAX, f64::MAX), Point::new(f64::MIN, f64::MIN)), |(a, b), p| {
        (Point::new(a.x.min(p.x), a.y.min(p.y)), Point::new(b.x.max(p.x), b.y.max(p.y)))
    });
    let inner: Vec<usize> = (0..xs.len())
        .filter(|&v| {
            let p = xs[v];
            [p.x - lo.x, hi.x - p.x, p.y - lo.y, hi.y - p.y].iter().all(|&d| d >= 2.0)
        })
        .collect();
    let (mut worst, mut pairs) = (0.0f64, 0usize);
    for (a, &i) in inner.iter().enumerate() {
        for &j in &inner[a..] {
            let d = xs[i].dist(xs[j]);
            if d > 4.0 {
                continue;
            }
            let emp = cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt();
            worst = worst.max((emp - matern_corr(d, NU, params.kappa)).abs());
            pairs += 1;
        }
    }
    report(
        1,
        pairs > 0 && worst <= 0.05,
        t.elapsed(),
        Duration::from_secs(60),
        &format!("{} vertices, {pairs} pairs within 4, max |error| {worst:.4}", inner.len()),
    );
}

/// `K_ν(x) = ∫₀^∞ e^{−x cosh t} cosh(νt) dt` by the trapezoid rule, which
/// converges geometrically for this integrand.
fn bessel_k_quadrature(nu: f64, x: f64) -> f64 {
    let h = 1e-3;
    let mut sum = 0.5 * (-x).exp();
    for k in 1..=20_000 {
        let s = k as f64 * h;
        sum += (-x * s.cosh()).exp() * (nu * s).cosh();
    }
    sum * h
}

#[test]
fn criterion_02_correlation_at_the_range() {
    let t = Instant::now();
    let s8 = 8f64.sqrt();
    let oracle = s8 * bessel_k_quadrature(1.0, s8);
    let params = MaternParams::from_range(NU, 2.0, 1.0);
    let got = matern_corr(2.0, NU, params.kappa);
    let direct = s8 * bessel_k(1.0, s8);
    report(
        2,
        (got - oracle).abs() <= 1e-3 && (direct - oracle).abs() <= 1e-3 && (oracle - 0.139).abs() < 1e-3,
        t.elapsed(),
        Duration::from_secs(1),
        &format!("corr(r) = {got:.6}, quadrature oracle {oracle:.6}"),
    );
}

#[test]
fn criterion_03_pc_prior_calibration() {
    let t = Instant::now();
    let prior = PCPrior::new(0.05, 0.01, 1.0, 0.01).unwrap();
    // Simpson's rule on the joint density over (log r, log σ)
    let simpson = |f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize| {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    let joint = |lr_lo: f64, lr_hi: f64, ls_lo: f64, ls_hi: f64| {
        let inner = |lr: f64| simpson(&|ls| prior.log_density_internal(lr, ls).exp(), ls_lo, ls_hi, 2000);
        simpson(&inner, lr_lo, lr_hi, 2000)
    };
    let r0 = 0.05f64.ln();
    let p_r = joint(r0 - 12.0, r0, -40.0, 5.0);
    let p_s = joint(r0 - 12.0, r0 + 40.0, 0.0, 5.0);
    report(
        3,
        (p_r - 0.01).abs() <= 1e-6 && (p_s - 0.01).abs() <= 1e-6,
        t.elapsed(),
        Duration::from_secs(1),
        &format!("P(r < 0.05) = {p_r:.8}, P(sigma > 1) = {p_s:.8}"),
    );
}

#[test]
fn criterion_04_conjugate_gaussian_exact() {
    let t = Instant::now();
    let (noise, ys) = (2.0, [0.4, 1.9, -0.3, 1.1, 0.8, 0.2]);
    let mut m = LatentModel::new(vec!["intercept".into()], Likelihood::Gaussian { precision: noise });
    let off = m.add_iid("u", 3, LogGammaPrior { shape: 1.0, rate: 1.0 }).unwrap();
    for (k, &y) in ys.iter().enumerate() {
        m.rows.push(ObservationRow {
            y,
            exposure: 1.0,
            terms: vec![(0, 1.0), (off + k % 3, 1.0)],
        });
    }
    let approx = Approximator::new(&m, InlaOptions::default()).unwrap();
    let mut worst = 0.0f64;
    let grid = [-1.0, -0.5, 0.0, 0.5, 1.0];
    for psi in grid {
        let tau = f64::exp(psi);
        let mut prec = DMatrix::<f64>::from_diagonal(&DVector::from_vec(vec![1e-6, tau, tau, tau]));
        let mut rhs = DVector::<f64>::zeros(4);
        for (k, &y) in ys.iter().enumerate() {
            let j = 1 + k % 3;
            for (a, b) in [(0, 0), (0, j), (j, 0), (j, j)] {
                prec[(a, b)] += noise;
            }
            rhs[0] += noise * y;
            rhs[j] += noise * y;
        }
        let cov = prec.try_inverse().unwrap();
        let mean = &cov * rhs;
        let ga = approx.approximate(&[psi], None).unwrap();
        for i in 0..4 {
            worst = worst.max((ga.mode[i] - mean[i]).abs());
            worst = worst.max((ga.sd(i) - cov[(i, i)].sqrt()).abs());
        }
    }
    report(
        4,
        worst <= 1e-6,
        t.elapsed(),
        Duration::from_secs(5),
        &format!("{} hyper points, max |error| {worst:.2e}", grid.len()),
    );
}

/// Largest mean error, largest relative sd error and hyper-mode error in
/// grid steps of one toy.
fn toy_errors(toy: &Toy) -> (f64, f64, f64) {
    let m = &toy.model;
    let truth = match (&toy.dense, &toy.nested) {
        (Some(spec), _) => dense_posterior(m, spec).unwrap(),
        (None, Some(spec)) => nested_gaussian_posterior(m, spec).unwrap(),
        _ => unreachable!("every toy has a quadrature grid"),
    };
    let f = fit(m, &vec![0.0; m.n_hyper()], InlaOptions::default()).unwrap();
    let (mut dm, mut ds, mut dh) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..m.latent_dim() {
        let g = match m.likelihood {
            Likelihood::Gaussian { .. } => f.latent_marginal(i),
            Likelihood::Poisson => f.laplace_marginal(m, i).unwrap(),
        };
        dm = dm.max((g.mean() - truth.latent_mean[i]).abs());
        ds = ds.max((g.sd() / truth.latent_sd[i] - 1.0).abs());
    }
    for j in 0..m.n_hyper() {
        let step = f.exploration.dz * f.exploration.sd[j];
        dh = dh.max((f.hyper_marginal(j).mode() - truth.marginals[j].mode()).abs() / step);
    }
    (dm, ds, dh)
}

#[test]
fn criterion_05_toys_match_quadrature() {
    let t = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for toy in [toys::scalar_poisson(), toys::bym_path3(), toys::bym_cycle4()] {
        let (dm, ds, dh) = toy_errors(&toy);
        ok &= dm <= 0.05 && ds <= 0.10 && dh <= 1.0;
        parts.push(format!("{} mean {dm:.4} sd {:.1}% mode {dh:.2} steps", toy.name, 100.0 * ds));
    }
    report(5, ok, t.elapsed(), Duration::from_secs(120), &parts.join(", "));
}

const MESH: (f64, f64) = (0.2, 0.4);

/// Unit-window data with `D_f = y` (fault along the bottom edge) and
/// `D_pb = x` (plate boundary along the left edge).
struct LgcpTruthSpec {
    intercept: f64,
    d_f: f64,
    d_pb: f64,
    interaction: f64,
}

fn simulate_unit(spec: &LgcpTruthSpec, seed: u64) -> LgcpData {
    let window = Polygon::unit_square();
    let mesh = build_mesh(&window, MeshParams::new(MESH.0, MESH.1)).unwrap();
    let (d_f, d_pb, both) = (|p: Point| p.y, |p: Point| p.x, |p: Point| p.x * p.y);
    let mut covariates: Vec<(f64, Covariate)> = Vec::new();
    for (beta, f) in [(spec.d_f, &d_f as Covariate), (spec.d_pb, &d_pb), (spec.interaction, &both)] {
        if beta != 0.0 {
            covariates.push((beta, f));
        }
    }
    let truth = LgcpTruth {
        intercept: spec.intercept,
        covariates,
        field: None,
    };
    let points = simulate_lgcp(&mesh, &window, &truth, seed).unwrap().points;
    let sources = BTreeMap::from([
        ("fault".to_string(), vec![Segment::new(Point::new(0.0, 0.0), Point::new(1.0, 0.0))]),
        ("plate".to_string(), vec![Segment::new(Point::new(0.0, 0.0), Point::new(0.0, 1.0))]),
    ]);
    LgcpData { window, points, sources }
}

fn covariate_sources() -> BTreeMap<String, Vec<String>> {
    BTreeMap::from([("D_f".into(), vec!["fault".into()]), ("D_pb".into(), vec!["plate".into()])])
}

fn spec(name: &str, covariates: &[&str], interaction: bool) -> ModelSpec {
    ModelSpec {
        name: name.into(),
        covariates: covariates.iter().map(|c| c.to_string()).collect(),
        interactions: if interaction { vec![["D_f".into(), "D_pb".into()]] } else { vec![] },
        intercept: true,
        field: true,
    }
}

/// Laplace marginal of fixed effect `i` after fitting `spec` to `data`.
fn fixed_marginal(data: &LgcpData, spec: &ModelSpec, i: usize) -> spatinla_core::marginal::Marginal {
    let setup = prepare(data, MeshParams::new(MESH.0, MESH.1), &covariate_sources()).unwrap();
    let model = setup.model(spec, &PriorSection::default()).unwrap();
    let f = fit(&model, &setup.initial_psi(&model), InlaOptions::default()).unwrap();
    f.laplace_marginal(&model, i).unwrap()
}

#[test]
fn criterion_06_lgcp_intercept_coverage() {
    let t = Instant::now();
    let truth = LgcpTruthSpec {
        intercept: 3.0,
        d_f: 0.0,
        d_pb: 0.0,
        interaction: 0.0,
    };
    let model = spec("homogeneous", &[], false);
    let covered = (0..50)
        .filter(|&r| {
            let m = fixed_marginal(&simulate_unit(&truth, 6000 + r), &model, 0);
            (m.quantile(0.025)..=m.quantile(0.975)).contains(&truth.intercept)
        })
        .count();
    report(
        6,
        covered >= 44,
        t.elapsed(),
        Duration::from_secs(600),
        &format!("95% interval for beta0 covers 3 in {covered}/50"),
    );
}

#[test]
fn criterion_07_lgcp_negative_distance_effect() {
    let t = Instant::now();
    let truth = LgcpTruthSpec {
        intercept: 5.0,
        d_f: -3.0,
        d_pb: 0.0,
        interaction: 0.0,
    };
    let model = spec("fault", &["D_f"], false);
    let hits = (0..20)
        .filter(|&r| fixed_marginal(&simulate_unit(&truth, 7000 + r), &model, 1).cdf(0.0) >= 0.95)
        .count();
    report(
        7,
        hits >= 18,
        t.elapsed(),
        Duration::from_secs(600),
        &format!("P(beta_1 < 0) >= 0.95 in {hits}/20"),
    );
}

#[test]
fn criterion_08_dic_prefers_generating_model() {
    let t = Instant::now();
    // about 70 points per replicate; with much fewer the field can mimic
    // the covariate surface at a lower complexity cost
    let truth = LgcpTruthSpec {
        intercept: 6.0,
        d_f: -3.0,
        d_pb: -2.0,
        interaction: 2.0,
    };
    let (full, null) = (spec("selected", &["D_f", "D_pb"], true), spec("intercept", &[], false));
    let (priors, opts) = (PriorSection::default(), InlaOptions::default());
    let wins = (0..20)
        .filter(|&r| {
            let data = simulate_unit(&truth, 8000 + r);
            let setup = prepare(&data, MeshParams::new(MESH.0, MESH.1), &covariate_sources()).unwrap();
            let a = fit_model(&setup, &full, &priors, &opts, 1000, r).unwrap().criticism.dic;
            let b = fit_model(&setup, &null, &priors, &opts, 1000, r).unwrap().criticism.dic;
            a < b
        })
        .count();
    report(
        8,
        wins >= 18,
        t.elapsed(),
        Duration::from_secs(600),
        &format!("DIC prefers the generating model in {wins}/20"),
    );
}

#[test]
fn criterion_09_cpo_matches_leave_one_out() {
    let t = Instant::now();
    let toy = toys::poisson_three();
    let exact = loo_refit(&toy.model, toy.dense.as_ref().unwrap()).unwrap();
    let a = Approximator::new(&toy.model, InlaOptions::default()).unwrap();
    // the harmonic estimator has infinite variance for the y = 4 row, so
    // it needs far more draws than a desk-scale default
    let c = criticise(&toy.model, &explore_hyper(&a, &[]).unwrap(), 100_000, 0).unwrap();
    let worst = c.cpo.iter().zip(&exact).map(|(g, w)| (g / w - 1.0).abs()).fold(0.0, f64::max);
    let unflagged: f64 = c.cpo.iter().zip(&c.flagged).filter(|(_, &f)| !f).map(|(v, _)| v.ln()).sum();
    report(
        9,
        worst <= 0.05 && (unflagged - c.sum_log_cpo).abs() < 1e-12,
        t.elapsed(),
        Duration::from_secs(60),
        &format!(
            "max relative error {:.2}%, sum log CPO over {} unflagged = {unflagged:.6}",
            100.0 * worst,
            c.cpo.len() - c.n_flagged()
        ),
    );
}

#[test]
fn criterion_10_icar_structure() {
    let t = Instant::now();
    let mut parts = Vec::new();

    // R·1 = 0 with exact arithmetic, and a single zero eigenvalue
    let lattice: Vec<(usize, usize)> = (0..30)
        .flat_map(|i| {
            let (r, c) = (i / 6, i % 6);
            let mut e = Vec::new();
            if c + 1 < 6 {
                e.push((i, i + 1));
            }
            if r + 1 < 5 {
                e.push((i, i + 6));
            }
            e
        })
        .collect();
    let graphs = [AdjacencyGraph::path(7), AdjacencyGraph::cycle(12), AdjacencyGraph::from_edges(30, &lattice).unwrap()];
    let mut structure_ok = true;
    for g in &graphs {
        let r = icar_structure(g).unwrap();
        let ev = r.to_dense().symmetric_eigen().eigenvalues;
        let rank = ev.iter().filter(|v| v.abs() >= 1e-9).count();
        structure_ok &= r.row_sums().iter().all(|&s| s == 0.0) && rank == g.n() - 1;
    }
    parts.push(format!("R1 = 0 and rank n-1 on {} graphs: {structure_ok}", graphs.len()));

    // posterior samples on a two-component graph
    let g = AdjacencyGraph::from_edges(7, &[(0, 1), (1, 2), (3, 4), (4, 5), (5, 6), (6, 3)]).unwrap();
    let comps = g.components();
    let mut m = LatentModel::new(vec!["intercept".into()], Likelihood::Poisson);
    let v = m.add_icar("v", g.clone(), LogGammaPrior { shape: 1.0, rate: 0.1 }).unwrap();
    let nu = m.add_iid("nu", 7, LogGammaPrior { shape: 1.0, rate: 0.1 }).unwrap();
    for (i, y) in [3.0, 8.0, 5.0, 1.0, 0.0, 4.0, 9.0].into_iter().enumerate() {
        m.rows.push(ObservationRow {
            y,
            exposure: 2.0,
            terms: vec![(0, 1.0), (v + i, 1.0), (nu + i, 1.0)],
        });
    }
    let f = fit(&m, &[0.0, 0.0], InlaOptions::default()).unwrap();
    let samples = sample_posterior(&f.exploration, 500, 10).unwrap();
    let mut worst = 0.0f64;
    for s in &samples {
        for c in 0..g.n_components() {
            let sum: f64 = (0..7).filter(|&i| comps[i] == c).map(|i| s[v + i]).sum();
            worst = worst.max(sum.abs());
        }
    }
    let sim = simulate_bym(&g, &[1.0; 7], BymTruth { alpha: 0.0, tau_v: 0.5, tau_nu: f64::INFINITY }, 10).unwrap();
    for c in 0..g.n_components() {
        let sum: f64 = (0..7).filter(|&i| comps[i] == c).map(|i| sim.v[i]).sum();
        worst = worst.max(sum.abs());
    }
    parts.push(format!("max |component sum| over {} samples {worst:.1e}", samples.len()));

    // s²_v = σ²_ν gives one half; constant v gives zero
    let sym = [-1.0, 1.0, -1.0, 1.0];
    let s2 = 4.0 / 3.0;
    let half = variance_fraction(&sym, s2);
    let zero = variance_fraction(&[0.7; 5], 0.3);
    parts.push(format!("variance fractions {half} and {zero}"));

    report(
        10,
        structure_ok && worst <= 1e-8 && (half - 0.5).abs() < 1e-12 && zero == 0.0,
        t.elapsed(),
        Duration::from_secs(10),
        &parts.join(", "),
    );
}

/// Runs `args` twice into `a/` and `b/` and compares every file.
fn rerun_identical(ws: &Workspace, args: &[&str]) -> (usize, Vec<String>) {
    for out in ["a", "b"] {
        let mut full = args.to_vec();
        full.extend(["--out", out]);
        ws.run(&full);
    }
    let (fa, fb) = (files_under(&ws.path("a")), files_under(&ws.path("b")));
    let mut differing: Vec<String> = Vec::new();
    if fa != fb {
        differing.push("file lists".into());
    }
    for f in &fa {
        if std::fs::read(ws.path("a").join(f)).ok() != std::fs::read(ws.path("b").join(f)).ok() {
            differing.push(f.display().to_string());
        }
    }
    (fa.len(), differing)
}

#[test]
fn criterion_11_end_to_end_determinism() {
    let t = Instant::now();
    let lgcp = Workspace::new();
    lgcp.write("sim.toml", &lgcp_simulation(4.0, "D_f = -2.0"));
    lgcp.run(&["simulate", "--config", "sim.toml", "--out", "data"]);
    let models = "\n[[models]]\nname = \"intercept\"\n\n[[models]]\nname = \"selected\"\ncovariates = [\"D_f\", \"D_pb\"]\ninteractions = [[\"D_f\", \"D_pb\"]]\n";
    lgcp.write("fit.toml", &(lgcp_header("lgcp") + models));
    let (n_lgcp, diff_lgcp) = rerun_identical(&lgcp, &["fit-lgcp", "--config", "fit.toml"]);

    let bym = Workspace::new();
    let windows = "\n[[windows]]\nname = \"early\"\nstart = 2020-02-24\nend = 2020-03-22\n\n[[windows]]\nname = \"late\"\nstart = 2020-03-23\nend = 2020-04-26\n";
    bym.write(
        "sim.toml",
        &format!("workflow = \"simulate\"\nseed = 4\n{windows}\n[simulate]\nkind = \"bym\"\nalpha = 3.0\ntau_v = 2.0\ntau_nu = 5.0\nlattice = [4, 4]\n"),
    );
    bym.run(&["simulate", "--config", "sim.toml", "--out", "data"]);
    bym.write(
        "fit.toml",
        &format!("workflow = \"bym\"\nseed = 4\n\n[input]\nregions = \"data/regions.geojson\"\ncounts = \"data/counts.csv\"\n{windows}"),
    );
    let (n_bym, diff_bym) = rerun_identical(&bym, &["fit-bym", "--config", "fit.toml"]);

    report(
        11,
        diff_lgcp.is_empty() && diff_bym.is_empty() && n_lgcp > 0 && n_bym > 0,
        t.elapsed(),
        Duration::from_secs(120),
        &format!(
            "fit-lgcp {n_lgcp} files, {} differ; fit-bym {n_bym} files, {} differ",
            diff_lgcp.len(),
            diff_bym.len()
        ),
    );
}
