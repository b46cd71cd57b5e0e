//! The `simulate` workflow: synthetic point catalogues and count series
//! written in the same formats the fitting workflows read.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::Map;
use spatinla_core::geojson;
use spatinla_core::geometry::Point;
use spatinla_core::mesh::build_mesh;
use spatinla_core::simulate::{simulate_bym, simulate_lgcp, BymTruth, Covariate, LgcpTruth};
use spatinla_core::spde::{MaternParams, NU};

use crate::bym::{lattice_regions, Regions};
use crate::config::{RunConfig, SimulateKind, SimulateSection};
use crate::ingest::{ingest_population, parse_time, write_points, Event};
use crate::lgcp::LgcpData;
use crate::output::{create, write_text};

/// Distance to the union of the named sources at `p`.
fn distance_at(data: &LgcpData, sources: &[String], p: Point) -> f64 {
    sources
        .iter()
        .flat_map(|s| &data.sources[s])
        .map(|seg| seg.distance_to(p))
        .fold(f64::INFINITY, f64::min)
}

type Surface<'a> = Box<dyn Fn(Point) -> f64 + Sync + 'a>;

fn simulate_points(cfg: &RunConfig, sim: &SimulateSection, out: &Path) -> Result<usize> {
    let window_path = cfg.input.window.as_ref().context("LGCP simulation needs input.window")?;
    let text = fs::read_to_string(window_path).with_context(|| format!("reading {}", window_path.display()))?;
    let window = geojson::read_window(&text)?;
    let mut data = LgcpData {
        window: window.clone(),
        points: Vec::new(),
        sources: Default::default(),
    };
    for (name, path) in &cfg.input.sources {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        data.sources.insert(name.clone(), geojson::read_segments(&text)?);
    }
    let mesh = build_mesh(&window, cfg.mesh.params()).context("simulate: mesh")?;
    let fns: Vec<(f64, Surface)> = sim
        .coefficients
        .iter()
        .map(|(name, &beta)| {
            let sources = cfg.covariates[name].clone();
            let data = &data;
            let f: Surface = Box::new(move |p| distance_at(data, &sources, p));
            (beta, f)
        })
        .collect();
    let covariates: Vec<(f64, Covariate)> = fns.iter().map(|(b, f)| (*b, f.as_ref() as Covariate)).collect();
    let field = match (sim.range, sim.sigma) {
        (Some(r), Some(s)) => Some(MaternParams::from_range(NU, r, s)),
        _ => None,
    };
    let truth = LgcpTruth {
        intercept: sim.intercept,
        covariates,
        field,
    };
    let draw = simulate_lgcp(&mesh, &window, &truth, cfg.seed).context("simulate: LGCP draw")?;
    if draw.bound_violations > 0 {
        log::warn!("{} accepted points exceeded their thinning bound", draw.bound_violations);
    }
    let time = parse_time(&sim.time).with_context(|| format!("bad simulation time `{}`", sim.time))?;
    let events: Vec<Event> = draw
        .points
        .iter()
        .map(|p| Event {
            lon: p.x,
            lat: p.y,
            mag: sim.magnitude,
            time,
        })
        .collect();
    write_points(create(&out.join("points.csv"))?, &events)?;
    Ok(events.len())
}

fn simulate_counts(cfg: &RunConfig, sim: &SimulateSection, out: &Path) -> Result<usize> {
    let regions = match (&cfg.input.regions, sim.lattice) {
        (Some(p), _) => Regions::load(p, &cfg.input.region_key)?,
        (None, Some([nx, ny])) => {
            let (ids, polys) = lattice_regions(nx, ny);
            let features: Vec<_> = ids
                .iter()
                .zip(&polys)
                .map(|(id, p)| {
                    let mut props = Map::new();
                    props.insert(cfg.input.region_key.clone(), id.clone().into());
                    (p.clone(), props)
                })
                .collect();
            let doc = serde_json::to_string_pretty(&geojson::polygons_collection(&features))? + "\n";
            write_text(&out.join("regions.geojson"), &doc)?;
            Regions::new(ids, polys)?
        }
        (None, None) => bail!("BYM simulation needs input.regions or simulate.lattice"),
    };
    let n = regions.ids.len();
    let population = match &cfg.input.population {
        Some(p) => Some(ingest_population(fs::File::open(p)?, &regions.ids)?),
        None => None,
    };
    // the truth is on the rate scale, so standardise by population alone
    let expected = match &population {
        Some(pop) => {
            let total: f64 = pop.iter().sum();
            let mean = total / n as f64;
            pop.iter().map(|p| p / mean).collect()
        }
        None => vec![1.0; n],
    };
    let truth = BymTruth {
        alpha: sim.alpha,
        tau_v: sim.tau_v.map_or(1.0, |t| t.value()),
        tau_nu: sim.tau_nu.map_or(1.0, |t| t.value()),
    };
    if cfg.windows.is_empty() {
        bail!("BYM simulation needs at least one [[windows]] entry");
    }
    let mut w = csv::Writer::from_writer(create(&out.join("counts.csv"))?);
    w.write_record(["region_id", "date", "count"])?;
    let mut rows = 0;
    for (k, win) in cfg.windows.iter().enumerate() {
        let draw = simulate_bym(&regions.graph, &expected, truth, cfg.seed.wrapping_add(k as u64))?;
        // one row per region, dated on the window's first day
        for (id, c) in regions.ids.iter().zip(&draw.counts) {
            w.write_record([id.clone(), win.start.format("%Y-%m-%d").to_string(), c.to_string()])?;
            rows += 1;
        }
    }
    w.flush()?;
    Ok(rows)
}

pub fn run_simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let sim = cfg.simulate.as_ref().context("simulate workflow needs a [simulate] section")?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match sim.kind {
        SimulateKind::Lgcp => {
            let n = simulate_points(cfg, sim, out).context("simulate: points")?;
            log::info!("wrote {n} simulated events");
        }
        SimulateKind::Bym => {
            let n = simulate_counts(cfg, sim, out).context("simulate: counts")?;
            log::info!("wrote {n} simulated count rows");
        }
    }
    Ok(())
}
