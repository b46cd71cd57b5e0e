//! Areal-count workflow: adjacency from polygons, one BYM fit per date
//! window, relative-risk maps and the structured variance fraction.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::{json, Map, Value};
use spatinla_core::areal::{adjacency_from_polygons, relative_risk, variance_fraction, AdjacencyGraph, RegionTable};
use spatinla_core::criticism::{criticise, FitCriticism};
use spatinla_core::geojson;
use spatinla_core::geometry::Polygon;
use spatinla_core::inla::{fit, InlaFit, InlaOptions};
use spatinla_core::marginal::Marginal;
use spatinla_core::model::{LatentModel, Likelihood, ObservationRow};

use crate::config::{BymSection, PriorSection, RunConfig};
use crate::ingest::{aggregate_counts, ingest_counts, ingest_population};
use crate::lgcp::write_criticism;
use crate::output::{create, slug, write_marginal, write_summary, write_text};

pub const STRUCTURED: &str = "v";
pub const UNSTRUCTURED: &str = "nu";
pub const INTERCEPT: &str = "alpha";

#[derive(Debug, Clone)]
pub struct Regions {
    pub ids: Vec<String>,
    pub polygons: Vec<Vec<Polygon>>,
    pub graph: AdjacencyGraph,
}

impl Regions {
    pub fn new(ids: Vec<String>, polygons: Vec<Vec<Polygon>>) -> Result<Self> {
        let graph = adjacency_from_polygons(&polygons).context("building adjacency")?;
        let k = graph.n_components();
        if k > 1 {
            log::info!("adjacency graph has {k} connected components; the structured effect sums to zero on each");
        }
        Ok(Self { ids, polygons, graph })
    }

    pub fn load(path: &Path, key: &str) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let (ids, polygons) = geojson::read_regions(&text, key)
            .with_context(|| format!("regions {}", path.display()))?
            .into_iter()
            .unzip();
        Self::new(ids, polygons)
    }
}

/// `log λ_i = log E_i + α + v_i + ν_i` with the configured effects.
pub fn bym_model(regions: &Regions, table: &RegionTable, effects: &BymSection, priors: &PriorSection) -> Result<LatentModel> {
    let mut m = LatentModel::new(vec![INTERCEPT.into()], Likelihood::Poisson);
    let n = table.len();
    let nu = effects
        .unstructured
        .then(|| m.add_iid(UNSTRUCTURED, n, priors.precision()))
        .transpose()?;
    let v = effects
        .structured
        .then(|| m.add_icar(STRUCTURED, regions.graph.clone(), priors.precision()))
        .transpose()?;
    for i in 0..n {
        let mut terms = vec![(0, 1.0)];
        terms.extend(v.map(|o| (o + i, 1.0)));
        terms.extend(nu.map(|o| (o + i, 1.0)));
        m.rows.push(ObservationRow {
            y: table.counts[i] as f64,
            exposure: table.expected[i],
            terms,
        });
    }
    m.validate()?;
    Ok(m)
}

#[derive(Debug, Clone)]
pub struct WindowFit {
    pub name: String,
    pub table: RegionTable,
    pub model: LatentModel,
    pub fit: InlaFit,
    pub criticism: FitCriticism,
}

impl WindowFit {
    /// Marginal of `v_i + ν_i`.
    pub fn area_effect(&self, i: usize) -> Result<Marginal> {
        let mut b = Vec::new();
        for name in [STRUCTURED, UNSTRUCTURED] {
            if let Some(o) = self.model.component_offset(name) {
                b.push((o + i, 1.0));
            }
        }
        if b.is_empty() {
            return Ok(Marginal::gaussian(0.0, 0.0));
        }
        Ok(self.fit.combination_marginal(&b)?)
    }

    pub fn intercept(&self) -> Result<Marginal> {
        Ok(self.fit.laplace_marginal(&self.model, 0)?)
    }

    /// Posterior means of the structured effect; zeros without one.
    pub fn structured_means(&self) -> Vec<f64> {
        let n = self.table.len();
        match self.model.component_offset(STRUCTURED) {
            Some(o) => (0..n).map(|i| self.fit.latent_marginal(o + i).mean()).collect(),
            None => vec![0.0; n],
        }
    }

    /// Posterior mean of `σ²_ν`; zero without the unstructured effect.
    pub fn unstructured_variance(&self) -> f64 {
        let name = format!("variance_{UNSTRUCTURED}");
        self.fit
            .hyper
            .iter()
            .position(|h| h.user_name == name)
            .map_or(0.0, |j| self.fit.hyper_marginal_user(j).mean())
    }

    pub fn variance_fraction(&self) -> f64 {
        variance_fraction(&self.structured_means(), self.unstructured_variance())
    }
}

pub fn fit_window(
    name: &str,
    regions: &Regions,
    table: RegionTable,
    cfg: (&BymSection, &PriorSection, &InlaOptions),
    samples: usize,
    seed: u64,
) -> Result<WindowFit> {
    let (effects, priors, opts) = cfg;
    let model = bym_model(regions, &table, effects, priors)?;
    let psi0 = vec![0.0; model.n_hyper()];
    let f = fit(&model, &psi0, opts.clone()).with_context(|| format!("fitting window `{name}`"))?;
    let criticism = criticise(&model, &f.exploration, samples, seed).with_context(|| format!("criticising `{name}`"))?;
    log::info!("{name}: DIC {:.3}, sum log CPO {:.3}", criticism.dic, criticism.sum_log_cpo);
    Ok(WindowFit {
        name: name.into(),
        table,
        model,
        fit: f,
        criticism,
    })
}

fn risk_map(regions: &Regions, w: &WindowFit) -> Result<Value> {
    let mut features = Vec::with_capacity(regions.ids.len());
    let v_means = w.structured_means();
    for (i, id) in regions.ids.iter().enumerate() {
        let rr = relative_risk(&w.area_effect(i)?);
        let mut props = Map::new();
        props.insert("region_id".into(), json!(id));
        props.insert("count".into(), json!(w.table.counts[i]));
        props.insert("expected".into(), json!(w.table.expected[i]));
        props.insert("zeta_mean".into(), json!(rr.mean));
        props.insert("zeta_q025".into(), json!(rr.q025));
        props.insert("zeta_q975".into(), json!(rr.q975));
        props.insert("v_mean".into(), json!(v_means[i]));
        features.push((regions.polygons[i].clone(), props));
    }
    Ok(geojson::polygons_collection(&features))
}

pub fn write_window_outputs(dir: &Path, regions: &Regions, w: &WindowFit) -> Result<()> {
    let alpha = w.intercept()?;
    let hyper: Vec<(String, Marginal)> = (0..w.fit.hyper.len())
        .map(|j| (w.fit.hyper[j].user_name.clone(), w.fit.hyper_marginal_user(j)))
        .collect();
    write_summary(&dir.join("summary_fixed.csv"), &[(INTERCEPT.into(), alpha.summary())])?;
    let rows: Vec<_> = hyper.iter().map(|(n, m)| (n.clone(), m.summary())).collect();
    write_summary(&dir.join("summary_hyper.csv"), &rows)?;
    write_marginal(dir, INTERCEPT, &alpha)?;
    for (name, m) in &hyper {
        write_marginal(dir, name, m)?;
    }
    let map = risk_map(regions, w)?;
    write_text(&dir.join("risk_map.geojson"), &(serde_json::to_string_pretty(&map)? + "\n"))?;
    let s = alpha.summary();
    let c = &w.criticism;
    let text = format!(
        "average number of counts per district = {}\n\
         average_count_q025 = {}\n\
         average_count_q975 = {}\n\
         variance_fraction = {}\n\
         dic = {}\n\
         p_d = {}\n\
         sum_log_cpo = {}\n",
        s.mode.exp(),
        s.q025.exp(),
        s.q975.exp(),
        w.variance_fraction(),
        c.dic,
        c.p_d,
        c.sum_log_cpo,
    );
    write_text(&dir.join("summary.txt"), &text)?;
    write_criticism(dir, c)
}

pub fn run_bym(cfg: &RunConfig, out: &Path, criticism_only: bool) -> Result<Vec<WindowFit>> {
    let regions_path = cfg.input.regions.as_ref().context("bym workflow needs input.regions")?;
    let regions = Regions::load(regions_path, &cfg.input.region_key).context("bym: regions")?;
    let counts_path = cfg.input.counts.as_ref().context("bym workflow needs input.counts")?;
    let file = fs::File::open(counts_path).with_context(|| format!("opening {}", counts_path.display()))?;
    let series = ingest_counts(file, &regions.ids).with_context(|| format!("bym: counts {}", counts_path.display()))?;
    let population = match &cfg.input.population {
        Some(p) => {
            let file = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            Some(ingest_population(file, &regions.ids).context("bym: population")?)
        }
        None => None,
    };
    if cfg.windows.is_empty() {
        bail!("bym workflow needs at least one [[windows]] entry");
    }
    let totals = aggregate_counts(&series, regions.ids.len(), &cfg.windows);
    if totals.dropped > 0 {
        log::info!("{} counts fall outside every window and were dropped", totals.dropped);
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut adj = create(&out.join("adjacency.txt"))?;
    regions.graph.write_edge_list(&mut adj)?;
    std::io::Write::flush(&mut adj)?;
    drop(adj);
    let opts = cfg.inla_options();
    let mut fits = Vec::new();
    for (window, counts) in cfg.windows.iter().zip(totals.totals) {
        let table = RegionTable::new(regions.ids.clone(), regions.polygons.clone(), counts, population.clone())
            .with_context(|| format!("bym: window `{}`", window.name))?;
        let f = fit_window(
            &window.name,
            &regions,
            table,
            (&cfg.bym, &cfg.priors, &opts),
            cfg.criticism.samples,
            cfg.seed,
        )
        .context("bym: fit")?;
        let dir = out.join(slug(&window.name));
        if criticism_only {
            write_criticism(&dir, &f.criticism)
        } else {
            write_window_outputs(&dir, &regions, &f)
        }
        .with_context(|| format!("bym: writing outputs of `{}`", window.name))?;
        fits.push(f);
    }
    let mut w = csv::Writer::from_writer(create(&out.join("windows.csv"))?);
    w.write_record(["window", "DIC", "sum_log_cpo", "variance_fraction", "dropped"])?;
    for f in &fits {
        w.write_record([
            f.name.clone(),
            f.criticism.dic.to_string(),
            f.criticism.sum_log_cpo.to_string(),
            f.variance_fraction().to_string(),
            totals.dropped.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(fits)
}

/// `nx × ny` unit squares with ids `r<row>_<col>`, row-major from the origin.
pub fn lattice_regions(nx: usize, ny: usize) -> (Vec<String>, Vec<Vec<Polygon>>) {
    let mut ids = Vec::new();
    let mut polys = Vec::new();
    for r in 0..ny {
        for c in 0..nx {
            ids.push(format!("r{r}_{c}"));
            let (x, y) = (c as f64, r as f64);
            polys.push(vec![Polygon::rectangle(x, y, x + 1.0, y + 1.0)]);
        }
    }
    (ids, polys)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice(nx: usize, ny: usize) -> Regions {
        let (ids, polys) = lattice_regions(nx, ny);
        Regions::new(ids, polys).unwrap()
    }

    #[test]
    fn lattice_adjacency_is_rook() {
        let r = lattice(3, 2);
        assert_eq!(r.graph.n(), 6);
        assert_eq!(r.graph.edges().len(), 7);
        assert_eq!(r.graph.degree(1), 3);
    }

    #[test]
    fn rows_carry_both_effects() {
        let r = lattice(2, 2);
        let table = RegionTable::new(r.ids.clone(), r.polygons.clone(), vec![3, 0, 7, 1], None).unwrap();
        let m = bym_model(&r, &table, &BymSection::default(), &PriorSection::default()).unwrap();
        assert_eq!(m.latent_names().len(), 1 + 4 + 4);
        let nu = m.component_offset(UNSTRUCTURED).unwrap();
        let v = m.component_offset(STRUCTURED).unwrap();
        assert_eq!(m.rows[2].terms, vec![(0, 1.0), (v + 2, 1.0), (nu + 2, 1.0)]);
        assert_eq!(m.rows[2].exposure, 1.0);
        let names: Vec<String> = m.hyper_info().into_iter().map(|h| h.user_name).collect();
        assert_eq!(names, ["variance_nu", "variance_v"]);
        let only_v = BymSection {
            structured: true,
            unstructured: false,
        };
        assert_eq!(bym_model(&r, &table, &only_v, &PriorSection::default()).unwrap().n_hyper(), 1);
    }

    #[test]
    fn identical_windows_fit_identically() {
        let r = lattice(3, 3);
        let counts = vec![4, 9, 2, 7, 12, 5, 3, 8, 6];
        let cfg = (&BymSection::default(), &PriorSection::default(), &InlaOptions::default());
        let mk = || RegionTable::new(r.ids.clone(), r.polygons.clone(), counts.clone(), None).unwrap();
        let a = fit_window("a", &r, mk(), cfg, 300, 1).unwrap();
        let b = fit_window("b", &r, mk(), cfg, 300, 1).unwrap();
        assert_eq!(a.criticism, b.criticism);
        assert_eq!(a.area_effect(4).unwrap(), b.area_effect(4).unwrap());
        let f = a.variance_fraction();
        assert!((0.0..=1.0).contains(&f));
    }
}
