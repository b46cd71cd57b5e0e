//! Point-pattern workflow: mesh, distance covariates, augmented Poisson
//! rows, SPDE field, fit, criticism and outputs for each model formula.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use spatinla_core::criticism::{criticise, FitCriticism};
use spatinla_core::geojson;
use spatinla_core::geometry::{Point, Polygon, Segment};
use spatinla_core::inla::{fit, InlaFit, InlaOptions};
use spatinla_core::marginal::Marginal;
use spatinla_core::mesh::{build_mesh, dual_weights, fem_matrices, project, MeshParams, Projector, TriMesh};
use spatinla_core::model::{distance_covariate, lgcp_augment, LatentModel, LgcpCovariate, Likelihood};
use spatinla_core::spde::SpdeOperator;

use crate::config::{ModelSpec, PriorSection, RunConfig};
use crate::ingest::ingest_points;
use crate::output::{create, slug, write_marginal, write_summary, write_text};

/// Name of the SPDE component in every LGCP model.
pub const FIELD: &str = "field";
/// Initial range as a fraction of the window's larger side.
const INITIAL_RANGE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct LgcpData {
    pub window: Polygon,
    pub points: Vec<Point>,
    pub sources: BTreeMap<String, Vec<Segment>>,
}

impl LgcpData {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let window_path = cfg.input.window.as_ref().context("lgcp workflow needs input.window")?;
        let text = fs::read_to_string(window_path).with_context(|| format!("reading {}", window_path.display()))?;
        let window = geojson::read_window(&text).with_context(|| format!("window {}", window_path.display()))?;
        let points_path = cfg.input.points.as_ref().context("lgcp workflow needs input.points")?;
        let file = fs::File::open(points_path).with_context(|| format!("opening {}", points_path.display()))?;
        let catalog =
            ingest_points(file, cfg.magnitude_threshold).with_context(|| format!("points {}", points_path.display()))?;
        let mut sources = BTreeMap::new();
        for (name, path) in &cfg.input.sources {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let segs = geojson::read_segments(&text).with_context(|| format!("source `{name}`"))?;
            sources.insert(name.clone(), segs);
        }
        let points = catalog.points();
        let outside = points.iter().filter(|&&p| !window.contains(p)).count();
        if outside > 0 {
            log::warn!("{outside} events fall outside the study window");
        }
        Ok(Self { window, points, sources })
    }
}

/// Everything the model formulas share.
#[derive(Debug, Clone)]
pub struct LgcpSetup {
    pub mesh: TriMesh,
    pub operator: SpdeOperator,
    pub dual: Vec<f64>,
    pub projector: Projector,
    /// Covariate values at the vertices and at the points.
    pub covariates: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
    /// Larger side of the window's bounding box.
    pub span: f64,
}

pub fn prepare(data: &LgcpData, params: MeshParams, covariates: &BTreeMap<String, Vec<String>>) -> Result<LgcpSetup> {
    let mesh = build_mesh(&data.window, params).context("building mesh")?;
    let fem = fem_matrices(&mesh).context("assembling finite elements")?;
    let operator = SpdeOperator::from_fem(&fem).context("SPDE operator")?;
    let dual = dual_weights(&mesh, &data.window);
    let projector = project(&mesh, &data.points).context("projecting points onto the mesh")?;
    let mut values = BTreeMap::new();
    for (name, source_names) in covariates {
        let mut segs = Vec::new();
        for s in source_names {
            segs.extend(data.sources.get(s).with_context(|| format!("covariate `{name}`: unknown source `{s}`"))?);
        }
        let at_vertices = distance_covariate(mesh.vertices(), &segs)?;
        let at_points = distance_covariate(&data.points, &segs)?;
        values.insert(name.clone(), (at_vertices, at_points));
    }
    let bb = data.window.bbox();
    log::info!(
        "mesh: {} vertices ({} interior), {} triangles",
        mesh.n_vertices(),
        mesh.n_interior(),
        mesh.triangles().len()
    );
    Ok(LgcpSetup {
        mesh,
        operator,
        dual,
        projector,
        covariates: values,
        span: bb.width().max(bb.height()),
    })
}

impl LgcpSetup {
    fn covariate(&self, name: &str) -> Result<&(Vec<f64>, Vec<f64>)> {
        self.covariates.get(name).with_context(|| format!("unknown covariate `{name}`"))
    }

    /// The augmented Poisson model for one formula.
    pub fn model(&self, spec: &ModelSpec, priors: &PriorSection) -> Result<LatentModel> {
        let names = spec.fixed_names();
        let mut m = LatentModel::new(names.clone(), Likelihood::Poisson);
        let field = if spec.field {
            Some(m.add_spde(FIELD, self.operator.clone(), priors.pc()?)?)
        } else {
            None
        };
        let first = usize::from(spec.intercept);
        let mut covs = Vec::new();
        for (k, c) in spec.covariates.iter().enumerate() {
            let (v, p) = self.covariate(c)?;
            covs.push(LgcpCovariate {
                coefficient: first + k,
                at_vertices: v.clone(),
                at_points: p.clone(),
            });
        }
        for (k, [a, b]) in spec.interactions.iter().enumerate() {
            let ((va, pa), (vb, pb)) = (self.covariate(a)?, self.covariate(b)?);
            covs.push(LgcpCovariate {
                coefficient: first + spec.covariates.len() + k,
                at_vertices: va.iter().zip(vb).map(|(x, y)| x * y).collect(),
                at_points: pa.iter().zip(pb).map(|(x, y)| x * y).collect(),
            });
        }
        m.rows = lgcp_augment(spec.intercept.then_some(0), field, &covs, &self.dual, &self.projector);
        m.validate()?;
        Ok(m)
    }

    /// Starting hyperparameters: range a fifth of the window, unit sd.
    pub fn initial_psi(&self, model: &LatentModel) -> Vec<f64> {
        let mut psi = Vec::with_capacity(model.n_hyper());
        for h in model.hyper_info() {
            psi.push(match h.kind {
                spatinla_core::model::HyperKind::LogRange => (INITIAL_RANGE_FRACTION * self.span).ln(),
                _ => 0.0,
            });
        }
        psi
    }
}

#[derive(Debug, Clone)]
pub struct ModelFit {
    pub spec: ModelSpec,
    pub model: LatentModel,
    pub fit: InlaFit,
    pub criticism: FitCriticism,
}

impl ModelFit {
    /// Fixed-effect marginals by the Laplace strategy.
    pub fn fixed_marginals(&self) -> Result<Vec<(String, Marginal)>> {
        (0..self.fit.n_fixed)
            .map(|i| Ok((self.fit.latent_names[i].clone(), self.fit.laplace_marginal(&self.model, i)?)))
            .collect()
    }

    pub fn hyper_marginals(&self) -> Vec<(String, Marginal)> {
        (0..self.fit.hyper.len())
            .map(|j| (self.fit.hyper[j].user_name.clone(), self.fit.hyper_marginal_user(j)))
            .collect()
    }
}

pub fn fit_model(
    setup: &LgcpSetup,
    spec: &ModelSpec,
    priors: &PriorSection,
    opts: &InlaOptions,
    samples: usize,
    seed: u64,
) -> Result<ModelFit> {
    let model = setup.model(spec, priors).with_context(|| format!("model `{}`", spec.name))?;
    let psi0 = setup.initial_psi(&model);
    let f = fit(&model, &psi0, opts.clone()).with_context(|| format!("fitting `{}`", spec.name))?;
    let criticism =
        criticise(&model, &f.exploration, samples, seed).with_context(|| format!("criticising `{}`", spec.name))?;
    log::info!(
        "{}: {} grid points, DIC {:.3}, sum log CPO {:.3}",
        spec.name,
        f.exploration.points.len(),
        criticism.dic,
        criticism.sum_log_cpo
    );
    Ok(ModelFit {
        spec: spec.clone(),
        model,
        fit: f,
        criticism,
    })
}

fn write_field(path: &Path, setup: &LgcpSetup, fit: &ModelFit) -> Result<()> {
    let offset = fit.model.component_offset(FIELD).context("model has no field")?;
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["vertex", "x", "y", "mean", "sd"])?;
    for (j, p) in setup.mesh.vertices().iter().enumerate() {
        let m = fit.fit.latent_marginal(offset + j);
        w.write_record([j.to_string(), p.x.to_string(), p.y.to_string(), m.mean().to_string(), m.sd().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_criticism(dir: &Path, c: &FitCriticism) -> Result<()> {
    write_text(&dir.join("criticism.txt"), &c.report())?;
    let mut w = create(&dir.join("cpo.csv"))?;
    c.write_cpo_csv(&mut w)?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

pub fn write_model_outputs(dir: &Path, setup: &LgcpSetup, fit: &ModelFit) -> Result<()> {
    let fixed = fit.fixed_marginals()?;
    let hyper = fit.hyper_marginals();
    let summarise = |v: &[(String, Marginal)]| v.iter().map(|(n, m)| (n.clone(), m.summary())).collect::<Vec<_>>();
    write_summary(&dir.join("summary_fixed.csv"), &summarise(&fixed))?;
    write_summary(&dir.join("summary_hyper.csv"), &summarise(&hyper))?;
    for (name, m) in fixed.iter().chain(&hyper) {
        write_marginal(dir, name, m)?;
    }
    if fit.spec.field {
        write_field(&dir.join(format!("field_{FIELD}.csv")), setup, fit)?;
    }
    write_criticism(dir, &fit.criticism)
}

/// `model,DIC,sum_log_cpo`, sorted by DIC ascending.
pub fn write_comparison(path: &Path, fits: &[ModelFit]) -> Result<()> {
    let mut order: Vec<&ModelFit> = fits.iter().collect();
    order.sort_by(|a, b| a.criticism.dic.total_cmp(&b.criticism.dic));
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["model", "DIC", "sum_log_cpo"])?;
    for f in order {
        w.write_record([f.spec.name.clone(), f.criticism.dic.to_string(), f.criticism.sum_log_cpo.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// What the `fit-lgcp` and `criticize` subcommands write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LgcpOutputs {
    Full,
    CriticismOnly,
}

pub fn run_lgcp(cfg: &RunConfig, out: &Path, outputs: LgcpOutputs) -> Result<Vec<ModelFit>> {
    let data = LgcpData::load(cfg).context("lgcp: loading inputs")?;
    if data.points.is_empty() {
        bail!("lgcp: no events above the magnitude threshold");
    }
    let setup = prepare(&data, cfg.mesh.params(), &cfg.covariates).context("lgcp: preparing mesh and covariates")?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut w = create(&out.join("mesh.txt"))?;
    setup.mesh.write_text(&mut w)?;
    std::io::Write::flush(&mut w)?;
    drop(w);
    let opts = cfg.inla_options();
    let mut fits = Vec::new();
    for spec in &cfg.models {
        let f = fit_model(&setup, spec, &cfg.priors, &opts, cfg.criticism.samples, cfg.seed).context("lgcp: fit")?;
        let dir = out.join(slug(&spec.name));
        match outputs {
            LgcpOutputs::Full => write_model_outputs(&dir, &setup, &f),
            LgcpOutputs::CriticismOnly => write_criticism(&dir, &f.criticism),
        }
        .with_context(|| format!("lgcp: writing outputs of `{}`", spec.name))?;
        fits.push(f);
    }
    write_comparison(&out.join("comparison.csv"), &fits).context("lgcp: comparison table")?;
    Ok(fits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (LgcpSetup, LgcpData) {
        let data = LgcpData {
            window: Polygon::unit_square(),
            points: vec![Point::new(0.2, 0.3), Point::new(0.7, 0.6), Point::new(0.4, 0.9)],
            sources: BTreeMap::from([(
                "line".to_string(),
                vec![Segment::new(Point::new(0.0, 0.0), Point::new(1.0, 0.0))],
            )]),
        };
        let covs = BTreeMap::from([("D".to_string(), vec!["line".to_string()])]);
        (prepare(&data, MeshParams::new(0.25, 0.5), &covs).unwrap(), data)
    }

    #[test]
    fn distance_covariate_and_interaction_rows() {
        let (s, _) = setup();
        let (_, at_points) = &s.covariates["D"];
        assert_eq!(at_points, &vec![0.3, 0.6, 0.9]);
        let spec = ModelSpec {
            name: "m".into(),
            covariates: vec!["D".into()],
            interactions: vec![["D".into(), "D".into()]],
            intercept: true,
            field: false,
        };
        let m = s.model(&spec, &PriorSection::default()).unwrap();
        assert_eq!(m.latent_names(), ["intercept", "D", "D:D"]);
        let last = m.rows.last().unwrap();
        assert_eq!(last.terms, vec![(0, 1.0), (1, 0.9), (2, 0.9 * 0.9)]);
        assert_eq!(m.rows.len(), s.mesh.n_vertices() + 3);
    }

    #[test]
    fn initial_range_is_a_fifth_of_the_window() {
        let (s, _) = setup();
        let m = s.model(&ModelSpec::intercept_only("m"), &PriorSection::default()).unwrap();
        let psi = s.initial_psi(&m);
        assert_eq!(psi.len(), 2);
        assert!((psi[0] - 0.2f64.ln()).abs() < 1e-15 && psi[1] == 0.0);
    }
}
