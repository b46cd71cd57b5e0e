//! Declarative run configuration, read from a TOML file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Deserialize;
use spatinla_core::inla::InlaOptions;
use spatinla_core::mesh::MeshParams;
use spatinla_core::model::LogGammaPrior;
use spatinla_core::spde::PCPrior;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Toml(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Workflow {
    Lgcp,
    Bym,
    Simulate,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    /// Study window polygon (GeoJSON).
    pub window: Option<PathBuf>,
    /// Point catalogue, `lon,lat,mag,time`.
    pub points: Option<PathBuf>,
    /// Named polyline sources (GeoJSON) for distance covariates.
    #[serde(default)]
    pub sources: BTreeMap<String, PathBuf>,
    /// Region polygons (GeoJSON) carrying `region_key`.
    pub regions: Option<PathBuf>,
    #[serde(default = "default_region_key")]
    pub region_key: String,
    /// Daily counts, `region_id,date,count`.
    pub counts: Option<PathBuf>,
    /// Optional `region_id,population` table for expected counts.
    pub population: Option<PathBuf>,
}

fn default_region_key() -> String {
    "region_id".into()
}

impl Default for Inputs {
    fn default() -> Self {
        Self {
            window: None,
            points: None,
            sources: BTreeMap::new(),
            regions: None,
            region_key: default_region_key(),
            counts: None,
            population: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub interior_edge: f64,
    pub exterior_edge: f64,
    /// Defaults to twice the exterior edge.
    pub extension: Option<f64>,
}

impl Default for MeshSection {
    fn default() -> Self {
        Self {
            interior_edge: 0.1,
            exterior_edge: 0.4,
            extension: None,
        }
    }
}

impl MeshSection {
    pub fn params(&self) -> MeshParams {
        let p = MeshParams::new(self.interior_edge, self.exterior_edge);
        match self.extension {
            Some(w) => p.with_extension(w),
            None => p,
        }
    }
}

/// One linear predictor: covariates, pairwise interactions and toggles.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub interactions: Vec<[String; 2]>,
    #[serde(default = "yes")]
    pub intercept: bool,
    /// SPDE field in the LGCP predictor.
    #[serde(default = "yes")]
    pub field: bool,
}

fn yes() -> bool {
    true
}

impl ModelSpec {
    pub fn intercept_only(name: &str) -> Self {
        Self {
            name: name.into(),
            covariates: Vec::new(),
            interactions: Vec::new(),
            intercept: true,
            field: true,
        }
    }

    /// Fixed-effect names in predictor order; interactions read `a:b`.
    pub fn fixed_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.intercept {
            out.push("intercept".to_string());
        }
        out.extend(self.covariates.iter().cloned());
        out.extend(self.interactions.iter().map(|[a, b]| format!("{a}:{b}")));
        out
    }

    /// Every covariate the predictor touches, interactions included.
    pub fn referenced(&self) -> impl Iterator<Item = &String> {
        self.covariates.iter().chain(self.interactions.iter().flatten())
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BymSection {
    #[serde(default = "yes")]
    pub structured: bool,
    #[serde(default = "yes")]
    pub unstructured: bool,
}

impl Default for BymSection {
    fn default() -> Self {
        Self {
            structured: true,
            unstructured: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub r0: f64,
    pub p_r: f64,
    pub sigma0: f64,
    pub p_s: f64,
    pub precision_shape: f64,
    pub precision_rate: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        let g = LogGammaPrior::default();
        Self {
            r0: 0.05,
            p_r: 0.01,
            sigma0: 1.0,
            p_s: 0.01,
            precision_shape: g.shape,
            precision_rate: g.rate,
        }
    }
}

impl PriorSection {
    pub fn pc(&self) -> Result<PCPrior, ConfigError> {
        PCPrior::new(self.r0, self.p_r, self.sigma0, self.p_s).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn precision(&self) -> LogGammaPrior {
        LogGammaPrior {
            shape: self.precision_shape,
            rate: self.precision_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dz: f64,
    pub drop: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        let o = InlaOptions::default();
        Self { dz: o.dz, drop: o.drop }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticismSection {
    pub samples: usize,
}

impl Default for CriticismSection {
    fn default() -> Self {
        Self {
            samples: spatinla_core::criticism::DEFAULT_SAMPLES,
        }
    }
}

/// TOML dates may be written bare (`2020-02-24`) or quoted.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum DateValue {
    Toml(toml::value::Datetime),
    Text(String),
}

impl DateValue {
    fn parse(&self) -> Result<NaiveDate, String> {
        let text = match self {
            DateValue::Toml(d) => d.to_string(),
            DateValue::Text(s) => s.clone(),
        };
        NaiveDate::parse_from_str(&text, "%Y-%m-%d").map_err(|e| format!("bad date `{text}`: {e}"))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWindow {
    name: Option<String>,
    start: DateValue,
    end: DateValue,
}

/// A closed date range; both ends belong to it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DateWindow {
    pub name: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateWindow {
    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }
}

/// A precision that may be infinite, written as a number or `"inf"`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum Precision {
    Value(f64),
    Text(InfText),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfText {
    Inf,
}

impl Precision {
    pub fn value(self) -> f64 {
        match self {
            Precision::Value(v) => v,
            Precision::Text(InfText::Inf) => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimulateKind {
    Lgcp,
    Bym,
}

/// Truth for synthetic data.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub kind: SimulateKind,
    /// LGCP intercept `β₀`.
    #[serde(default)]
    pub intercept: f64,
    /// LGCP coefficients by covariate name.
    #[serde(default)]
    pub coefficients: BTreeMap<String, f64>,
    /// Matérn range and sd of the LGCP field; no field when absent.
    pub range: Option<f64>,
    pub sigma: Option<f64>,
    #[serde(default = "default_magnitude")]
    pub magnitude: f64,
    #[serde(default = "default_time")]
    pub time: String,
    /// BYM intercept and precisions.
    #[serde(default)]
    pub alpha: f64,
    pub tau_v: Option<Precision>,
    pub tau_nu: Option<Precision>,
    /// Build an `nx × ny` lattice of unit squares when no regions are given.
    pub lattice: Option<[usize; 2]>,
}

fn default_magnitude() -> f64 {
    5.0
}

fn default_time() -> String {
    "2010-01-01T00:00:00Z".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    workflow: Workflow,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_output")]
    output: PathBuf,
    #[serde(default)]
    input: Inputs,
    #[serde(default)]
    mesh: MeshSection,
    #[serde(default)]
    covariates: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    models: Vec<ModelSpec>,
    #[serde(default)]
    bym: BymSection,
    #[serde(default)]
    priors: PriorSection,
    #[serde(default = "default_threshold")]
    magnitude_threshold: f64,
    #[serde(default)]
    windows: Vec<RawWindow>,
    #[serde(default)]
    grid: GridSection,
    #[serde(default)]
    criticism: CriticismSection,
    simulate: Option<SimulateSection>,
}

fn default_output() -> PathBuf {
    "out".into()
}

fn default_threshold() -> f64 {
    4.0
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub workflow: Workflow,
    pub seed: u64,
    pub output: PathBuf,
    pub input: Inputs,
    pub mesh: MeshSection,
    /// Distance covariates: name → the sources whose union it measures.
    pub covariates: BTreeMap<String, Vec<String>>,
    pub models: Vec<ModelSpec>,
    pub bym: BymSection,
    pub priors: PriorSection,
    pub magnitude_threshold: f64,
    pub windows: Vec<DateWindow>,
    pub grid: GridSection,
    pub criticism: CriticismSection,
    pub simulate: Option<SimulateSection>,
}

impl RunConfig {
    /// Parses and validates; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text)?;
        let windows = raw
            .windows
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let start = w.start.parse().map_err(ConfigError::Invalid)?;
                let end = w.end.parse().map_err(ConfigError::Invalid)?;
                let name = w.name.clone().unwrap_or_else(|| format!("window{}", i + 1));
                Ok(DateWindow { name, start, end })
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        let resolve = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        let mut input = raw.input.clone();
        for p in [&mut input.window, &mut input.points, &mut input.regions, &mut input.counts, &mut input.population]
            .into_iter()
            .flatten()
        {
            *p = resolve(p);
        }
        for p in input.sources.values_mut() {
            *p = resolve(p);
        }
        let models = if raw.models.is_empty() {
            vec![ModelSpec::intercept_only("model")]
        } else {
            raw.models
        };
        let cfg = Self {
            workflow: raw.workflow,
            seed: raw.seed,
            output: resolve(&raw.output),
            input,
            mesh: raw.mesh,
            covariates: raw.covariates,
            models,
            bym: raw.bym,
            priors: raw.priors,
            magnitude_threshold: raw.magnitude_threshold,
            windows,
            grid: raw.grid,
            criticism: raw.criticism,
            simulate: raw.simulate,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        for (name, sources) in &self.covariates {
            if sources.is_empty() {
                return bad(format!("covariate `{name}` lists no sources"));
            }
            if let Some(s) = sources.iter().find(|s| !self.input.sources.contains_key(*s)) {
                return bad(format!("covariate `{name}` uses unknown source `{s}`"));
            }
        }
        let mut names = std::collections::BTreeSet::new();
        for m in &self.models {
            if !names.insert(&m.name) {
                return bad(format!("model name `{}` is used twice", m.name));
            }
            if let Some(c) = m.referenced().find(|c| !self.covariates.contains_key(*c)) {
                return bad(format!("model `{}` references unknown covariate `{c}`", m.name));
            }
            if m.fixed_names().is_empty() && !m.field {
                return bad(format!("model `{}` has an empty predictor", m.name));
            }
        }
        if let Some(sim) = &self.simulate {
            if let Some(c) = sim.coefficients.keys().find(|c| !self.covariates.contains_key(*c)) {
                return bad(format!("simulation coefficient for unknown covariate `{c}`"));
            }
            if sim.range.is_some() != sim.sigma.is_some() {
                return bad("simulation field needs both `range` and `sigma`".into());
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, w) in self.windows.iter().enumerate() {
            if w.start > w.end {
                return bad(format!("window `{}` ends before it starts", w.name));
            }
            if i > 0 && self.windows[i - 1].end >= w.start {
                return bad(format!("window `{}` overlaps or precedes `{}`", w.name, self.windows[i - 1].name));
            }
            if !seen.insert(&w.name) {
                return bad(format!("window name `{}` is used twice", w.name));
            }
        }
        if !(self.grid.dz > 0.0 && self.grid.drop > 0.0) {
            return bad("grid dz and drop must be positive".into());
        }
        if !(self.magnitude_threshold.is_finite()) {
            return bad("magnitude_threshold must be finite".into());
        }
        Ok(())
    }

    pub fn inla_options(&self) -> InlaOptions {
        InlaOptions {
            dz: self.grid.dz,
            drop: self.grid.drop,
            ..InlaOptions::default()
        }
    }
}
