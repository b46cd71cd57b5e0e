//! Areal units: border adjacency, the ICAR structure matrix, expected
//! counts and the relative-risk summaries of a BYM fit.

mod adjacency;
mod icar;
mod risk;

pub use adjacency::{adjacency_from_polygons, AdjacencyGraph, BORDER_TOL};
pub use icar::{icar_log_pdet, icar_structure, sum_to_zero_constraints};
pub use risk::{expected_counts, relative_risk, variance_fraction, RelativeRisk};

use thiserror::Error;

use crate::geometry::Polygon;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArealError {
    #[error("need at least two regions, got {0}")]
    TooFewRegions(usize),
    #[error("region {0} has a ring with fewer than three vertices")]
    DegenerateRing(usize),
    #[error("region {0} has no neighbours")]
    IsolatedRegion(usize),
    #[error("edge ({0}, {1}) refers to a missing region")]
    InvalidEdge(usize, usize),
    #[error("self-loop on region {0}")]
    SelfLoop(usize),
    #[error("ICAR minor of component {0} is singular")]
    SingularMinor(usize),
    #[error("population has {0} entries for {1} regions")]
    LengthMismatch(usize, usize),
    #[error("population entry {0} is negative or not finite")]
    InvalidPopulation(usize),
    #[error("total population is zero")]
    ZeroPopulation,
}

/// Regions with their observed counts and expected counts.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionTable {
    pub ids: Vec<String>,
    pub polygons: Vec<Vec<Polygon>>,
    pub counts: Vec<u64>,
    pub population: Option<Vec<f64>>,
    pub expected: Vec<f64>,
}

impl RegionTable {
    pub fn new(
        ids: Vec<String>,
        polygons: Vec<Vec<Polygon>>,
        counts: Vec<u64>,
        population: Option<Vec<f64>>,
    ) -> Result<Self, ArealError> {
        if polygons.len() != ids.len() || counts.len() != ids.len() {
            return Err(ArealError::LengthMismatch(counts.len(), ids.len()));
        }
        let expected = expected_counts(&counts, population.as_deref())?;
        Ok(Self {
            ids,
            polygons,
            counts,
            population,
            expected,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}
