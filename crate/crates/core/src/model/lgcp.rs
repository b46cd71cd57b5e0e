use crate::geometry::{Point, Segment};
use crate::mesh::Projector;

use super::{ModelError, ObservationRow};

/// A covariate evaluated at the mesh vertices and at the data points, with
/// the latent index of its coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct LgcpCovariate {
    pub coefficient: usize,
    pub at_vertices: Vec<f64>,
    pub at_points: Vec<f64>,
}

/// Rows of the discretised Cox-process likelihood: one `y = 0` row per
/// vertex with exposure `w_j`, and one `y = 1`, zero-exposure row per point
/// whose field term uses the barycentric weights. The log-likelihood is then
/// `Σ_i η(s_i) − Σ_j w_j exp(η(v_j))`.
pub fn lgcp_augment(
    intercept: Option<usize>,
    field_offset: Option<usize>,
    covariates: &[LgcpCovariate],
    dual_weights: &[f64],
    points: &Projector,
) -> Vec<ObservationRow> {
    let nv = dual_weights.len();
    let np = points.n_points();
    for c in covariates {
        assert_eq!(c.at_vertices.len(), nv, "covariate needs one value per vertex");
        assert_eq!(c.at_points.len(), np, "covariate needs one value per point");
    }
    if field_offset.is_some() {
        assert_eq!(points.n_vertices(), nv, "projector and weights disagree on vertex count");
    }
    let fixed = |values: &mut Vec<(usize, f64)>, pick: &dyn Fn(&LgcpCovariate) -> f64| {
        if let Some(a) = intercept {
            values.push((a, 1.0));
        }
        for c in covariates {
            values.push((c.coefficient, pick(c)));
        }
    };
    let mut rows = Vec::with_capacity(nv + np);
    for (j, &w) in dual_weights.iter().enumerate() {
        let mut terms = Vec::new();
        fixed(&mut terms, &|c| c.at_vertices[j]);
        if let Some(f) = field_offset {
            terms.push((f + j, 1.0));
        }
        rows.push(ObservationRow { y: 0.0, exposure: w, terms });
    }
    for i in 0..np {
        let mut terms = Vec::new();
        fixed(&mut terms, &|c| c.at_points[i]);
        if let Some(f) = field_offset {
            terms.extend(points.row(i).iter().map(|&(v, w)| (f + v, w)));
        }
        rows.push(ObservationRow { y: 1.0, exposure: 0.0, terms });
    }
    rows
}

/// Shortest Euclidean distance from each point to the union of segments.
pub fn distance_covariate(points: &[Point], source: &[Segment]) -> Result<Vec<f64>, ModelError> {
    if source.is_empty() {
        return Err(ModelError::EmptySource);
    }
    Ok(points
        .iter()
        .map(|&p| source.iter().map(|s| s.distance_to(p)).fold(f64::INFINITY, f64::min))
        .collect())
}
