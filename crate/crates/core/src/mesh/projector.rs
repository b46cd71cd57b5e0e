use crate::geometry::{orient, Point, Polygon};

use super::{MeshError, TriMesh};

const BARY_TOL: f64 = 1e-12;

/// Barycentric interpolation weights from mesh vertices to points; one row
/// per point with at most three `(vertex, weight)` entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    n_vertices: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl Projector {
    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn n_points(&self) -> usize {
        self.rows.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    /// `A v` for a vector of vertex values.
    pub fn apply(&self, vertex_values: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(j, w)| w * vertex_values[j]).sum())
            .collect()
    }
}

fn barycentric(mesh: &TriMesh, t: usize, p: Point) -> [f64; 3] {
    let [a, b, c] = mesh.corners(t);
    let total = orient(a, b, c);
    [orient(p, b, c) / total, orient(a, p, c) / total, orient(a, b, p) / total]
}

fn contains(mesh: &TriMesh, t: usize, p: Point) -> bool {
    barycentric(mesh, t, p).iter().all(|&w| w >= -BARY_TOL)
}

/// Walks from `start` towards `p`; `None` when the walk leaves the mesh.
fn walk(mesh: &TriMesh, start: usize, p: Point) -> Option<usize> {
    let mut t = start;
    let limit = mesh.triangles().len() + 8;
    for _ in 0..limit {
        let w = barycentric(mesh, t, p);
        // step across the most violated edge
        let (k, &wmin) = w
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
            .unwrap();
        if wmin >= -BARY_TOL {
            return Some(t);
        }
        t = mesh.neighbours(t)[k]?;
    }
    // walks on non-Delaunay imported meshes can cycle
    (0..mesh.triangles().len()).find(|&t| contains(mesh, t, p))
}

/// Lowest-index triangle containing `p`, searched around the walk's result.
fn resolve_ties(mesh: &TriMesh, found: usize, p: Point) -> usize {
    let mut best = found;
    for &v in &mesh.triangles()[found] {
        for &t in mesh.vertex_triangles(v) {
            if t < best && contains(mesh, t, p) {
                best = t;
            }
        }
    }
    best
}

pub fn project(mesh: &TriMesh, points: &[Point]) -> Result<Projector, MeshError> {
    let mut rows = Vec::with_capacity(points.len());
    let mut hint = 0usize;
    if mesh.triangles().is_empty() {
        return if points.is_empty() {
            Ok(Projector {
                n_vertices: mesh.n_vertices(),
                rows,
            })
        } else {
            Err(MeshError::PointOutsideMesh(0))
        };
    }
    for (i, &p) in points.iter().enumerate() {
        let found = walk(mesh, hint, p)
            .or_else(|| walk(mesh, 0, p))
            .ok_or(MeshError::PointOutsideMesh(i))?;
        hint = found;
        let t = resolve_ties(mesh, found, p);
        let w = barycentric(mesh, t, p).map(|w| w.max(0.0));
        let total: f64 = w.iter().sum();
        let tri = mesh.triangles()[t];
        let mut row: Vec<(usize, f64)> = (0..3).filter(|&k| w[k] > 0.0).map(|k| (tri[k], w[k] / total)).collect();
        row.sort_by_key(|e| e.0);
        rows.push(row);
    }
    Ok(Projector {
        n_vertices: mesh.n_vertices(),
        rows,
    })
}

/// Per-vertex integration weights for `∫_W f`: each triangle whose centroid
/// lies in the window gives a third of its area to each of its vertices.
pub fn dual_weights(mesh: &TriMesh, window: &Polygon) -> Vec<f64> {
    let mut w = vec![0.0; mesh.n_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        if window.contains(mesh.centroid(t)) {
            let a = mesh.triangle_area(t) / 3.0;
            for &v in tri {
                w[v] += a;
            }
        }
    }
    w
}
