//! Triangulation of a study window with an outer extension ring, linear
//! finite elements on it, and point-to-mesh projection.
//!
//! The mesher places a regular triangular lattice at the interior spacing
//! inside the window, nodes along the window boundary, a coarser lattice in
//! the extension ring and nodes along the outer rectangle, then triangulates
//! the whole node set with Bowyer–Watson. The convex hull of the mesh is the
//! window's bounding box grown by the extension width.

mod delaunay;
mod fem;
mod io;
mod projector;

pub use delaunay::triangulate;
pub use fem::{fem_matrices, FemMatrices};
pub use projector::{dual_weights, project, Projector};

use thiserror::Error;

use crate::geometry::{orient, Point, Polygon};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("window polygon is degenerate (area {0:e})")]
    DegenerateWindow(f64),
    #[error("invalid mesh parameters: {0}")]
    InvalidParameters(String),
    #[error("mesh would have about {0} nodes, above the limit of 1e6")]
    TooManyNodes(usize),
    #[error("need at least three points, got {0}")]
    TooFewPoints(usize),
    #[error("triangulation failed inserting point {0}")]
    DegenerateInsertion(usize),
    #[error("triangle {0} is degenerate or has an invalid vertex index")]
    DegenerateTriangle(usize),
    #[error("vertices {0} and {1} coincide")]
    DuplicateVertex(usize, usize),
    #[error("point {0} lies outside the mesh")]
    PointOutsideMesh(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub const MAX_NODES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshParams {
    pub interior_max_edge: f64,
    pub exterior_max_edge: f64,
    pub extension_width: f64,
}

impl MeshParams {
    /// Extension width defaults to twice the exterior edge.
    pub fn new(interior_max_edge: f64, exterior_max_edge: f64) -> Self {
        Self {
            interior_max_edge,
            exterior_max_edge,
            extension_width: 2.0 * exterior_max_edge,
        }
    }

    pub fn with_extension(mut self, width: f64) -> Self {
        self.extension_width = width;
        self
    }
}

#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    interior: Vec<bool>,
    // neighbours[t][i] lies across the edge opposite vertex i of triangle t
    neighbours: Vec<[Option<usize>; 3]>,
    vertex_triangles: Vec<Vec<usize>>,
}

impl TriMesh {
    /// Validates and indexes a triangulation. Clockwise triangles are
    /// reoriented; degenerate ones (area ≤ 1e-12) and coincident vertices
    /// are rejected.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>, interior: Vec<bool>) -> Result<Self, MeshError> {
        let nv = vertices.len();
        assert_eq!(interior.len(), nv, "one interior flag per vertex");
        let mut triangles = triangles;
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(MeshError::DegenerateTriangle(t));
            }
            let a2 = orient(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if a2.abs() <= 2e-12 {
                return Err(MeshError::DegenerateTriangle(t));
            }
            if a2 < 0.0 {
                tri.swap(1, 2);
            }
        }
        check_duplicates(&vertices)?;

        let mut vertex_triangles = vec![Vec::new(); nv];
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                vertex_triangles[v].push(t);
            }
        }
        let mut edges: Vec<((usize, usize), usize, usize)> = Vec::with_capacity(3 * triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
                edges.push(((a.min(b), a.max(b)), t, k));
            }
        }
        edges.sort_unstable();
        let mut neighbours = vec![[None; 3]; triangles.len()];
        for w in edges.windows(2) {
            if w[0].0 == w[1].0 {
                neighbours[w[0].1][w[0].2] = Some(w[1].1);
                neighbours[w[1].1][w[1].2] = Some(w[0].1);
            }
        }
        Ok(Self {
            vertices,
            triangles,
            interior,
            neighbours,
            vertex_triangles,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn interior_flags(&self) -> &[bool] {
        &self.interior
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_interior(&self) -> usize {
        self.interior.iter().filter(|&&b| b).count()
    }

    pub fn neighbours(&self, t: usize) -> [Option<usize>; 3] {
        self.neighbours[t]
    }

    pub fn vertex_triangles(&self, v: usize) -> &[usize] {
        &self.vertex_triangles[v]
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        0.5 * orient(a, b, c)
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.corners(t);
        Point::new((a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn longest_edge(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        a.dist(b).max(b.dist(c)).max(c.dist(a))
    }

    /// Recomputes interior flags as membership in `window` (boundary counts
    /// as interior within 1e-9).
    pub fn flag_interior(&mut self, window: &Polygon) {
        self.interior = self.vertices.iter().map(|&p| window.distance(p) <= 1e-9).collect();
    }
}

fn check_duplicates(vertices: &[Point]) -> Result<(), MeshError> {
    let mut order: Vec<usize> = (0..vertices.len()).collect();
    order.sort_by(|&a, &b| vertices[a].x.total_cmp(&vertices[b].x).then(a.cmp(&b)));
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if vertices[j].x - vertices[i].x > 1e-9 {
                break;
            }
            if vertices[i].dist(vertices[j]) <= 1e-9 {
                return Err(MeshError::DuplicateVertex(i.min(j), i.max(j)));
            }
        }
    }
    Ok(())
}

/// Builds the window mesh with its extension ring.
pub fn build_mesh(window: &Polygon, params: MeshParams) -> Result<TriMesh, MeshError> {
    let MeshParams {
        interior_max_edge: h_in,
        exterior_max_edge: h_out,
        extension_width: ext,
    } = params;
    if !(h_in > 0.0 && h_in <= h_out) {
        return Err(MeshError::InvalidParameters(format!(
            "need 0 < interior_max_edge ({h_in}) <= exterior_max_edge ({h_out})"
        )));
    }
    if !(ext >= h_out) {
        return Err(MeshError::InvalidParameters(format!(
            "extension_width ({ext}) must be at least exterior_max_edge ({h_out})"
        )));
    }
    let bb = window.bbox();
    let scale = bb.width().max(bb.height());
    let area = window.area();
    if !(area > 1e-12 * scale * scale) || !(scale > 0.0) {
        return Err(MeshError::DegenerateWindow(area));
    }
    let outer = bb.expanded(ext);
    let row_h = |h: f64| h * 3f64.sqrt() / 2.0;
    let estimate = area / (h_in * row_h(h_in)) + outer.width() * outer.height() / (h_out * row_h(h_out));
    if !estimate.is_finite() || estimate > MAX_NODES as f64 {
        return Err(MeshError::TooManyNodes(estimate.min(usize::MAX as f64) as usize));
    }

    let mut nodes: Vec<Point> = Vec::new();
    let mut interior: Vec<bool> = Vec::new();

    // window boundary, subdivided to the interior spacing
    for ring in window.rings() {
        let n = ring.len();
        for i in 0..n {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            let pieces = (a.dist(b) / h_in).ceil().max(1.0) as usize;
            for s in 0..pieces {
                let t = s as f64 / pieces as f64;
                nodes.push(Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
                interior.push(true);
            }
        }
    }
    let n_boundary = nodes.len();

    // interior lattice, kept clear of the boundary nodes
    for p in lattice(bb.min, bb.max, h_in) {
        if window.contains(p) && window.boundary_distance(p) >= 0.4 * h_in {
            nodes.push(p);
            interior.push(true);
        }
    }

    // outer rectangle boundary
    let corners = [
        outer.min,
        Point::new(outer.max.x, outer.min.y),
        outer.max,
        Point::new(outer.min.x, outer.max.y),
    ];
    for i in 0..4 {
        let (a, b) = (corners[i], corners[(i + 1) % 4]);
        let pieces = (a.dist(b) / h_out).ceil().max(1.0) as usize;
        for s in 0..pieces {
            let t = s as f64 / pieces as f64;
            nodes.push(Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
            interior.push(false);
        }
    }

    // extension nodes, clear of the window and of the outer boundary: the
    // interior spacing continues for one exterior edge past the window so
    // the size jump does not sit on the window boundary
    let inner_margin = 0.4 * h_out;
    let clear_of_outer = |p: Point| {
        p.x - outer.min.x >= inner_margin
            && outer.max.x - p.x >= inner_margin
            && p.y - outer.min.y >= inner_margin
            && outer.max.y - p.y >= inner_margin
    };
    let band = if h_out > h_in { h_out } else { 0.0 };
    if band > 0.0 {
        let near = bb.expanded(band);
        for p in lattice(near.min, near.max, h_in) {
            let d = window.boundary_distance(p);
            if clear_of_outer(p) && !window.contains(p) && d >= 0.4 * h_in && d <= band {
                nodes.push(p);
                interior.push(false);
            }
        }
    }
    for p in lattice(outer.min, outer.max, h_out) {
        if clear_of_outer(p) && !window.contains(p) && window.boundary_distance(p) >= band + 0.4 * h_out {
            nodes.push(p);
            interior.push(false);
        }
    }
    debug_assert!(n_boundary <= nodes.len());

    // pruning can leave small windows without interior nodes; bisect edges
    // that are too long for their region until none remain
    let mut triangles = triangulate(&nodes)?;
    for _ in 0..MAX_REFINE_PASSES {
        let mut added = Vec::new();
        for tri in &triangles {
            let target = if tri.iter().all(|&v| interior[v]) { h_in } else { h_out };
            let (a, b) = longest_edge(&nodes, tri);
            if nodes[a].dist(nodes[b]) > REFINE_RATIO * target {
                let (lo, hi) = (a.min(b), a.max(b));
                added.push((lo, hi));
            }
        }
        added.sort_unstable();
        added.dedup();
        if added.is_empty() {
            break;
        }
        for (a, b) in added {
            let m = Point::new(0.5 * (nodes[a].x + nodes[b].x), 0.5 * (nodes[a].y + nodes[b].y));
            nodes.push(m);
            interior.push(window.distance(m) <= 1e-12);
        }
        triangles = triangulate(&nodes)?;
    }
    TriMesh::new(nodes, triangles, interior)
}

const MAX_REFINE_PASSES: usize = 8;
/// Longest edge allowed relative to the region's target edge length.
const REFINE_RATIO: f64 = 1.45;

fn longest_edge(nodes: &[Point], tri: &[usize; 3]) -> (usize, usize) {
    let edges = [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])];
    edges
        .into_iter()
        .max_by(|x, y| nodes[x.0].dist(nodes[x.1]).total_cmp(&nodes[y.0].dist(nodes[y.1])))
        .expect("three edges")
}

/// Triangular lattice covering the box with spacing at most `h`: row and
/// column spacings are shrunk so that the first and last rows and columns
/// fall on the box edges. Odd rows are offset by half a column.
fn lattice(min: Point, max: Point, h: f64) -> impl Iterator<Item = Point> {
    let (w, ht) = (max.x - min.x, max.y - min.y);
    let rows = (ht / (h * 3f64.sqrt() / 2.0)).ceil().max(1.0) as usize;
    let cols = (w / h).ceil().max(1.0) as usize;
    let (dx, dy) = (w / cols as f64, ht / rows as f64);
    (0..=rows).flat_map(move |r| {
        let y = min.y + r as f64 * dy;
        let offset = if r % 2 == 1 { 0.5 * dx } else { 0.0 };
        (0..=cols)
            .map(move |c| Point::new(min.x + offset + c as f64 * dx, y))
            .filter(move |p| p.x <= max.x + 1e-12)
    })
}
