use std::io::Write;

use crate::geometry::{Polygon, Segment};

use super::ArealError;

/// Snapping tolerance for shared borders.
pub const BORDER_TOL: f64 = 1e-9;

/// Undirected neighbour graph over regions, with sorted neighbour lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyGraph {
    neighbours: Vec<Vec<usize>>,
}

impl AdjacencyGraph {
    /// From an undirected edge list; duplicates are merged.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, ArealError> {
        let mut neighbours = vec![Vec::new(); n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(ArealError::InvalidEdge(i, j));
            }
            if i == j {
                return Err(ArealError::SelfLoop(i));
            }
            neighbours[i].push(j);
            neighbours[j].push(i);
        }
        for nb in neighbours.iter_mut() {
            nb.sort_unstable();
            nb.dedup();
        }
        Ok(Self { neighbours })
    }

    /// Path graph 0 - 1 - ... - (n-1).
    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_edges(n, &edges).expect("valid path")
    }

    /// Cycle graph of length n ≥ 3.
    pub fn cycle(n: usize) -> Self {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::from_edges(n, &edges).expect("valid cycle")
    }

    pub fn n(&self) -> usize {
        self.neighbours.len()
    }

    pub fn neighbours(&self, i: usize) -> &[usize] {
        &self.neighbours[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbours[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbours.iter().map(Vec::len).collect()
    }

    /// Edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, nb) in self.neighbours.iter().enumerate() {
            out.extend(nb.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }

    /// Connected-component label per region; labels are numbered in order
    /// of each component's smallest region index.
    pub fn components(&self) -> Vec<usize> {
        let n = self.n();
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = next;
            stack.push(s);
            while let Some(v) = stack.pop() {
                for &u in &self.neighbours[v] {
                    if label[u] == usize::MAX {
                        label[u] = next;
                        stack.push(u);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn n_components(&self) -> usize {
        self.components().iter().max().map_or(0, |m| m + 1)
    }

    /// One `i j` line per edge (0-indexed), preceded by a `# n` header.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# n {}", self.n())?;
        for (i, j) in self.edges() {
            writeln!(w, "{i} {j}")?;
        }
        Ok(())
    }
}

/// Length of the collinear overlap of two segments, or 0 when they are not
/// collinear within [`BORDER_TOL`].
fn shared_length(s: &Segment, t: &Segment) -> f64 {
    let len = s.length();
    if len <= BORDER_TOL {
        return 0.0;
    }
    let (ux, uy) = ((s.b.x - s.a.x) / len, (s.b.y - s.a.y) / len);
    let off = |p: crate::geometry::Point| ((p.x - s.a.x) * uy - (p.y - s.a.y) * ux).abs();
    if off(t.a) > BORDER_TOL || off(t.b) > BORDER_TOL {
        return 0.0;
    }
    let along = |p: crate::geometry::Point| (p.x - s.a.x) * ux + (p.y - s.a.y) * uy;
    let (ta, tb) = (along(t.a), along(t.b));
    (ta.max(tb).min(len) - ta.min(tb).max(0.0)).max(0.0)
}

/// Rook contiguity: regions are neighbours when their boundaries share a
/// stretch of positive length. Corner contact does not count.
pub fn adjacency_from_polygons(regions: &[Vec<Polygon>]) -> Result<AdjacencyGraph, ArealError> {
    if regions.len() < 2 {
        return Err(ArealError::TooFewRegions(regions.len()));
    }
    struct Seg {
        region: usize,
        seg: Segment,
        xmin: f64,
        xmax: f64,
        ymin: f64,
        ymax: f64,
    }
    let mut segs = Vec::new();
    for (r, parts) in regions.iter().enumerate() {
        for poly in parts {
            if poly.exterior.len() < 3 {
                return Err(ArealError::DegenerateRing(r));
            }
            for seg in poly.segments() {
                segs.push(Seg {
                    region: r,
                    seg,
                    xmin: seg.a.x.min(seg.b.x),
                    xmax: seg.a.x.max(seg.b.x),
                    ymin: seg.a.y.min(seg.b.y),
                    ymax: seg.a.y.max(seg.b.y),
                });
            }
        }
    }
    segs.sort_by(|a, b| a.xmin.total_cmp(&b.xmin));
    let mut edges = Vec::new();
    for (k, a) in segs.iter().enumerate() {
        for b in &segs[k + 1..] {
            if b.xmin > a.xmax + BORDER_TOL {
                break;
            }
            if a.region == b.region || b.ymin > a.ymax + BORDER_TOL || a.ymin > b.ymax + BORDER_TOL {
                continue;
            }
            let (long, short) = if a.seg.length() >= b.seg.length() { (a, b) } else { (b, a) };
            if shared_length(&long.seg, &short.seg) > BORDER_TOL {
                edges.push((a.region.min(b.region), a.region.max(b.region)));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    AdjacencyGraph::from_edges(regions.len(), &edges)
}
