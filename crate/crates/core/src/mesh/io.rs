//! Plain-text mesh exchange: `v x y` vertex lines followed by `t i j k`
//! triangle lines (0-indexed). Lines starting with `#` are comments.

use std::io::{BufRead, Write};

use crate::geometry::Point;

use super::{MeshError, TriMesh};

impl TriMesh {
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# vertices {} triangles {}", self.n_vertices(), self.triangles().len())?;
        for p in self.vertices() {
            writeln!(w, "v {} {}", p.x, p.y)?;
        }
        for t in self.triangles() {
            writeln!(w, "t {} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }

    /// Reads the text format. All vertices are flagged interior; call
    /// [`TriMesh::flag_interior`] with the study window to refine that.
    pub fn read_text<R: BufRead>(r: R) -> Result<Self, MeshError> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let bad = |message: String| MeshError::Parse {
                line: lineno + 1,
                message,
            };
            let line = line.map_err(|e| bad(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("v") => {
                    let mut coord = || -> Result<f64, MeshError> {
                        parts
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| bad("expected `v x y`".into()))
                    };
                    let (x, y) = (coord()?, coord()?);
                    vertices.push(Point::new(x, y));
                }
                Some("t") => {
                    let mut idx = || -> Result<usize, MeshError> {
                        parts
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| bad("expected `t i j k`".into()))
                    };
                    triangles.push([idx()?, idx()?, idx()?]);
                }
                Some(other) => return Err(bad(format!("unknown record `{other}`"))),
                None => {}
            }
        }
        let n = vertices.len();
        TriMesh::new(vertices, triangles, vec![true; n])
    }
}
