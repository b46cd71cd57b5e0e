use crate::sparse::SparseSymMatrix;

use super::{MeshError, TriMesh};

/// Lumped mass and stiffness matrices of piecewise-linear elements.
#[derive(Debug, Clone)]
pub struct FemMatrices {
    /// Diagonal of the lumped mass matrix: `C_ii = Σ_{T ∋ i} |T| / 3`.
    pub mass: Vec<f64>,
    /// `G_ij = Σ_T ∫_T ∇φ_i · ∇φ_j`.
    pub stiffness: SparseSymMatrix,
}

impl FemMatrices {
    pub fn mass_matrix(&self) -> SparseSymMatrix {
        SparseSymMatrix::from_diagonal(&self.mass)
    }
}

pub fn fem_matrices(mesh: &TriMesh) -> Result<FemMatrices, MeshError> {
    let nv = mesh.n_vertices();
    let mut mass = vec![0.0; nv];
    let mut t = Vec::with_capacity(6 * mesh.triangles().len());
    for (ti, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.triangle_area(ti);
        if !(area > 1e-12) {
            return Err(MeshError::DegenerateTriangle(ti));
        }
        let p = mesh.corners(ti);
        // e[i] is the edge opposite vertex i; ∇φ_i = rot90(e[i]) / (2|T|)
        let e: [(f64, f64); 3] = std::array::from_fn(|i| {
            let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
            (b.x - a.x, b.y - a.y)
        });
        for i in 0..3 {
            mass[tri[i]] += area / 3.0;
            for j in 0..=i {
                let dot = e[i].0 * e[j].0 + e[i].1 * e[j].1;
                t.push((tri[i], tri[j], dot / (4.0 * area)));
            }
        }
    }
    let stiffness = SparseSymMatrix::from_triplets(nv, &t).map_err(|_| MeshError::DegenerateTriangle(0))?;
    Ok(FemMatrices { mass, stiffness })
}
