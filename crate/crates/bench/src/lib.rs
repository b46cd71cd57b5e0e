//! Fixtures shared by the benchmarks.

use spatinla_core::geometry::{Point, Polygon};
use spatinla_core::mesh::{build_mesh, dual_weights, fem_matrices, project, MeshParams, TriMesh};
use spatinla_core::model::{lgcp_augment, LatentModel, Likelihood};
use spatinla_core::sparse::SparseSymMatrix;
use spatinla_core::spde::{MaternParams, PCPrior, SpdeOperator, NU};

pub fn unit_mesh(h: f64) -> TriMesh {
    build_mesh(&Polygon::unit_square(), MeshParams::new(h, 4.0 * h)).expect("unit-square mesh")
}

/// SPDE precision with range 0.3 and unit sd on `mesh`.
pub fn spde_precision(mesh: &TriMesh) -> SparseSymMatrix {
    let p = MaternParams::from_range(NU, 0.3, 1.0);
    SpdeOperator::from_fem(&fem_matrices(mesh).expect("fem"))
        .expect("operator")
        .precision(p.kappa, p.tau())
        .expect("precision")
}

/// `n` points of the (2, 3) Halton sequence in the unit square.
pub fn halton_points(n: usize) -> Vec<Point> {
    let radical = |mut i: usize, base: usize| {
        let (mut f, mut r) = (1.0, 0.0);
        while i > 0 {
            f /= base as f64;
            r += f * (i % base) as f64;
            i /= base;
        }
        r
    };
    (1..=n).map(|i| Point::new(radical(i, 2), radical(i, 3))).collect()
}

/// Intercept plus SPDE field with the augmented Cox-process rows.
pub fn lgcp_model(mesh: &TriMesh, points: &[Point]) -> LatentModel {
    let window = Polygon::unit_square();
    let fem = fem_matrices(mesh).expect("fem");
    let mut m = LatentModel::new(vec!["intercept".into()], Likelihood::Poisson);
    let prior = PCPrior::new(0.05, 0.01, 1.0, 0.01).expect("prior");
    let field = m.add_spde("field", SpdeOperator::from_fem(&fem).expect("operator"), prior).expect("field");
    let projector = project(mesh, points).expect("points inside the mesh");
    m.rows = lgcp_augment(Some(0), Some(field), &[], &dual_weights(mesh, &window), &projector);
    m
}
