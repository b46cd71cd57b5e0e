//! Small bundled models with quadrature grids that cover their posteriors.

use crate::areal::AdjacencyGraph;
use crate::model::{LatentModel, Likelihood, LogGammaPrior, ObservationRow};

use super::GridSpec;

pub struct Toy {
    pub name: &'static str,
    pub model: LatentModel,
    /// Grid over (free hyperparameters, free latent coordinates).
    pub dense: Option<GridSpec>,
    /// Grid over the free hyperparameters only, for nested quadrature.
    pub nested: Option<GridSpec>,
}

fn row(y: f64, exposure: f64, terms: Vec<(usize, f64)>) -> ObservationRow {
    ObservationRow { y, exposure, terms }
}

/// `η ~ N(0, 1)`, `y = 3 ~ Poisson(e^η)`.
pub fn scalar_poisson() -> Toy {
    let mut m = LatentModel::new(vec![], Likelihood::Poisson);
    m.add_iid("eta", 1, LogGammaPrior::default()).unwrap();
    m.fix_hyper("eta", vec![0.0]);
    m.rows.push(row(3.0, 1.0, vec![(0, 1.0)]));
    Toy {
        name: "scalar_poisson",
        model: m,
        dense: Some(GridSpec::new(vec![(-6.0, 6.0, 4001)])),
        nested: None,
    }
}

/// `η ~ N(0, 1)` shared by three Poisson counts with unequal exposures.
pub fn poisson_three() -> Toy {
    let mut m = LatentModel::new(vec![], Likelihood::Poisson);
    m.add_iid("eta", 1, LogGammaPrior::default()).unwrap();
    m.fix_hyper("eta", vec![0.0]);
    for (y, e) in [(1.0, 1.0), (4.0, 2.0), (0.0, 0.5)] {
        m.rows.push(row(y, e, vec![(0, 1.0)]));
    }
    Toy {
        name: "poisson_three",
        model: m,
        dense: Some(GridSpec::new(vec![(-6.0, 6.0, 4001)])),
        nested: None,
    }
}

/// Intercept plus an intrinsic CAR effect on a 3-node path with a free
/// precision; Poisson counts with equal expected values.
pub fn bym_path3() -> Toy {
    let mut m = LatentModel::new(vec!["intercept".into()], Likelihood::Poisson);
    let off = m
        .add_icar("v", AdjacencyGraph::path(3), LogGammaPrior { shape: 1.0, rate: 1.0 })
        .unwrap();
    for (i, y) in [4.0, 9.0, 2.0].into_iter().enumerate() {
        m.rows.push(row(y, 5.0, vec![(0, 1.0), (off + i, 1.0)]));
    }
    Toy {
        name: "bym_path3",
        model: m,
        dense: Some(GridSpec::new(vec![
            (-7.0, 6.0, 66),
            (-1.6, 1.4, 41),
            (-2.6, 2.6, 41),
            (-2.6, 2.6, 41),
        ])),
        nested: None,
    }
}

/// Intercept, intrinsic CAR and iid effects on a 4-cycle with both
/// precisions free; three Gaussian observations per region.
pub fn bym_cycle4() -> Toy {
    let mut m = LatentModel::new(vec!["intercept".into()], Likelihood::Gaussian { precision: 4.0 });
    let prior = LogGammaPrior { shape: 1.0, rate: 1.0 };
    let v = m.add_icar("v", AdjacencyGraph::cycle(4), prior).unwrap();
    let nu = m.add_iid("nu", 4, prior).unwrap();
    let ys = [[1.9, 2.4, 2.2], [0.6, 1.1, 0.4], [1.5, 1.2, 1.9], [3.1, 2.6, 2.9]];
    for (i, obs) in ys.iter().enumerate() {
        for &y in obs {
            m.rows.push(row(y, 1.0, vec![(0, 1.0), (v + i, 1.0), (nu + i, 1.0)]));
        }
    }
    Toy {
        name: "bym_cycle4",
        model: m,
        dense: None,
        nested: Some(GridSpec::new(vec![(-6.0, 7.0, 50), (-6.0, 7.0, 50)])),
    }
}

pub fn all() -> Vec<Toy> {
    vec![scalar_poisson(), poisson_three(), bym_path3(), bym_cycle4()]
}
