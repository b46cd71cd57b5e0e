use crate::sparse::{cholesky, LinearConstraints, SparseSymMatrix};

use super::{AdjacencyGraph, ArealError};

/// ICAR structure matrix: `R_ii = d_i`, `R_ij = -1` for neighbours.
pub fn icar_structure(graph: &AdjacencyGraph) -> Result<SparseSymMatrix, ArealError> {
    if let Some(i) = (0..graph.n()).find(|&i| graph.degree(i) == 0) {
        return Err(ArealError::IsolatedRegion(i));
    }
    let mut t: Vec<(usize, usize, f64)> = (0..graph.n()).map(|i| (i, i, graph.degree(i) as f64)).collect();
    t.extend(graph.edges().into_iter().map(|(i, j)| (j, i, -1.0)));
    Ok(SparseSymMatrix::from_triplets(graph.n(), &t).expect("graph indices are in range"))
}

/// One sum-to-zero row per connected component, over local indices
/// shifted by `offset`.
pub fn sum_to_zero_constraints(graph: &AdjacencyGraph, offset: usize) -> LinearConstraints {
    let labels = graph.components();
    let n_comp = labels.iter().max().map_or(0, |m| m + 1);
    let mut c = LinearConstraints::new();
    for comp in 0..n_comp {
        let row: Vec<(usize, f64)> = (0..graph.n())
            .filter(|&i| labels[i] == comp)
            .map(|i| (i + offset, 1.0))
            .collect();
        c.push(row, 0.0);
    }
    c
}

/// Log of the product of the non-zero eigenvalues of `R`. Per component
/// this is `log n_c` plus the log-determinant of `R_c` with one node
/// removed (the matrix-tree theorem).
pub fn icar_log_pdet(graph: &AdjacencyGraph) -> Result<f64, ArealError> {
    let r = icar_structure(graph)?;
    let labels = graph.components();
    let n_comp = labels.iter().max().map_or(0, |m| m + 1);
    let mut total = 0.0;
    for comp in 0..n_comp {
        let members: Vec<usize> = (0..graph.n()).filter(|&i| labels[i] == comp).collect();
        total += (members.len() as f64).ln();
        if members.len() == 1 {
            continue;
        }
        // drop the first member, keep the rest in order
        let mut local = vec![usize::MAX; graph.n()];
        for (k, &v) in members[1..].iter().enumerate() {
            local[v] = k;
        }
        let t: Vec<(usize, usize, f64)> = r
            .triplets()
            .filter(|&(i, j, _)| local[i] != usize::MAX && local[j] != usize::MAX)
            .map(|(i, j, v)| (local[i], local[j], v))
            .collect();
        let minor = SparseSymMatrix::from_triplets(members.len() - 1, &t).expect("local indices in range");
        total += cholesky(&minor).map_err(|_| ArealError::SingularMinor(comp))?.logdet();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_node_path() {
        let r = icar_structure(&AdjacencyGraph::path(2)).unwrap();
        assert_eq!(r.to_dense(), nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn four_cycle_spectrum() {
        let r = icar_structure(&AdjacencyGraph::cycle(4)).unwrap();
        let mut ev: Vec<f64> = r.to_dense().symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        for (got, want) in ev.iter().zip([0.0, 2.0, 2.0, 4.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        // pdet = 2·2·4
        assert!((icar_log_pdet(&AdjacencyGraph::cycle(4)).unwrap() - 16f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_pdet_on_disconnected_graph() {
        // path of 3 (eigenvalues 1, 3) plus a pair (eigenvalue 2)
        let g = AdjacencyGraph::from_edges(5, &[(0, 1), (1, 2), (3, 4)]).unwrap();
        assert!((icar_log_pdet(&g).unwrap() - 6f64.ln()).abs() < 1e-12);
        let c = sum_to_zero_constraints(&g, 10);
        assert_eq!(c.len(), 2);
        assert_eq!(c.rows[1], vec![(13, 1.0), (14, 1.0)]);
    }

    #[test]
    fn isolated_region_is_reported() {
        let g = AdjacencyGraph::from_edges(3, &[(0, 2)]).unwrap();
        assert_eq!(icar_structure(&g).unwrap_err(), ArealError::IsolatedRegion(1));
    }
}
