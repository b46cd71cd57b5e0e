use std::collections::BTreeSet;

/// Minimum-degree elimination ordering on the graph given by `adjacency`.
///
/// Returns `perm` with `perm[k]` the original index eliminated at step `k`.
/// Ties go to the lowest original index, so the ordering is deterministic.
/// The elimination graph is tracked explicitly; at the problem sizes this
/// crate targets (a few thousand nodes) that is cheaper than maintaining a
/// quotient graph.
pub fn minimum_degree(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let mut adj: Vec<Vec<usize>> = adjacency
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut a: Vec<usize> = a.iter().copied().filter(|&j| j != i).collect();
            a.sort_unstable();
            a.dedup();
            a
        })
        .collect();
    let mut queue: BTreeSet<(usize, usize)> = adj.iter().enumerate().map(|(i, a)| (a.len(), i)).collect();
    let mut eliminated = vec![false; n];
    let mut perm = Vec::with_capacity(n);

    while let Some((_, p)) = queue.pop_first() {
        eliminated[p] = true;
        perm.push(p);
        let clique = std::mem::take(&mut adj[p]);
        for &u in &clique {
            queue.remove(&(adj[u].len(), u));
            adj[u] = merge_without(&adj[u], &clique, p, u);
            queue.insert((adj[u].len(), u));
        }
        debug_assert!(clique.iter().all(|&u| !eliminated[u]));
    }
    perm
}

/// Sorted union of `a` and `b`, with `skip_a` and `skip_b` removed.
fn merge_without(a: &[usize], b: &[usize], skip_a: usize, skip_b: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x == y => {
                i += 1;
                j += 1;
                x
            }
            (Some(&x), Some(&y)) if x < y => {
                i += 1;
                x
            }
            (Some(_), Some(&y)) => {
                j += 1;
                y
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        if next != skip_a && next != skip_b {
            out.push(next);
        }
    }
    out
}

pub fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (k, &p) in perm.iter().enumerate() {
        inv[p] = k;
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn is_a_permutation() {
        // 4x4 grid graph
        let idx = |r: usize, c: usize| r * 4 + c;
        let mut adj = vec![Vec::new(); 16];
        for r in 0..4 {
            for c in 0..4 {
                if r + 1 < 4 {
                    adj[idx(r, c)].push(idx(r + 1, c));
                    adj[idx(r + 1, c)].push(idx(r, c));
                }
                if c + 1 < 4 {
                    adj[idx(r, c)].push(idx(r, c + 1));
                    adj[idx(r, c + 1)].push(idx(r, c));
                }
            }
        }
        let perm = minimum_degree(&adj);
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..16).collect::<Vec<_>>());
        // corners have degree 2; the lowest-index corner goes first
        assert_eq!(perm[0], 0);
        let inv = inverse_permutation(&perm);
        for (k, &p) in perm.iter().enumerate() {
            assert_eq!(inv[p], k);
        }
    }

    #[test]
    fn star_center_eliminated_last() {
        let mut adj = vec![Vec::new(); 6];
        for leaf in 1..6 {
            adj[0].push(leaf);
            adj[leaf].push(0);
        }
        let perm = minimum_degree(&adj);
        assert!(perm[..4].iter().all(|&p| p != 0));
    }
}
