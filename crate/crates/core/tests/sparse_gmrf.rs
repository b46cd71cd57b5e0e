use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use spatinla_core::sparse::{cholesky, constrain, LinearConstraints, SparseSymMatrix};

/// Random sparse symmetric matrix made SPD by diagonal dominance.
fn random_spd(n: usize, seed: u64, density: f64) -> SparseSymMatrix {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64) / ((1u64 << 53) as f64)
    };
    let mut t = Vec::new();
    let mut row_abs = vec![0.0; n];
    for j in 0..n {
        for i in j + 1..n {
            if next() < density {
                let v = 2.0 * next() - 1.0;
                t.push((i, j, v));
                row_abs[i] += v.abs();
                row_abs[j] += v.abs();
            }
        }
    }
    for (i, r) in row_abs.iter().enumerate() {
        t.push((i, i, r + 0.5 + next()));
    }
    SparseSymMatrix::from_triplets(n, &t).unwrap()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

#[test]
fn random_10x10_solve_matches_dense_elimination() {
    let q = random_spd(10, 7, 0.4);
    let b: Vec<f64> = (0..10).map(|i| (i as f64 * 0.37).sin()).collect();
    let x = cholesky(&q).unwrap().solve(&b).unwrap();
    let dense = q.to_dense().lu().solve(&DVector::from_row_slice(&b)).unwrap();
    for i in 0..10 {
        assert!((x[i] - dense[i]).abs() <= 1e-8, "{i}: {} vs {}", x[i], dense[i]);
    }
}

#[test]
fn random_20x20_marginal_variances_match_dense_inverse() {
    let q = random_spd(20, 11, 0.2);
    let v = cholesky(&q).unwrap().marginal_variances();
    let inv = q.to_dense().try_inverse().unwrap();
    for i in 0..20 {
        assert!((v[i] - inv[(i, i)]).abs() <= 1e-8);
    }
}

#[test]
fn kronecker_logdet_is_sum_of_component_logdets() {
    let a = random_spd(4, 3, 0.6);
    let b = random_spd(5, 5, 0.5);
    let (da, db) = (a.to_dense(), b.to_dense());
    let kron = da.kronecker(&db);
    let k = SparseSymMatrix::from_dense(&kron, 0.0);
    let la = cholesky(&a).unwrap().logdet();
    let lb = cholesky(&b).unwrap().logdet();
    let lk = cholesky(&k).unwrap().logdet();
    // log|A ⊗ B| = n_B log|A| + n_A log|B|
    assert!((lk - (5.0 * la + 4.0 * lb)).abs() <= 1e-9);
}

#[test]
fn constrained_mean_satisfies_constraints() {
    let q = random_spd(12, 19, 0.3);
    let f = cholesky(&q).unwrap();
    let mut c = LinearConstraints::new();
    c.push((0..6).map(|j| (j, 1.0)).collect(), 0.0);
    c.push((6..12).map(|j| (j, 1.0)).collect(), 1.5);
    let mean: Vec<f64> = (0..12).map(|i| i as f64 - 4.0).collect();
    let out = constrain(&f, &mean, &c).unwrap();
    for r in c.residual(&out.mean) {
        assert!(r.abs() <= 1e-8);
    }
    // against the dense conditional covariance Σ - Σ A' (A Σ A')^{-1} A Σ
    let sigma = q.to_dense().try_inverse().unwrap();
    let mut a = DMatrix::zeros(2, 12);
    for (r, row) in c.rows.iter().enumerate() {
        for &(j, v) in row {
            a[(r, j)] = v;
        }
    }
    let s = &a * &sigma * a.transpose();
    let cond = &sigma - &sigma * a.transpose() * s.try_inverse().unwrap() * &a * &sigma;
    for i in 0..12 {
        assert!((out.variances[i] - cond[(i, i)]).abs() <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn factor_reconstructs_input(n in 2usize..50, seed in any::<u64>(), density in 0.02f64..0.3) {
        let q = random_spd(n, seed, density);
        let f = cholesky(&q).unwrap();
        // P Q P' = L L': rebuild L L' densely and compare against the permuted input
        let mut l = DMatrix::zeros(n, n);
        for (i, j, v) in f.lower_entries() {
            prop_assert!(i >= j);
            if i == j {
                prop_assert!(v > 0.0);
            }
            l[(i, j)] = v;
        }
        let llt = &l * l.transpose();
        let perm = f.permutation();
        let max_q = q.max_abs();
        for a in 0..n {
            for b in 0..n {
                let diff = (llt[(a, b)] - q.get(perm[a], perm[b])).abs();
                prop_assert!(diff <= 1e-9 * max_q);
            }
        }
    }

    #[test]
    fn solve_inverts_multiply(n in 2usize..40, seed in any::<u64>(), xs in proptest::collection::vec(-1.0f64..1.0, 40)) {
        let q = random_spd(n, seed, 0.15);
        let x = &xs[..n];
        let b = q.mul_vec(x);
        let back = cholesky(&q).unwrap().solve(&b).unwrap();
        let err: Vec<f64> = back.iter().zip(x).map(|(a, b)| a - b).collect();
        prop_assert!(inf_norm(&err) <= 1e-8);
    }

    #[test]
    fn marginal_variances_equal_dense_diagonal(n in 1usize..=50, seed in any::<u64>()) {
        let q = random_spd(n, seed, 0.1);
        let v = cholesky(&q).unwrap().marginal_variances();
        let inv = q.to_dense().try_inverse().unwrap();
        for i in 0..n {
            prop_assert!((v[i] - inv[(i, i)]).abs() <= 1e-10 * inv[(i, i)].abs().max(1.0));
        }
    }
}
