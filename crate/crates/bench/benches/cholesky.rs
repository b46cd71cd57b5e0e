use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spatinla_bench::{spde_precision, unit_mesh};
use spatinla_core::sparse::{cholesky, SymbolicCholesky};

fn factorization(c: &mut Criterion) {
    let mut group = c.benchmark_group("cholesky");
    for h in [0.1, 0.05, 0.025] {
        let q = spde_precision(&unit_mesh(h));
        let n = q.n();
        group.bench_with_input(BenchmarkId::new("full", n), &q, |b, q| b.iter(|| cholesky(q).unwrap()));
        let symbolic = SymbolicCholesky::analyze(&q);
        group.bench_with_input(BenchmarkId::new("numeric", n), &q, |b, q| b.iter(|| symbolic.factor(q).unwrap()));
        let f = cholesky(&q).unwrap();
        group.bench_with_input(BenchmarkId::new("marginal_variances", n), &f, |b, f| {
            b.iter(|| f.marginal_variances())
        });
    }
    group.finish();
}

criterion_group!(benches, factorization);
criterion_main!(benches);
