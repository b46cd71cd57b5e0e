use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spatinla_bench::{halton_points, unit_mesh};
use spatinla_core::mesh::{fem_matrices, project, triangulate};

fn meshing(c: &mut Criterion) {
    let mut group = c.benchmark_group("mesh");
    for h in [0.1, 0.05] {
        group.bench_with_input(BenchmarkId::new("build", h), &h, |b, &h| b.iter(|| unit_mesh(h)));
        let mesh = unit_mesh(h);
        group.bench_with_input(BenchmarkId::new("fem", h), &mesh, |b, m| b.iter(|| fem_matrices(m).unwrap()));
        let pts = halton_points(1000);
        group.bench_with_input(BenchmarkId::new("project_1000", h), &mesh, |b, m| {
            b.iter(|| project(m, &pts).unwrap())
        });
    }
    let pts = halton_points(5000);
    group.bench_function("triangulate_5000", |b| b.iter(|| triangulate(&pts).unwrap()));
    group.finish();
}

criterion_group!(benches, meshing);
criterion_main!(benches);
