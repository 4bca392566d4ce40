//! Compares the parallel and sequential point maps on a realistic workload:
//! frame construction plus the bending identity residuals at every sample
//! point of a catalog scene.

use bendings::bending::BendingFrame;
use bendings::catalog;
use bendings::sampling::{map_points, map_points_sequential, sample_points};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn identity_residuals(c: &mut Criterion) {
    let scene = catalog::scene_by_name("cylinder_bending").expect("catalog scene");
    let comp = scene.compile().expect("scene compiles");
    let eval = |x: &[f64]| {
        let fr = comp.chart.frame_at(x).unwrap();
        let bf = BendingFrame::new(&fr, &comp.tau).unwrap();
        bf.skew_residual()
            .max(bf.tangential_part_residual())
            .max(bf.exchange_residual())
            .max(bf.beta_codazzi_residual())
            .max(bf.b_cyclic_residual())
    };

    let mut group = c.benchmark_group("identity_residuals");
    for &count in &[8usize, 32, 128] {
        let points = sample_points(&scene.chart_box, count, 0);
        group.bench_with_input(BenchmarkId::new("parallel", count), &points, |b, pts| {
            b.iter(|| black_box(map_points(pts, eval)));
        });
        group.bench_with_input(BenchmarkId::new("sequential", count), &points, |b, pts| {
            b.iter(|| black_box(map_points_sequential(pts, eval)));
        });
    }
    group.finish();
}

criterion_group!(benches, identity_residuals);
criterion_main!(benches);
