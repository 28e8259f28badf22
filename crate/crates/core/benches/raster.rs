use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use edgeopc::fixtures::{make_fixture, oracle_rasterize};
use edgeopc::geometry::segment_edges;
use edgeopc::par;
use edgeopc::raster::{rasterize, rasterize_serial};

fn bench_raster(c: &mut Criterion) {
    let mut g = c.benchmark_group("rasterize");
    g.sample_size(20);
    for scale in [1usize, 4] {
        let l = make_fixture("square_and_lines", scale).unwrap();
        let s = segment_edges(&l.polygons, 80.0).unwrap();
        let n = l.width;
        g.bench_with_input(BenchmarkId::new("parallel", n), &s, |b, s| {
            b.iter(|| rasterize(black_box(s), n, n).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("parallel_1_thread", n), &s, |b, s| {
            par::with_threads(1, || b.iter(|| rasterize(black_box(s), n, n).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("serial", n), &s, |b, s| {
            b.iter(|| rasterize_serial(black_box(s), n, n).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("oracle", n), &l.polygons, |b, p| {
            b.iter(|| oracle_rasterize(black_box(p), n, n))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_raster);
criterion_main!(benches);
