use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use edgeopc::fixtures::make_fixture;
use edgeopc::geometry::segment_edges;
use edgeopc::litho::{default_corners, make_synthetic_kernels};
use edgeopc::loss::{total_loss_and_grad, ForwardPass};
use edgeopc::raster::rasterize;
use edgeopc::{par, EpeSamplePlan, LossWeights, Simulator};

fn bench_litho(c: &mut Criterion) {
    let l = make_fixture("square_and_lines", 1).unwrap();
    let s = segment_edges(&l.polygons, 80.0).unwrap();
    let mask = rasterize(&s, l.width, l.height).unwrap();
    let plan = EpeSamplePlan::from_target(&s, 15, 50.0, l.width, l.height).unwrap();
    let ks = make_synthetic_kernels(255, 3, 1.35).unwrap();
    let sim = Simulator::new(std::slice::from_ref(&ks), l.width, l.height).unwrap();
    let corners = default_corners();
    let weights = LossWeights::default();
    let threads = par::current_threads();

    let mut g = c.benchmark_group("litho_512");
    g.sample_size(10);
    for t in [1, threads] {
        g.bench_with_input(BenchmarkId::new("intensity", t), &t, |b, &t| {
            par::with_threads(t, || b.iter(|| sim.intensity(black_box(&mask), 0).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("loss_and_grad", t), &t, |b, &t| {
            par::with_threads(t, || {
                b.iter(|| {
                    let fwd = ForwardPass::run(&sim, black_box(&mask), &corners, 50.0, 0.225).unwrap();
                    total_loss_and_grad(&sim, &fwd, &mask, &plan, &weights).unwrap()
                })
            })
        });
        if threads == 1 {
            break;
        }
    }
    g.finish();
}

criterion_group!(benches, bench_litho);
criterion_main!(benches);
