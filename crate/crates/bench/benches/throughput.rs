use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use lbmesh_bench::simulate;
use lbmesh_core::meanfield::{fluid_jsq_d, TRUNCATION};
use lbmesh_core::{EventQueue, PolicyKind};
use std::hint::black_box;

fn event_queue(c: &mut Criterion) {
    c.bench_function("event_queue_push_pop_1e4", |b| {
        b.iter(|| {
            let mut q = EventQueue::new();
            for i in 0..10_000u64 {
                q.schedule(((i * 7919) % 10_007) as f64, i).unwrap();
            }
            while let Some(e) = q.pop() {
                black_box(e);
            }
        })
    });
}

fn dispatch(c: &mut Criterion) {
    let mut g = c.benchmark_group("dispatch_n1e4_h5");
    g.sample_size(10);
    for (name, kind, d) in
        [("random", PolicyKind::Random, 1), ("jsq_d2", PolicyKind::JsqD, 2), ("jsq", PolicyKind::Jsq, 1)]
    {
        // elements are expected arrivals λNh
        g.throughput(Throughput::Elements(45_000));
        g.bench_with_input(BenchmarkId::from_parameter(name), &(kind, d), |b, &(kind, d)| {
            b.iter(|| simulate(10_000, 0.9, kind, d, 5.0, 7))
        });
    }
    g.finish();
}

fn fluid(c: &mut Criterion) {
    let q0 = vec![0.0; TRUNCATION];
    c.bench_function("fluid_jsq_d_rk4_h10", |b| b.iter(|| fluid_jsq_d(black_box(&q0), 0.9, 2, 10.0, 1e-3).unwrap()));
}

criterion_group!(benches, event_queue, dispatch, fluid);
criterion_main!(benches);
