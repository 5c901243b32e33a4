use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use flowguard_bench::trace;
use flowguard_core::features::{extract, shannon_entropy};
use flowguard_core::WindowConfig;

fn feature_extraction(c: &mut Criterion) {
    let t = trace();
    let mut group = c.benchmark_group("extract");
    group.throughput(Throughput::Elements(t.flows.len() as u64));
    group.bench_function("default_scenario", |b| {
        b.iter(|| extract(black_box(&t.flows), black_box(&t.telemetry), &WindowConfig::default()).unwrap())
    });
    group.finish();

    let counts: Vec<u64> = (0..64).map(|i| (i * 37 % 101) as u64).collect();
    c.bench_function("entropy/64_bins", |b| b.iter(|| shannon_entropy(black_box(&counts))));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = feature_extraction
}
criterion_main!(benches);
