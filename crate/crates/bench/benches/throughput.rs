use aerodet::model::{Detector, ModelConfig};
use aerodet_bench::frames;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn forward(c: &mut Criterion) {
    let tau = 3;
    let (detector, params) = Detector::init::<f32>(&ModelConfig::toy(), tau, 0).unwrap();
    let mut group = c.benchmark_group("detector_forward");
    group.sample_size(10);
    for side in [64, 320, 640] {
        let input = frames(tau, side);
        group.throughput(Throughput::Elements(tau as u64));
        group.bench_with_input(BenchmarkId::from_parameter(side), &input, |b, x| {
            b.iter(|| detector.predict(&params, x.clone()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, forward);
criterion_main!(benches);
