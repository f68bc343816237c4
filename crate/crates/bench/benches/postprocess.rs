use aerodet::head::nms;
use aerodet::metrics::{average_precision_11pt, match_detections};
use aerodet_bench::{random_detections, random_ground_truth};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn suppression(c: &mut Criterion) {
    let mut group = c.benchmark_group("nms");
    for n in [50, 500, 5000] {
        let dets = random_detections(n, 640.0, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &dets, |b, d| b.iter(|| nms(d, 0.001, 0.6)));
    }
    group.finish();
}

fn scoring(c: &mut Criterion) {
    let mut group = c.benchmark_group("match_and_ap");
    for n in [100, 1000] {
        let dets = random_detections(n, 640.0, 2);
        let gts = random_ground_truth(n / 10, 640.0, 3);
        group.bench_with_input(BenchmarkId::from_parameter(n), &(dets, gts), |b, (d, g)| {
            b.iter(|| average_precision_11pt(&match_detections(d, g, 0.5)))
        });
    }
    group.finish();
}

criterion_group!(benches, suppression, scoring);
criterion_main!(benches);
