use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use swflow::data::{gmm_sample, random_gmm_spec};
use swflow::rng::substream;
use swflow::{
    build_quantile_table, build_sketch, drift, euler_step, sample_directions, sw2_estimate, FlowConfig, PointCloud,
};

fn target(p: usize) -> PointCloud {
    let spec = random_gmm_spec(2, 10, 6.0, 11).unwrap();
    gmm_sample(&spec, p).unwrap()
}

fn quantile_table(c: &mut Criterion) {
    let mut group = c.benchmark_group("quantile_table");
    for n in [1_000usize, 10_000, 100_000] {
        let samples: Vec<f64> = target(n).as_slice().iter().step_by(2).copied().collect();
        group.throughput(Throughput::Elements(samples.len() as u64));
        group.bench_with_input(BenchmarkId::from_parameter(samples.len()), &samples, |b, s| {
            b.iter(|| build_quantile_table(black_box(s), 100).unwrap())
        });
    }
    group.finish();
}

fn flow_step(c: &mut Criterion) {
    let data = target(50_000);
    let dirs = sample_directions(2, 30, 1).unwrap();
    let sketch = build_sketch(&data, &dirs, 100, None, 1).unwrap();
    let cfg = FlowConfig { n_particles: 5000, ..FlowConfig::default() };
    let cloud = PointCloud::standard_gaussian(cfg.n_particles, 2, &substream(0, "init")).unwrap();

    c.bench_function("euler_step/n5000_theta30", |b| {
        b.iter(|| euler_step(black_box(&cloud), &sketch, &cfg).unwrap())
    });

    let (_, frame) = euler_step(&cloud, &sketch, &cfg).unwrap();
    c.bench_function("drift/single_point", |b| {
        b.iter(|| drift(black_box(&[0.3, -0.2]), &frame.tables, &sketch).unwrap())
    });
}

fn sliced_distance(c: &mut Criterion) {
    let a = target(5_000);
    let b = PointCloud::standard_gaussian(5_000, 2, &substream(3, "init")).unwrap();
    let dirs = sample_directions(2, 200, 5).unwrap();
    c.bench_function("sw2_estimate/n5000_theta200", |bch| {
        bch.iter(|| sw2_estimate(black_box(&a), &b, &dirs, 100).unwrap())
    });
}

criterion_group!(benches, quantile_table, flow_step, sliced_distance);
criterion_main!(benches);
