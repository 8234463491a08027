//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any failed.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use swflow::data::{gmm_sample, random_gmm_spec, write_binary, GmmSpec, DEFAULT_MIN_SEPARATION};
use swflow::metrics::SwEstimate;
use swflow::rng::substream;
use swflow::sketch::shard_projections;
use swflow::{
    build_quantile_table, build_sketch, drift, merge_shard_sketches, replay_flow, run_flow,
    sample_directions, sw2_estimate, w2_1d, DirectionSet, FlowConfig, FlowOutcome, Monitor,
    PointCloud, QuantileTable, TargetSketch,
};

/// Seed of the checked-in 10-component mixture.
const GMM_SEED: u64 = 2018;
const RUN_SEED: u64 = 7;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// The 2D mixture run shared by criteria 2, 3 and 8.
struct GmmRun {
    spec: GmmSpec,
    data: PointCloud,
    sketch: TargetSketch,
    monitor: Monitor,
    cfg: FlowConfig,
    outcome: FlowOutcome,
    elapsed: Duration,
}

fn gmm_setup() -> (GmmSpec, PointCloud, TargetSketch, Monitor, FlowConfig) {
    let spec = random_gmm_spec(2, 10, DEFAULT_MIN_SEPARATION, GMM_SEED).unwrap();
    let data = gmm_sample(&spec, 50_000).unwrap();
    let cfg = FlowConfig {
        n_particles: 5000,
        n_theta: 30,
        step_size: 1.0,
        lambda: 1e-4,
        iterations: 200,
        quantiles: 100,
        seed: RUN_SEED,
        record_maps: true,
        ..FlowConfig::default()
    };
    let dirs = sample_directions(2, cfg.n_theta, RUN_SEED).unwrap();
    let sketch = build_sketch(&data, &dirs, cfg.quantiles, None, RUN_SEED).unwrap();
    let monitor = Monitor::from_data(&data, 200, 100, RUN_SEED).unwrap();
    (spec, data, sketch, monitor, cfg)
}

fn gmm_init(cfg: &FlowConfig, seed: u64) -> PointCloud {
    PointCloud::standard_gaussian(cfg.n_particles, 2, &substream(seed, "init")).unwrap()
}

fn gmm_run() -> GmmRun {
    let start = Instant::now();
    let (spec, data, sketch, monitor, cfg) = gmm_setup();
    let init = gmm_init(&cfg, RUN_SEED);
    let outcome = run_flow(&init, &sketch, &cfg, Some(&monitor)).unwrap();
    GmmRun { spec, data, sketch, monitor, cfg, outcome, elapsed: start.elapsed() }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let n = 100;
    let mut rng_vals = PointCloud::standard_gaussian(n, 1, &substream(101, "target")).unwrap().into_vec();
    // arbitrary distinct reals with a skewed, gappy layout
    for (i, v) in rng_vals.iter_mut().enumerate() {
        *v = v.powi(3) * 2.0 + (i % 7) as f64 * 1e-3 + if i % 3 == 0 { 10.0 } else { 0.0 };
    }
    let target = PointCloud::new(rng_vals.clone(), 1).unwrap();
    let dirs = DirectionSet::from_vectors(vec![1.0], 1, 0).unwrap();
    let sketch = build_sketch(&target, &dirs, n, None, 0).unwrap();
    let cfg = FlowConfig {
        n_particles: n,
        n_theta: 1,
        step_size: 1.0,
        lambda: 0.0,
        iterations: 1,
        quantiles: n,
        seed: 3,
        ..FlowConfig::default()
    };
    let init = PointCloud::standard_gaussian(n, 1, &substream(102, "init")).unwrap();
    let out = run_flow(&init, &sketch, &cfg, None).unwrap();
    let mut moved = out.cloud.into_vec();
    moved.sort_by(f64::total_cmp);
    let err = moved
        .iter()
        .zip(sketch.table(0).values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    check(err <= 1e-6 && secs < 1.0, format!("max |sorted - quantiles| = {err:.2e} (<= 1e-6), {secs:.3}s (< 1s)"))
}

fn criterion_2(run: &GmmRun) -> Outcome {
    let sw = run.outcome.log.sw2();
    let (first, last) = (sw[0], *sw.last().unwrap());
    let ratio = last / first;
    let filtered = run.outcome.log.median_filtered_sw2(10);
    let worst_rise = filtered.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let monotone = worst_rise <= 0.0;
    let secs = run.elapsed.as_secs_f64();
    check(
        sw.len() == 201 && ratio <= 0.2 && monotone && secs < 120.0,
        format!(
            "SW2 {first:.4} -> {last:.4} (ratio {ratio:.4} <= 0.2), filtered max step {worst_rise:.2e} (<= 0), {secs:.1}s (< 120s)"
        ),
    )
}

fn criterion_3(run: &GmmRun) -> Outcome {
    let mut record = run.outcome.record.clone().unwrap();
    let fresh = gmm_init(&run.cfg, RUN_SEED + 1000);
    let replayed = replay_flow(&fresh, &mut record, &run.sketch, RUN_SEED + 1000).unwrap();
    let test: SwEstimate = run.monitor.evaluate(&replayed).unwrap();
    let train = run.monitor.evaluate(&run.outcome.cloud).unwrap();
    let rel = (test.value - train.value).abs() / train.value;
    let floor = train.value - train.std_error;
    // context only: distance of an exact i.i.d. sample of the same size
    let iid = gmm_sample(&GmmSpec { seed: GMM_SEED + 1, ..run.spec.clone() }, run.cfg.n_particles).unwrap();
    let iid = run.monitor.evaluate(&iid).unwrap().value;
    check(
        rel <= 0.25 && test.value >= floor,
        format!(
            "replay SW2 {:.4} vs training {:.4}: rel diff {rel:.3} (<= 0.25), >= {floor:.4} (train - 1 s.e.); \
             i.i.d. target sample of the same size scores {iid:.4}",
            test.value, train.value
        ),
    )
}

fn brute_force_cost(a: &[f64], b: &[f64]) -> f64 {
    fn rec(a: &[f64], b: &[f64], used: &mut [bool], i: usize, acc: f64, best: &mut f64) {
        if i == a.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..b.len() {
            if !used[j] {
                used[j] = true;
                rec(a, b, used, i + 1, acc + (a[i] - b[j]).powi(2), best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(a, b, &mut vec![false; b.len()], 0, 0.0, &mut best);
    (best / a.len() as f64).sqrt()
}

fn criterion_4() -> Outcome {
    use rand::Rng;
    let mut rng = substream(4, "pairs").rng();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..=8);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let w = w2_1d(&build_quantile_table(&a, n).unwrap(), &build_quantile_table(&b, n).unwrap()).unwrap();
        worst = worst.max((w - brute_force_cost(&a, &b)).abs());
    }
    check(worst <= 1e-10, format!("max |w2_1d - permutation optimum| = {worst:.2e} over 1000 pairs (<= 1e-10)"))
}

fn projected_table(cloud: &PointCloud, theta: &[f64], q: usize) -> QuantileTable {
    let proj: Vec<f64> = cloud.rows().map(|x| x.iter().zip(theta).map(|(a, b)| a * b).sum()).collect();
    build_quantile_table(&proj, q).unwrap()
}

fn drift_along(dirs: &DirectionSet, particles: &PointCloud, target: &PointCloud, x: &[f64]) -> Vec<f64> {
    let sketch = build_sketch(target, dirs, 100, None, 0).unwrap();
    let tables: Vec<QuantileTable> = dirs.iter().map(|t| projected_table(particles, t, 100)).collect();
    drift(x, &tables, &sketch).unwrap()
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

fn criterion_5() -> Outcome {
    let particles = PointCloud::standard_gaussian(400, 2, &substream(5, "particles")).unwrap();
    let spec = random_gmm_spec(2, 4, 4.0, 55).unwrap();
    let target = gmm_sample(&spec, 400).unwrap();
    let x = [0.3, -0.2];

    let m = 10_000;
    let dense: Vec<f64> = (0..m)
        .flat_map(|j| {
            let t = 2.0 * PI * j as f64 / m as f64;
            [t.cos(), t.sin()]
        })
        .collect();
    let dense = DirectionSet::from_vectors(dense, 2, 0).unwrap();
    let reference = drift_along(&dense, &particles, &target, &x);

    let counts = [10usize, 30, 100, 300, 1000];
    let mse: Vec<f64> = counts
        .iter()
        .map(|&n_theta| {
            let total: f64 = (0..200u64)
                .into_par_iter()
                .map(|draw| {
                    let dirs = sample_directions(2, n_theta, 1_000_000 + draw * 7919 + n_theta as u64).unwrap();
                    let v = drift_along(&dirs, &particles, &target, &x);
                    (v[0] - reference[0]).powi(2) + (v[1] - reference[1]).powi(2)
                })
                .sum();
            total / 200.0
        })
        .collect();
    let xs: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let s = slope(&xs, &mse);
    check(
        (-1.25..=-0.75).contains(&s),
        format!("mean squared drift error {:?} over N_theta {counts:?}: log-log slope {s:.3} in [-1.25, -0.75]", mse.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>()),
    )
}

fn criterion_6() -> Outcome {
    let n = 5000;
    let target = PointCloud::standard_gaussian(50_000, 1, &substream(6, "target")).unwrap();
    let dirs = DirectionSet::from_vectors(vec![1.0, -1.0], 1, 0).unwrap();
    let sketch = build_sketch(&target, &dirs, 100, None, 0).unwrap();
    let lambdas = [0.1, 0.2, 0.5, 1.0];
    let stats: Vec<(f64, f64)> = lambdas
        .iter()
        .map(|&lambda| {
            let cfg = FlowConfig {
                n_particles: n,
                n_theta: 2,
                step_size: 0.1,
                lambda,
                iterations: 500,
                quantiles: 100,
                seed: 60,
                ..FlowConfig::default()
            };
            let init = PointCloud::standard_gaussian(n, 1, &substream(61, "init")).unwrap();
            let out = run_flow(&init, &sketch, &cfg, None).unwrap();
            let std = out.cloud.std_dev()[0];
            (std, std / (2.0 * (n as f64 - 1.0)).sqrt())
        })
        .collect();
    let ok = stats.windows(2).all(|w| w[1].0 >= w[0].0 - 3.0 * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt());
    let shown: Vec<String> = lambdas.iter().zip(&stats).map(|(l, (s, e))| format!("{l}: {s:.4}±{e:.4}")).collect();
    check(ok, format!("stationary std by lambda [{}] non-decreasing within 3 s.e.", shown.join(", ")))
}

fn criterion_7() -> Outcome {
    let dirs = sample_directions(3, 50, 70).unwrap();
    let mut worst_sym = 0.0f64;
    let mut worst_self = 0.0f64;
    let mut worst_tri = f64::NEG_INFINITY;
    for t in 0..100u64 {
        let cloud = |k: u64, shift: f64| {
            let n = 50 + ((t * 13 + k * 7) % 150) as usize;
            PointCloud::standard_gaussian(n, 3, &substream(t * 3 + k, "triple"))
                .unwrap()
                .translated(&[shift, -shift * 0.5, shift * 0.25])
                .unwrap()
        };
        let (a, b, c) = (cloud(0, 0.0), cloud(1, 1.0 + t as f64 * 0.01), cloud(2, -0.7));
        let ab = sw2_estimate(&a, &b, &dirs, 64).unwrap();
        let ba = sw2_estimate(&b, &a, &dirs, 64).unwrap();
        let bc = sw2_estimate(&b, &c, &dirs, 64).unwrap();
        let ac = sw2_estimate(&a, &c, &dirs, 64).unwrap();
        worst_sym = worst_sym.max((ab - ba).abs());
        worst_self = worst_self.max(sw2_estimate(&a, &a, &dirs, 64).unwrap());
        worst_tri = worst_tri.max(ac - ab - bc);
    }
    check(
        worst_sym == 0.0 && worst_self < 1e-12 && worst_tri <= 1e-10,
        format!("max |d(a,b)-d(b,a)| = {worst_sym:e}, max d(a,a) = {worst_self:e}, max triangle excess = {worst_tri:.2e}"),
    )
}

fn criterion_8(run: &GmmRun) -> Outcome {
    let init = gmm_init(&run.cfg, RUN_SEED);
    let again = run_flow(&init, &run.sketch, &run.cfg, Some(&run.monitor)).unwrap();
    let (mut first, mut second) = (Vec::new(), Vec::new());
    write_binary(&run.outcome.cloud, &mut first).unwrap();
    write_binary(&again.cloud, &mut second).unwrap();
    let same_particles = first == second;

    let dirs = run.sketch.directions();
    let idx: Vec<usize> = (0..run.data.len()).collect();
    let shards: Vec<_> = idx
        .chunks(run.data.len().div_ceil(4))
        .map(|c| shard_projections(&run.data.select(c).unwrap(), dirs).unwrap())
        .collect();
    let merged = merge_shard_sketches(&shards, run.cfg.quantiles).unwrap();
    let same_sketch = shards.len() == 4 && merged == run.sketch;
    check(
        same_particles && same_sketch,
        format!("final particle files identical: {same_particles}; 4-shard merged sketch identical: {same_sketch}"),
    )
}

fn main() {
    // `cargo test -- --list` and filters are not meaningful for this target
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    println!("running acceptance criteria");
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |i: usize, o: Outcome| {
        println!("[{}] criterion {i}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((i, o));
    };
    report(1, criterion_1());
    let run = gmm_run();
    report(2, criterion_2(&run));
    report(3, criterion_3(&run));
    report(4, criterion_4());
    report(5, criterion_5());
    report(6, criterion_6());
    report(7, criterion_7());
    report(8, criterion_8(&run));

    let failed: Vec<usize> = results.iter().filter(|(_, o)| !o.pass).map(|(i, _)| *i).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
