//! The sliced-Wasserstein flow integrator.
//!
//! Each iteration:
//!
//! 1. picks the active directions (the first `n_theta` of the sketch, or a
//!    fresh random subset of the sketch's pool in resampled mode),
//! 2. tabulates the particles' projected quantiles along each of them,
//! 3. moves every particle by
//!    `x + h * v(x) + sqrt(2 λ h) * Z` with
//!    `v(x) = -(1/N_θ) Σ_n ψ'_n(<θ_n, x>) θ_n` and
//!    `ψ'_n(z) = z - F⁻¹_target,n(F_particles,n(z))`.
//!
//! With one direction in 1D and `h = 1` the update is exactly the monotone
//! rearrangement of the particles onto the target quantiles.

use std::borrow::Cow;
use std::io::Write;
use std::time::Instant;

use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::geometry::dot;
use crate::metrics::{Monitor, SwEstimate};
use crate::ot1d::potential_derivative_unchecked;
use crate::record::{FrameSink, FrameSource, MapFrame, TransportMapRecord};
use crate::rng::StreamKey;
use crate::{DirectionSet, Error, PointCloud, QuantileTable, Result, TargetSketch};

/// Relative change of the monitored distance over [`EARLY_STOP_WINDOW`]
/// iterations below which early stopping triggers.
pub const EARLY_STOP_TOLERANCE: f64 = 1e-4;
pub const EARLY_STOP_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DirectionMode {
    /// The same directions at every iteration.
    #[default]
    Fixed,
    /// A new random subset of the sketch's directions at every iteration.
    Resampled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub n_particles: usize,
    pub n_theta: usize,
    pub step_size: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub quantiles: usize,
    pub seed: u64,
    pub direction_mode: DirectionMode,
    pub record_maps: bool,
    pub early_stop: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            n_particles: 5000,
            n_theta: 30,
            step_size: 1.0,
            lambda: 1e-4,
            iterations: 200,
            quantiles: 100,
            seed: 0,
            direction_mode: DirectionMode::Fixed,
            record_maps: false,
            early_stop: false,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid(format!("step size must be positive, got {}", self.step_size)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.n_theta == 0 {
            return Err(Error::invalid("n_theta must be >= 1"));
        }
        if self.n_particles == 0 {
            return Err(Error::invalid("n_particles must be >= 1"));
        }
        if self.quantiles < 2 {
            return Err(Error::invalid(format!("quantiles must be >= 2, got {}", self.quantiles)));
        }
        Ok(())
    }

    fn check_sketch(&self, sketch: &TargetSketch) -> Result<()> {
        self.validate()?;
        if self.n_theta > sketch.len() {
            return Err(Error::invalid(format!(
                "n_theta = {} but the sketch holds {} directions",
                self.n_theta,
                sketch.len()
            )));
        }
        if self.quantiles != sketch.q() {
            return Err(Error::invalid(format!(
                "quantiles = {} but the sketch uses {}",
                self.quantiles,
                sketch.q()
            )));
        }
        Ok(())
    }

    fn noise_key(&self) -> StreamKey {
        StreamKey::root(self.seed).named("noise")
    }

    /// Directions the record refers to: the used prefix in fixed mode, the
    /// whole pool in resampled mode.
    fn recorded_directions(&self, sketch: &TargetSketch) -> Result<DirectionSet> {
        match self.direction_mode {
            DirectionMode::Fixed => sketch.directions().prefix(self.n_theta),
            DirectionMode::Resampled => Ok(sketch.directions().clone()),
        }
    }

    fn active_directions(&self, sketch: &TargetSketch, k: usize) -> Option<Vec<u32>> {
        match self.direction_mode {
            DirectionMode::Fixed => None,
            DirectionMode::Resampled => {
                let mut rng = StreamKey::root(self.seed).named("directions").child(k as u64).rng();
                Some(
                    index::sample(&mut rng, sketch.len(), self.n_theta)
                        .into_iter()
                        .map(|i| i as u32)
                        .collect(),
                )
            }
        }
    }
}

/// Sketch positions of the directions active in one iteration.
fn active_slots(indices: Option<&[u32]>, n_theta: usize) -> Cow<'_, [u32]> {
    match indices {
        Some(idx) => Cow::Borrowed(idx),
        None => Cow::Owned((0..n_theta as u32).collect()),
    }
}

fn particle_tables(
    cloud: &PointCloud,
    sketch: &TargetSketch,
    slots: &[u32],
    q: usize,
) -> Result<Vec<QuantileTable>> {
    slots
        .par_iter()
        .map(|&n| {
            let theta = sketch.directions().direction(n as usize);
            let mut proj: Vec<f64> = cloud.rows().map(|x| dot(x, theta)).collect();
            proj.sort_unstable_by(f64::total_cmp);
            QuantileTable::from_sorted(&proj, q)
        })
        .collect()
}

#[inline]
fn drift_into(
    x: &[f64],
    slots: &[u32],
    tables: &[QuantileTable],
    sketch: &TargetSketch,
    out: &mut [f64],
) {
    out.fill(0.0);
    for (table, &n) in tables.iter().zip(slots) {
        let theta = sketch.directions().direction(n as usize);
        let psi = potential_derivative_unchecked(dot(x, theta), table, sketch.table(n as usize));
        for (o, t) in out.iter_mut().zip(theta) {
            *o += psi * t;
        }
    }
    let scale = -1.0 / slots.len() as f64;
    out.iter_mut().for_each(|o| *o *= scale);
}

/// Monte-Carlo drift at `x`, one particle table per sketch direction.
pub fn drift(x: &[f64], particle_tables: &[QuantileTable], sketch: &TargetSketch) -> Result<Vec<f64>> {
    if x.len() != sketch.dim() {
        return Err(Error::DimensionMismatch { expected: sketch.dim(), got: x.len() });
    }
    if particle_tables.len() != sketch.len() {
        return Err(Error::invalid(format!(
            "{} particle tables for {} sketch directions",
            particle_tables.len(),
            sketch.len()
        )));
    }
    let slots = active_slots(None, sketch.len());
    let mut out = vec![0.0; x.len()];
    drift_into(x, &slots, particle_tables, sketch, &mut out);
    Ok(out)
}

/// Moves every particle once using the given particle tables. Particle `i`
/// draws its noise from stream `i` of `noise`.
fn advance(
    cloud: &PointCloud,
    sketch: &TargetSketch,
    slots: &[u32],
    tables: &[QuantileTable],
    step_size: f64,
    lambda: f64,
    noise: &StreamKey,
) -> Result<PointCloud> {
    let d = cloud.dim();
    let sigma = (2.0 * lambda * step_size).sqrt();
    let mut next = vec![0.0; cloud.as_slice().len()];
    next.par_chunks_mut(d).zip(cloud.as_slice().par_chunks(d)).enumerate().for_each(
        |(i, (out, x))| {
            drift_into(x, slots, tables, sketch, out);
            for (o, xi) in out.iter_mut().zip(x) {
                *o = xi + step_size * *o;
            }
            if lambda > 0.0 {
                let mut rng = noise.stream(i as u64);
                for o in out.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *o += sigma * z;
                }
            }
        },
    );
    if let Some(i) = next.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: i / d, iteration: cloud.generation() });
    }
    Ok(PointCloud::from_parts(next, d, cloud.generation() + 1))
}

fn check_cloud(cloud: &PointCloud, sketch: &TargetSketch) -> Result<()> {
    if cloud.dim() != sketch.dim() {
        return Err(Error::DimensionMismatch { expected: sketch.dim(), got: cloud.dim() });
    }
    Ok(())
}

fn step_inner(
    cloud: &PointCloud,
    sketch: &TargetSketch,
    cfg: &FlowConfig,
    noise: &StreamKey,
) -> Result<(PointCloud, MapFrame)> {
    let k = cloud.generation();
    let indices = cfg.active_directions(sketch, k);
    let slots = active_slots(indices.as_deref(), cfg.n_theta);
    let tables = particle_tables(cloud, sketch, &slots, cfg.quantiles)?;
    let next =
        advance(cloud, sketch, &slots, &tables, cfg.step_size, cfg.lambda, &noise.child(k as u64))?;
    Ok((next, MapFrame { indices, tables }))
}

/// One Euler–Maruyama step from `cloud`. The iteration index is the cloud's
/// generation; noise comes from the `"noise"` substream of `cfg.seed`.
/// Returns the new cloud and the particle tables that drove it.
pub fn euler_step(
    cloud: &PointCloud,
    sketch: &TargetSketch,
    cfg: &FlowConfig,
) -> Result<(PointCloud, MapFrame)> {
    cfg.check_sketch(sketch)?;
    check_cloud(cloud, sketch)?;
    step_inner(cloud, sketch, cfg, &cfg.noise_key())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub iter: usize,
    pub sw2: Option<f64>,
    pub sw2_std_error: Option<f64>,
    pub wall_ms: f64,
}

/// Per-iteration monitor values. Row `k` describes the cloud after `k`
/// steps, so a run of `K` iterations has `K + 1` rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowLog {
    pub rows: Vec<LogRow>,
}

impl FlowLog {
    pub fn sw2(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.sw2).collect()
    }

    /// Trailing running median of the monitored distance over `window`
    /// rows; the first value is emitted once a full window is available.
    pub fn median_filtered_sw2(&self, window: usize) -> Vec<f64> {
        let values = self.sw2();
        if window == 0 || values.len() < window {
            return Vec::new();
        }
        values
            .windows(window)
            .map(|w| {
                let mut s = w.to_vec();
                s.sort_by(f64::total_cmp);
                if window % 2 == 1 {
                    s[window / 2]
                } else {
                    0.5 * (s[window / 2 - 1] + s[window / 2])
                }
            })
            .collect()
    }

    /// CSV with header `iter,sw2,wall_ms`; `sw2` is empty when unmonitored.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["iter", "sw2", "wall_ms"])?;
        for r in &self.rows {
            let sw2 = r.sw2.map(|v| v.to_string()).unwrap_or_default();
            out.write_record([r.iter.to_string(), sw2, format!("{:.3}", r.wall_ms)])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub cloud: PointCloud,
    /// In-memory record, when `record_maps` is set and no sink was given.
    pub record: Option<TransportMapRecord>,
    pub log: FlowLog,
}

type Observer<'a> = Box<dyn FnMut(&PointCloud, Option<&SwEstimate>) -> Result<()> + 'a>;

/// Runs the training loop with optional monitor, frame sink and per
/// iteration observer.
pub struct FlowRunner<'a> {
    sketch: &'a TargetSketch,
    cfg: FlowConfig,
    monitor: Option<&'a Monitor>,
    sink: Option<&'a mut dyn FrameSink>,
    observer: Option<Observer<'a>>,
}

impl<'a> FlowRunner<'a> {
    pub fn new(sketch: &'a TargetSketch, cfg: FlowConfig) -> Self {
        FlowRunner { sketch, cfg, monitor: None, sink: None, observer: None }
    }

    pub fn monitor(mut self, monitor: &'a Monitor) -> Self {
        self.monitor = Some(monitor);
        self
    }

    /// Sends recorded frames to `sink` instead of memory. Only used when
    /// `record_maps` is set.
    pub fn sink(mut self, sink: &'a mut dyn FrameSink) -> Self {
        self.sink = Some(sink);
        self
    }

    /// Called with the cloud after every iteration, including iteration 0.
    pub fn observer(
        mut self,
        f: impl FnMut(&PointCloud, Option<&SwEstimate>) -> Result<()> + 'a,
    ) -> Self {
        self.observer = Some(Box::new(f));
        self
    }

    pub fn run(mut self, init: &PointCloud) -> Result<FlowOutcome> {
        let sketch = self.sketch;
        let cfg = self.cfg.clone();
        cfg.check_sketch(sketch)?;
        check_cloud(init, sketch)?;
        if cfg.early_stop && self.monitor.is_none() {
            return Err(Error::invalid("early stopping needs a monitor"));
        }
        if let Some(m) = self.monitor {
            if m.sketch().dim() != sketch.dim() {
                return Err(Error::DimensionMismatch { expected: sketch.dim(), got: m.sketch().dim() });
            }
        }

        let start = Instant::now();
        let noise = cfg.noise_key();
        let mut memory = None;
        if cfg.record_maps {
            let dirs = cfg.recorded_directions(sketch)?;
            let header = FlowConfig { n_particles: init.len(), ..cfg.clone() };
            match self.sink.as_deref_mut() {
                Some(sink) => sink.begin(&header, &dirs)?,
                None => memory = Some(TransportMapRecord::new(header, dirs)),
            }
        }

        let mut log = FlowLog::default();
        let mut cloud = init.clone().with_generation(0);
        let estimate = self.observe(&cloud, start, &mut log)?;
        if let Some(f) = self.observer.as_mut() {
            f(&cloud, estimate.as_ref())?;
        }
        for _ in 0..cfg.iterations {
            let (next, frame) = step_inner(&cloud, sketch, &cfg, &noise)?;
            if cfg.record_maps {
                match (self.sink.as_deref_mut(), memory.as_mut()) {
                    (Some(sink), _) => sink.push(&frame)?,
                    (None, Some(rec)) => rec.frames.push(frame),
                    (None, None) => unreachable!(),
                }
            }
            cloud = next;
            let estimate = self.observe(&cloud, start, &mut log)?;
            if let Some(f) = self.observer.as_mut() {
                f(&cloud, estimate.as_ref())?;
            }
            if cfg.early_stop && converged(&log) {
                break;
            }
        }
        if cfg.record_maps {
            if let Some(sink) = self.sink.as_deref_mut() {
                sink.finish()?;
            }
        }
        Ok(FlowOutcome { cloud, record: memory, log })
    }

    fn observe(&self, cloud: &PointCloud, start: Instant, log: &mut FlowLog) -> Result<Option<SwEstimate>> {
        let estimate = self.monitor.map(|m| m.evaluate(cloud)).transpose()?;
        log.rows.push(LogRow {
            iter: cloud.generation(),
            sw2: estimate.as_ref().map(|e| e.value),
            sw2_std_error: estimate.as_ref().map(|e| e.std_error),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        Ok(estimate)
    }
}

fn converged(log: &FlowLog) -> bool {
    let sw = log.sw2();
    if sw.len() <= EARLY_STOP_WINDOW {
        return false;
    }
    let now = sw[sw.len() - 1];
    let before = sw[sw.len() - 1 - EARLY_STOP_WINDOW];
    before > 0.0 && ((now - before) / before).abs() < EARLY_STOP_TOLERANCE
}

/// Runs `cfg.iterations` steps from `init`, monitored when `monitor` is
/// given, recording into memory when `cfg.record_maps` is set.
pub fn run_flow(
    init: &PointCloud,
    sketch: &TargetSketch,
    cfg: &FlowConfig,
    monitor: Option<&Monitor>,
) -> Result<FlowOutcome> {
    let mut runner = FlowRunner::new(sketch, cfg.clone());
    if let Some(m) = monitor {
        runner = runner.monitor(m);
    }
    runner.run(init)
}

/// Transports `fresh` particles through recorded maps.
///
/// Every iteration evaluates the potential derivatives against the stored
/// particle tables, not tables of `fresh`. Noise comes from the `"noise"`
/// substream of `replay_seed`; passing the training seed reproduces the
/// training noise exactly.
pub fn replay_flow<S: FrameSource + ?Sized>(
    fresh: &PointCloud,
    record: &mut S,
    sketch: &TargetSketch,
    replay_seed: u64,
) -> Result<PointCloud> {
    let cfg = record.config().clone();
    cfg.validate()?;
    check_cloud(fresh, sketch)?;
    if cfg.quantiles != sketch.q() {
        return Err(Error::invalid("record and sketch use different quantile counts"));
    }
    let expected = match cfg.direction_mode {
        DirectionMode::Fixed if cfg.n_theta <= sketch.len() => sketch.directions().prefix(cfg.n_theta)?,
        DirectionMode::Fixed => {
            return Err(Error::DirectionMismatch(format!(
                "record uses {} directions, sketch holds {}",
                cfg.n_theta,
                sketch.len()
            )))
        }
        DirectionMode::Resampled => sketch.directions().clone(),
    };
    if record.directions() != &expected {
        return Err(Error::DirectionMismatch(
            "record was trained against a different sketch".into(),
        ));
    }

    let noise = StreamKey::root(replay_seed).named("noise");
    let mut cloud = fresh.clone().with_generation(0);
    for k in 0..record.frame_count() {
        let frame = record.read_frame(k)?;
        if frame.tables.len() != cfg.n_theta {
            return Err(Error::invalid(format!("frame {k} has {} tables", frame.tables.len())));
        }
        let slots = active_slots(frame.indices.as_deref(), cfg.n_theta);
        cloud = advance(
            &cloud,
            sketch,
            &slots,
            &frame.tables,
            cfg.step_size,
            cfg.lambda,
            &noise.child(k as u64),
        )?;
    }
    Ok(cloud)
}
