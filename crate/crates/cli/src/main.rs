//! `swflow` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure.

mod plot;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use swflow::data::{gmm_sample, load_matrix, random_gmm_spec, save_matrix, MatrixFormat, DEFAULT_MIN_SEPARATION};
use swflow::metrics::{sw2_estimate_detailed, MONITOR_DIRECTIONS};
use swflow::record::FrameSource;
use swflow::rng::substream;
use swflow::{
    build_sketch, load_sketch, replay_flow, sample_directions, save_sketch, DirectionMode, FlowConfig,
    FlowRunner, Monitor, PointCloud, RecordReader, RecordWriter, TargetSketch,
};

#[derive(Debug, Parser)]
#[command(name = "swflow", version, about = "Sliced-Wasserstein flow: sketch data, train, replay, measure")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the per-direction quantile sketch of a dataset.
    Sketch(SketchArgs),
    /// Run the flow from standard Gaussian particles towards a sketch.
    Flow(FlowArgs),
    /// Transport fresh particles through a recorded flow.
    Replay(ReplayArgs),
    /// Estimate the sliced Wasserstein distance between two matrices.
    Swdist(SwdistArgs),
    /// Generate samples from a random Gaussian mixture.
    GmmGen(GmmArgs),
}

#[derive(Debug, Args)]
struct SketchArgs {
    /// Data matrix (.csv, otherwise SWMX binary).
    data: PathBuf,
    #[arg(long, default_value_t = 30)]
    ntheta: usize,
    #[arg(long, default_value_t = 100)]
    q: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-direction mini-batch size.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Also write a monitor sketch on independent directions.
    #[arg(long)]
    monitor_out: Option<PathBuf>,
    #[arg(long, default_value_t = MONITOR_DIRECTIONS)]
    monitor_ntheta: usize,
}

#[derive(Debug, Args)]
struct FlowArgs {
    sketch: PathBuf,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    /// Directions per iteration (default: all sketch directions in fixed mode).
    #[arg(long)]
    ntheta: Option<usize>,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    h: f64,
    #[arg(long, default_value_t = 1e-4, allow_negative_numbers = true)]
    lambda: f64,
    #[arg(long, default_value_t = 200)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Final particles (SWMX, or CSV by extension).
    #[arg(long)]
    out: PathBuf,
    /// Record the transport maps to this SWTM file.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Per-iteration CSV log `iter,sw2,wall_ms`.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Monitor sketch for the log; defaults to the training sketch.
    #[arg(long)]
    monitor: Option<PathBuf>,
    /// Write an SVG scatter plot every M iterations (2D only).
    #[arg(long)]
    plot_every: Option<usize>,
    #[arg(long, default_value = "plots")]
    plot_dir: PathBuf,
    /// Draw a new subset of the sketch's directions every iteration.
    #[arg(long)]
    resample_dirs: bool,
    /// Stop once the monitored distance stalls.
    #[arg(long)]
    early_stop: bool,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    record: PathBuf,
    sketch: PathBuf,
    /// Particle count (default: as recorded).
    #[arg(long)]
    n: Option<usize>,
    /// Seed for the fresh particles and the noise; the training seed
    /// reproduces the training run.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    monitor: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SwdistArgs {
    a: PathBuf,
    b: PathBuf,
    #[arg(long, default_value_t = MONITOR_DIRECTIONS)]
    ntheta: usize,
    #[arg(long, default_value_t = 100)]
    q: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct GmmArgs {
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 10)]
    components: usize,
    #[arg(long, default_value_t = 50_000)]
    p: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Minimum distance between means, in mean component standard deviations.
    #[arg(long, default_value_t = DEFAULT_MIN_SEPARATION)]
    separation: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

type CliResult<T> = Result<T, Failure>;

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 1, message: message.into() }
}

/// Errors while reading or writing files.
fn data_err(context: &Path) -> impl Fn(swflow::Error) -> Failure + '_ {
    move |e| Failure { code: 2, message: format!("{}: {e}", context.display()) }
}

fn io_err(context: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure { code: 2, message: format!("{}: {e}", context.display()) }
}

/// Errors during computation.
fn compute_err(e: swflow::Error) -> Failure {
    let code = if e.is_numerical() { 3 } else { 2 };
    Failure { code, message: e.to_string() }
}

fn require(cond: bool, message: &str) -> CliResult<()> {
    if cond {
        Ok(())
    } else {
        Err(usage(message))
    }
}

fn load_points(path: &Path) -> CliResult<PointCloud> {
    load_matrix(path, MatrixFormat::from_path(path)).map_err(data_err(path))
}

fn save_points(cloud: &PointCloud, path: &Path) -> CliResult<()> {
    save_matrix(cloud, path, MatrixFormat::from_path(path)).map_err(data_err(path))
}

fn cmd_sketch(args: SketchArgs) -> CliResult<()> {
    require(args.ntheta >= 1, "--ntheta must be >= 1")?;
    require(args.q >= 2, "--q must be >= 2")?;
    require(args.batch != Some(0), "--batch must be positive")?;
    require(args.monitor_ntheta >= 1, "--monitor-ntheta must be >= 1")?;
    println!(
        "# swflow sketch {} --ntheta {} --q {} --seed {}{} --out {}",
        args.data.display(),
        args.ntheta,
        args.q,
        args.seed,
        args.batch.map(|b| format!(" --batch {b}")).unwrap_or_default(),
        args.out.display()
    );
    let data = load_points(&args.data)?;
    if let Some(b) = args.batch {
        require(b <= data.len(), &format!("--batch {b} exceeds the {} data points", data.len()))?;
    }
    let dirs = sample_directions(data.dim(), args.ntheta, args.seed).map_err(compute_err)?;
    let sketch = build_sketch(&data, &dirs, args.q, args.batch, args.seed).map_err(compute_err)?;
    save_sketch(&sketch, &args.out).map_err(data_err(&args.out))?;
    println!("directions: {}", sketch.len());
    println!("quantiles: {}", sketch.q());
    println!("fingerprint: {:016x}", sketch.source_fingerprint());
    if let Some(path) = &args.monitor_out {
        let monitor = Monitor::from_data(&data, args.monitor_ntheta, args.q, args.seed).map_err(compute_err)?;
        save_sketch(monitor.sketch(), path).map_err(data_err(path))?;
        println!("monitor: {} directions -> {}", monitor.sketch().len(), path.display());
    }
    Ok(())
}

fn load_monitor(path: Option<&PathBuf>, sketch: &TargetSketch) -> CliResult<Monitor> {
    match path {
        Some(p) => {
            let m = load_sketch(p).map_err(data_err(p))?;
            if m.dim() != sketch.dim() {
                return Err(Failure {
                    code: 2,
                    message: format!("{}: monitor dimension {} does not match sketch dimension {}", p.display(), m.dim(), sketch.dim()),
                });
            }
            Ok(Monitor::from_sketch(m))
        }
        None => {
            eprintln!("note: no --monitor given, monitoring against the training sketch");
            Ok(Monitor::from_sketch(sketch.clone()))
        }
    }
}

fn cmd_flow(args: FlowArgs) -> CliResult<()> {
    require(args.h > 0.0 && args.h.is_finite(), "--h must be positive")?;
    require(args.lambda >= 0.0 && args.lambda.is_finite(), "--lambda must be >= 0")?;
    require(args.n >= 1, "--n must be >= 1")?;
    require(args.plot_every != Some(0), "--plot-every must be positive")?;
    require(!args.resample_dirs || args.ntheta.is_some(), "--resample-dirs needs --ntheta")?;

    let sketch = load_sketch(&args.sketch).map_err(data_err(&args.sketch))?;
    let n_theta = args.ntheta.unwrap_or(sketch.len());
    require(
        n_theta >= 1 && n_theta <= sketch.len(),
        &format!("--ntheta must be between 1 and the sketch's {} directions", sketch.len()),
    )?;
    let monitor = load_monitor(args.monitor.as_ref(), &sketch)?;
    let cfg = FlowConfig {
        n_particles: args.n,
        n_theta,
        step_size: args.h,
        lambda: args.lambda,
        iterations: args.iters,
        quantiles: sketch.q(),
        seed: args.seed,
        direction_mode: if args.resample_dirs { DirectionMode::Resampled } else { DirectionMode::Fixed },
        record_maps: args.record.is_some(),
        early_stop: args.early_stop,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    println!(
        "# swflow flow {} --n {} --ntheta {} --h {} --lambda {} --iters {} --seed {}{}{}",
        args.sketch.display(),
        cfg.n_particles,
        cfg.n_theta,
        cfg.step_size,
        cfg.lambda,
        cfg.iterations,
        cfg.seed,
        if args.resample_dirs { " --resample-dirs" } else { "" },
        if args.early_stop { " --early-stop" } else { "" },
    );

    let plot_every = match args.plot_every {
        Some(m) if sketch.dim() == 2 => {
            std::fs::create_dir_all(&args.plot_dir).map_err(io_err(&args.plot_dir))?;
            Some(m)
        }
        Some(_) => {
            eprintln!("note: plots are only drawn for 2D data");
            None
        }
        None => None,
    };

    let init = PointCloud::standard_gaussian(cfg.n_particles, sketch.dim(), &substream(cfg.seed, "init"))
        .map_err(compute_err)?;
    let mut writer = match &args.record {
        Some(p) => Some(RecordWriter::create(p).map_err(data_err(p))?),
        None => None,
    };

    let plot_dir = args.plot_dir.clone();
    let last_iter = cfg.iterations;
    let mut bounds = None;
    let mut runner = FlowRunner::new(&sketch, cfg.clone()).monitor(&monitor).observer(move |cloud, est| {
        let k = cloud.generation();
        if let Some(m) = plot_every {
            if k % m == 0 || k == last_iter {
                let b = *bounds.get_or_insert_with(|| plot::Bounds::around(cloud));
                let title = match est {
                    Some(e) => format!("iteration {k}, SW2 {:.4}", e.value),
                    None => format!("iteration {k}"),
                };
                let path = plot_dir.join(format!("iter_{k:05}.svg"));
                plot::write_scatter(&path, cloud, b, &title)?;
            }
        }
        Ok(())
    });
    if let Some(w) = writer.as_mut() {
        runner = runner.sink(w);
    }
    let outcome = runner.run(&init).map_err(compute_err)?;

    save_points(&outcome.cloud, &args.out)?;
    if let Some(path) = &args.log {
        let f = File::create(path).map_err(io_err(path))?;
        outcome.log.write_csv(BufWriter::new(f)).map_err(data_err(path))?;
    }
    let last = outcome.log.rows.last().expect("log has the initial row");
    println!("iterations: {}", last.iter);
    if let Some(sw) = last.sw2 {
        println!("final sw2: {sw}");
    }
    Ok(())
}

fn cmd_replay(args: ReplayArgs) -> CliResult<()> {
    require(args.n != Some(0), "--n must be >= 1")?;
    let sketch = load_sketch(&args.sketch).map_err(data_err(&args.sketch))?;
    let mut record = RecordReader::open(&args.record).map_err(data_err(&args.record))?;
    let monitor = load_monitor(args.monitor.as_ref(), &sketch)?;
    let n = args.n.unwrap_or(record.config().n_particles);
    println!(
        "# swflow replay {} {} --n {n} --seed {}",
        args.record.display(),
        args.sketch.display(),
        args.seed
    );
    let fresh = PointCloud::standard_gaussian(n, sketch.dim(), &substream(args.seed, "init")).map_err(compute_err)?;
    let out = replay_flow(&fresh, &mut record, &sketch, args.seed).map_err(compute_err)?;
    save_points(&out, &args.out)?;
    let est = monitor.evaluate(&out).map_err(compute_err)?;
    println!("iterations: {}", record.frame_count());
    println!("final sw2: {}", est.value);
    Ok(())
}

fn cmd_swdist(args: SwdistArgs) -> CliResult<()> {
    require(args.ntheta >= 1, "--ntheta must be >= 1")?;
    require(args.q >= 2, "--q must be >= 2")?;
    println!(
        "# swflow swdist {} {} --ntheta {} --q {} --seed {}",
        args.a.display(),
        args.b.display(),
        args.ntheta,
        args.q,
        args.seed
    );
    let a = load_points(&args.a)?;
    let b = load_points(&args.b)?;
    if a.dim() != b.dim() {
        return Err(Failure { code: 2, message: format!("dimension mismatch: {} vs {}", a.dim(), b.dim()) });
    }
    let dirs = sample_directions(a.dim(), args.ntheta, args.seed).map_err(compute_err)?;
    let est = sw2_estimate_detailed(&a, &b, &dirs, args.q).map_err(compute_err)?;
    println!("sw2: {} +/- {}", est.value, est.std_error);
    Ok(())
}

fn cmd_gmm_gen(args: GmmArgs) -> CliResult<()> {
    require(args.d >= 1, "--d must be >= 1")?;
    require(args.components >= 1, "--components must be >= 1")?;
    require(args.p >= 1, "--p must be >= 1")?;
    require(args.separation >= 0.0 && args.separation.is_finite(), "--separation must be >= 0")?;
    println!(
        "# swflow gmm-gen --d {} --components {} --p {} --seed {} --separation {} --out {}",
        args.d,
        args.components,
        args.p,
        args.seed,
        args.separation,
        args.out.display()
    );
    let spec = random_gmm_spec(args.d, args.components, args.separation, args.seed).map_err(compute_err)?;
    let data = gmm_sample(&spec, args.p).map_err(compute_err)?;
    save_points(&data, &args.out)?;
    for (k, (m, w)) in spec.means.iter().zip(&spec.weights).enumerate() {
        println!("component {k}: weight {w:.4} mean {m:?}");
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        require(t >= 1, "--threads must be >= 1")?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| usage(e.to_string()))?;
    }
    match cli.command {
        Command::Sketch(a) => cmd_sketch(a),
        Command::Flow(a) => cmd_flow(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Swdist(a) => cmd_swdist(a),
        Command::GmmGen(a) => cmd_gmm_gen(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
