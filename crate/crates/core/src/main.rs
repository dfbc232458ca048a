use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use towerkit::cli::{self, BenchConfig, CalibState, CliError};
use towerkit::exposure::ExposureMode;
use towerkit::pipeline::{DetectorKind, PipelineConfig};
use towerkit::scenegen::{Scenario, Scene, SceneRenderer};
use towerkit::world3d::CameraModel;

#[derive(Parser)]
#[command(
    name = "towerkit",
    version,
    about = "Multi-camera exposure correction, tracking and geolocation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the pipeline from a config file and write its outputs.
    Run(RunArgs),
    /// Pipeline operations.
    #[command(subcommand)]
    Pipeline(PipelineCmd),
    /// Measure exposure, fitting and tracking throughput.
    Bench(BenchArgs),
    /// Serve the camera calibration HTTP API.
    CalibServe(CalibArgs),
    /// Synthetic scenario tools.
    #[command(subcommand)]
    Scenegen(SceneCmd),
    /// Child-process side of an isolated tracker.
    #[command(hide = true)]
    TrackerWorker {
        #[arg(long)]
        connect: SocketAddr,
    },
}

#[derive(Subcommand)]
enum PipelineCmd {
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    exposure_mode: Option<ExposureMode>,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    band_width: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    detector: Option<DetectorKind>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    diff_threshold: Option<u8>,
    /// Run the tracker in a child process.
    #[arg(long)]
    isolate_tracker: bool,
}

impl RunArgs {
    fn apply(&self, c: &mut PipelineConfig) {
        if let Some(m) = self.exposure_mode {
            c.exposure.mode = m;
        }
        if let Some(b) = self.blocks {
            c.exposure.params.blocks = b;
        }
        if let Some(b) = self.band_width {
            c.exposure.params.band_width = b;
        }
        if let Some(a) = self.alpha {
            c.exposure.params.alpha = a;
        }
        if let Some(d) = self.detector {
            c.detector.kind = d;
        }
        if let Some(b) = self.budget {
            c.attention.budget = b;
        }
        if let Some(t) = self.diff_threshold {
            c.detector.diff_threshold = t;
        }
        if self.isolate_tracker {
            c.tracking.process = true;
        }
    }
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 6)]
    streams: usize,
    #[arg(long, default_value_t = 1280)]
    width: usize,
    #[arg(long, default_value_t = 720)]
    height: usize,
    #[arg(long, default_value_t = 30)]
    iterations: usize,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    /// CSV output; the table is always printed.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Directory of `camera_<id>.txt` files overriding the scenario's cameras.
    #[arg(long)]
    cameras: Option<PathBuf>,
    /// Tick whose frames are served.
    #[arg(long, default_value_t = 0)]
    tick: u64,
    #[arg(long, default_value = "calibration")]
    save_dir: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
}

#[derive(Subcommand)]
enum SceneCmd {
    /// Render every tick of a scenario to PPM images plus ground truth.
    Render {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ticks: Option<u64>,
    },
    /// Write a starter panorama scenario as JSON.
    Example {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        cameras: usize,
        #[arg(long, default_value_t = 640)]
        width: usize,
        #[arg(long, default_value_t = 480)]
        height: usize,
        #[arg(long, default_value_t = 5)]
        objects: usize,
        #[arg(long, default_value_t = 300)]
        ticks: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn run(args: &RunArgs) -> Result<(), CliError> {
    let mut cfg = PipelineConfig::load(&args.config)?;
    args.apply(&mut cfg);
    let (files, out) = cli::cmd_run_config(cfg, &args.out)?;
    let r = &out.report;
    println!(
        "delivered {}/{} ticks, {:.1}% on schedule, median latency {:.2} ms",
        r.frames_delivered,
        r.ticks,
        100.0 * r.on_schedule_ratio,
        r.latency.median_ms
    );
    println!(
        "wrote {}",
        files.report.parent().unwrap_or(Path::new(".")).display()
    );
    Ok(())
}

fn bench(a: &BenchArgs) -> Result<(), CliError> {
    let cfg = BenchConfig {
        streams: a.streams,
        width: a.width,
        height: a.height,
        apply_iterations: a.iterations,
        repeats: a.repeats,
        ..BenchConfig::default()
    };
    let rows = cli::cmd_bench(&cfg)?;
    println!("{}", cli::bench::CSV_HEADER);
    for r in &rows {
        println!("{}", r.csv_line());
    }
    if let Some(p) = &a.out {
        cli::bench::write_csv(&rows, p)?;
    }
    Ok(())
}

fn calib_state(a: &CalibArgs) -> Result<CalibState, CliError> {
    let scene = Arc::new(Scene::new(Scenario::load(&a.scenario)?)?);
    let mut cameras = scene.cameras().to_vec();
    if let Some(dir) = &a.cameras {
        for c in cameras.iter_mut() {
            let p = dir.join(format!("camera_{}.txt", c.id));
            if p.exists() {
                *c = CameraModel::load(&p)?;
            }
        }
    }
    let frames = SceneRenderer::new(scene.clone()).render_tick(a.tick).frames;
    CalibState::new(
        cameras,
        Arc::new(scene.terrain.clone()),
        frames,
        &a.save_dir,
    )
}

fn calib_serve(a: &CalibArgs) -> Result<(), CliError> {
    let state = Arc::new(calib_state(a)?);
    let rt = tokio::runtime::Runtime::new().map_err(CliError::io("tokio runtime"))?;
    rt.block_on(cli::calib::serve(state, a.listen))
}

fn scenegen(cmd: &SceneCmd) -> Result<(), CliError> {
    match cmd {
        SceneCmd::Render {
            scenario,
            out,
            ticks,
        } => {
            let n = cli::render_scenario(scenario, out, *ticks)?;
            println!("wrote {n} images to {}", out.display());
        }
        SceneCmd::Example {
            out,
            cameras,
            width,
            height,
            objects,
            ticks,
            seed,
        } => {
            let s = cli::example_scenario(*seed, *cameras, *width, *height, *objects, *ticks);
            Scene::new(s.clone())?;
            std::fs::write(out, s.to_json()).map_err(CliError::io(out))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let r = match &cli.cmd {
        Cmd::Run(a) | Cmd::Pipeline(PipelineCmd::Run(a)) => run(a),
        Cmd::Bench(a) => bench(a),
        Cmd::CalibServe(a) => calib_serve(a),
        Cmd::Scenegen(c) => scenegen(c),
        Cmd::TrackerWorker { connect } => {
            towerkit::pipeline::bridge::run_worker(*connect).map_err(CliError::from)
        }
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("towerkit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
