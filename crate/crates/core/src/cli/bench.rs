//! Throughput measurements on synthetic streams.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::exposure::{correct_frames, ExposureEstimator, ExposureMode, ExposureParams};
use crate::geom::Frame;
use crate::pipeline::{components::TrackerCore, PipelineConfig};
use crate::scenegen::{circling_objects, random_distortion, Scenario, Scene, SceneRenderer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub streams: usize,
    pub width: usize,
    pub height: usize,
    /// Frame sets per timed apply pass.
    pub apply_iterations: usize,
    /// Map updates per timed fit pass.
    pub fit_iterations: usize,
    /// Ticks per timed tracking pass.
    pub track_ticks: usize,
    /// Timed passes per stage; the reported rate is their median.
    pub repeats: usize,
    pub mode: ExposureMode,
    pub params: ExposureParams,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            streams: 6,
            width: 1280,
            height: 720,
            apply_iterations: 30,
            fit_iterations: 8,
            track_ticks: 30,
            repeats: 3,
            mode: ExposureMode::Smoothing,
            params: ExposureParams::default(),
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub stage: String,
    pub streams: usize,
    pub width: usize,
    pub height: usize,
    pub threads: usize,
    pub iterations: usize,
    /// Median rate over the repeats, in frame sets (or updates) per second.
    pub fps: f64,
    pub min_fps: f64,
    pub max_fps: f64,
}

impl BenchRow {
    /// `(max - min) / median` over the repeats.
    pub fn spread(&self) -> f64 {
        (self.max_fps - self.min_fps) / self.fps
    }
}

pub const CSV_HEADER: &str = "stage,streams,width,height,threads,iterations,fps,min_fps,max_fps";

impl BenchRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.3},{:.3},{:.3}",
            self.stage,
            self.streams,
            self.width,
            self.height,
            self.threads,
            self.iterations,
            self.fps,
            self.min_fps,
            self.max_fps
        )
    }
}

pub fn write_csv(rows: &[BenchRow], path: &Path) -> Result<(), CliError> {
    let mut f = std::fs::File::create(path).map_err(CliError::io(path))?;
    writeln!(f, "{CSV_HEADER}").map_err(CliError::io(path))?;
    for r in rows {
        writeln!(f, "{}", r.csv_line()).map_err(CliError::io(path))?;
    }
    Ok(())
}

fn bench_scene(cfg: &BenchConfig) -> Result<Arc<Scene>, CliError> {
    let ticks = cfg.track_ticks.max(1) as u64 + 1;
    let mut s = Scenario::panorama(cfg.seed, cfg.streams, cfg.width, cfg.height, 0.8, 15.0);
    s.ticks = ticks;
    s.objects = circling_objects(5, 80.0, -0.4 * cfg.streams as f64, 0.3, 0.5, ticks);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    s.distortion = (1..cfg.streams as u16)
        .map(|c| random_distortion(&mut rng, c, (0.7, 1.4), (-20.0, 20.0)))
        .collect();
    Ok(Arc::new(Scene::new(s)?))
}

fn rates(repeats: usize, iterations: usize, mut pass: impl FnMut()) -> (f64, f64, f64) {
    let mut r: Vec<f64> = (0..repeats.max(1))
        .map(|_| {
            let t = Instant::now();
            pass();
            iterations as f64 / t.elapsed().as_secs_f64()
        })
        .collect();
    r.sort_by(f64::total_cmp);
    (r[r.len() / 2], r[0], r[r.len() - 1])
}

/// Measures exposure application, map fitting and attention+detection+tracking.
pub fn cmd_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>, CliError> {
    if cfg.streams == 0 || cfg.width == 0 || cfg.height == 0 {
        return Err(CliError::Config(
            "streams, width and height must be positive".into(),
        ));
    }
    let scene = bench_scene(cfg)?;
    let renderer = SceneRenderer::new(scene.clone());
    let sets: Vec<Vec<Frame>> = (0..4).map(|t| renderer.render_tick(t).frames).collect();

    let mut est = ExposureEstimator::new(cfg.mode, cfg.params);
    for s in &sets {
        est.update(s).map_err(|e| CliError::Config(e.to_string()))?;
    }
    let maps = est.maps().unwrap_or_default().to_vec();
    let row = |stage: &str, iterations, (fps, min_fps, max_fps)| BenchRow {
        stage: stage.to_string(),
        streams: cfg.streams,
        width: cfg.width,
        height: cfg.height,
        threads: rayon::current_num_threads(),
        iterations,
        fps,
        min_fps,
        max_fps,
    };
    let mut rows = Vec::new();

    // the pipeline applier copies the shared frames before correcting them, so do the same
    let n = cfg.apply_iterations.max(1);
    rows.push(row(
        "apply",
        n,
        rates(cfg.repeats, n, || {
            for i in 0..n {
                let mut f = sets[i % sets.len()].clone();
                correct_frames(&mut f, &maps);
                std::hint::black_box(&f);
            }
        }),
    ));

    let n = cfg.fit_iterations.max(1);
    let mut fit_err = None;
    rows.push(row(
        "fit",
        n,
        rates(cfg.repeats, n, || {
            for i in 0..n {
                if let Err(e) = est.update(&sets[i % sets.len()]) {
                    fit_err = Some(e);
                }
            }
        }),
    ));
    if let Some(e) = fit_err {
        return Err(CliError::Config(e.to_string()));
    }

    let n = cfg.track_ticks.max(1);
    let track_sets: Vec<Vec<Frame>> = (0..n as u64)
        .map(|t| renderer.render_tick(t).frames)
        .collect();
    let pcfg = PipelineConfig::default();
    let mut track_err = None;
    rows.push(row(
        "track",
        n,
        rates(cfg.repeats, n, || {
            match TrackerCore::new(&pcfg, Some(scene.clone()), 0) {
                Ok(mut core) => {
                    for (t, f) in track_sets.iter().enumerate() {
                        if let Err(e) = core.process(t as u64, f) {
                            track_err = Some(e.to_string());
                        }
                    }
                }
                Err(e) => track_err = Some(e.to_string()),
            }
        }),
    ));
    if let Some(e) = track_err {
        return Err(CliError::Config(e));
    }
    Ok(rows)
}
