//! `scenegen` subcommands: render scenario frames to disk and emit starter scenarios.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::CliError;
use crate::pnm::write_ppm;
use crate::scenegen::{circling_objects, random_distortion, Scenario, Scene, SceneRenderer};

/// Writes `tick_<t>_cam_<id>.ppm` for every camera and a `truth.jsonl` with one
/// ground-truth array per tick. Returns the number of images written.
pub fn render_scenario(
    scenario: &Path,
    out_dir: &Path,
    ticks: Option<u64>,
) -> Result<usize, CliError> {
    let scene = Arc::new(Scene::new(Scenario::load(scenario)?)?);
    let ticks = ticks.unwrap_or(scene.scenario.ticks);
    std::fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;
    let renderer = SceneRenderer::new(scene);
    let truth_path = out_dir.join("truth.jsonl");
    let mut truth = BufWriter::new(File::create(&truth_path).map_err(CliError::io(&truth_path))?);
    let mut written = 0;
    for t in 0..ticks {
        let out = renderer.render_tick(t);
        for f in &out.frames {
            let p = out_dir.join(format!("tick_{t}_cam_{}.ppm", f.camera_id));
            let file = File::create(&p).map_err(CliError::io(&p))?;
            write_ppm(BufWriter::new(file), f)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            written += 1;
        }
        let line = serde_json::to_string(&out.truth).expect("truth serializes");
        writeln!(truth, "{line}").map_err(CliError::io(&truth_path))?;
    }
    truth.flush().map_err(CliError::io(&truth_path))?;
    Ok(written)
}

/// A panorama of `cameras` abutting views with `objects` objects circling in front of it
/// and a random exposure distortion on every camera but the first.
pub fn example_scenario(
    seed: u64,
    cameras: usize,
    width: usize,
    height: usize,
    objects: usize,
    ticks: u64,
) -> Scenario {
    let hfov = 1.0;
    let mut s = Scenario::panorama(seed, cameras, width, height, hfov, 15.0);
    s.ticks = ticks;
    // spread over the left part of the panorama, drifting right at 0.002 rad per tick
    let span = hfov * cameras as f64 * 0.8;
    let sweep = 0.002 * ticks as f64;
    let spacing = (span - sweep).max(0.0) / objects.max(1) as f64;
    s.objects = circling_objects(objects, 80.0, -span / 2.0, spacing, sweep, ticks);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    s.distortion = (1..cameras as u16)
        .map(|c| random_distortion(&mut rng, c, (0.7, 1.4), (-20.0, 20.0)))
        .collect();
    s
}
