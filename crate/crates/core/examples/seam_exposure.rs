// Two cameras with mismatched exposure: fit per-block seam maps and compare the
// seam cost before and after correction.

use std::error::Error;
use std::sync::Arc;

use towerkit::exposure::{
    correct_frames, seam_cost, ExposureEstimator, ExposureMode, ExposureParams,
    DEFAULT_SEAM_DOWNSAMPLE,
};
use towerkit::scenegen::{Distortion, Scenario, Scene, SceneRenderer};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mut sc = Scenario::panorama(11, 2, 320, 240, 1.0, 15.0);
    sc.distortion = vec![Distortion {
        camera: 1,
        gain: [1.4, 1.3, 1.1],
        offset: [-25.0, -10.0, 5.0],
        gain_drift: [0.0; 3],
        offset_drift: [0.0; 3],
    }];
    let renderer = SceneRenderer::new(Arc::new(Scene::new(sc)?));
    let frames = renderer.render_tick(0).frames;
    let raw = seam_cost(&frames[0], &frames[1], DEFAULT_SEAM_DOWNSAMPLE)?;
    println!("uncorrected seam cost {raw:.2}");

    let mut est = ExposureEstimator::new(ExposureMode::Standard, ExposureParams::default());
    let maps = est.update(&frames)?;
    for (k, block) in maps[0].right.blocks.iter().enumerate().step_by(4) {
        let [r, g, b] = block.map(|m| format!("{:.3}x{:+.1}", m.a, m.b));
        println!("right side block {k}: r {r}  g {g}  b {b}");
    }
    let mut out = frames.clone();
    correct_frames(&mut out, &maps);
    let cost = seam_cost(&out[0], &out[1], DEFAULT_SEAM_DOWNSAMPLE)?;
    println!(
        "corrected seam cost {cost:.2} ({:.0}% of uncorrected)",
        100.0 * cost / raw
    );
    assert!(cost < 0.5 * raw);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
