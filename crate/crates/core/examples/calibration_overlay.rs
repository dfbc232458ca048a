// What the calibration service shows: the terrain wireframe seen by a camera, blended
// over its frame and written out as PNG.

use std::error::Error;
use std::sync::Arc;

use towerkit::cli::{blend, render_wireframe};
use towerkit::scenegen::{Scenario, Scene, SceneRenderer};
use towerkit::world3d::DepthMap;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let scene = Arc::new(Scene::new(Scenario::panorama(2, 1, 320, 240, 1.0, 15.0))?);
    let frame = SceneRenderer::new(scene.clone())
        .render_tick(0)
        .frames
        .remove(0);

    let mut cam = scene.cameras()[0].clone();
    for yaw_error in [0.0, 0.05] {
        cam.yaw = scene.cameras()[0].yaw + yaw_error;
        let depth = DepthMap::build(&cam, &scene.terrain);
        let wire = render_wireframe(&cam, &scene.terrain, &depth);
        let drawn = wire.pixels().filter(|p| p.0[3] > 0).count();
        let out = blend(&frame, &wire, 0.5);
        let path = std::env::temp_dir().join(format!("towerkit_overlay_{yaw_error}.png"));
        let (w, h) = out.dims();
        image::save_buffer(
            &path,
            out.pixels(),
            w as u32,
            h as u32,
            image::ExtendedColorType::Rgb8,
        )?;
        println!(
            "yaw error {yaw_error}: {drawn} wireframe pixels, wrote {}",
            path.display()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
