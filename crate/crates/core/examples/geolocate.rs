// Terrain from an ESRI ASCII grid, a camera on a mast and the world position under
// a few image pixels.

use std::error::Error;

use towerkit::world3d::{position_event, CameraModel, DepthMap, HeightField, RayHit};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    // a 200 x 200 m tile at 5 m spacing rising gently to the north
    let mut grid = String::from(
        "ncols 41\nnrows 41\nxllcenter -100\nyllcenter 0\ncellsize 5\nNODATA_value -9999\n",
    );
    for row in 0..41 {
        let north = 200.0 - 5.0 * row as f64;
        let line: Vec<String> = (0..41).map(|_| format!("{:.2}", 0.05 * north)).collect();
        grid.push_str(&line.join(" "));
        grid.push('\n');
    }
    let terrain = HeightField::from_ascii_grid(&grid)?;
    let [e0, n0, e1, n1] = terrain.extent();
    println!("terrain covers east {e0}..{e1}, north {n0}..{n1}");

    let mut cam = CameraModel::new(0, [0.0, -20.0, 25.0], 0.0, 1.0, 640, 480);
    cam.pitch = -0.3;
    cam.validate()?;
    let depth = DepthMap::build(&cam, &terrain);

    for (px, py) in [(320, 240), (100, 400), (600, 300), (320, 10)] {
        match position_event(&cam, &depth, px, py)? {
            Some(p) => println!(
                "pixel ({px}, {py}) -> east {:.2} north {:.2} height {:.2}",
                p[0], p[1], p[2]
            ),
            None => println!("pixel ({px}, {py}) sees sky"),
        }
    }

    // the same answer straight from the ray caster
    if let RayHit::Hit { point, depth: d } = terrain.raycast(&cam.pixel_to_ray(320, 240))? {
        println!("centre ray hits at {d:.2} m: {point:.2?}");
        let (x, y, _) = cam.project(point).expect("in front");
        println!("reprojects to ({x:.3}, {y:.3})");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
