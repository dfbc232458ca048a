// The two small algorithms under the tracker: greedy non-maximum suppression of
// overlapping detections and optimal assignment of detections to tracks.

use std::error::Error;

use towerkit::detect::{nms, Detection, DetectionSource, DEFAULT_TOL_NMS};
use towerkit::geom::{iou, BBox, Category};
use towerkit::tracker::solve_assignment;

fn det(x: f64, y: f64, p: f64) -> Detection {
    Detection {
        category: Category::Person,
        bbox: BBox::new(x, y, 20.0, 40.0),
        probability: p,
        frame_index: 0,
        source: DetectionSource::Oracle,
    }
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let raw = [
        det(10.0, 10.0, 0.9),
        det(12.0, 11.0, 0.8),
        det(100.0, 10.0, 0.7),
        det(103.0, 14.0, 0.95),
        det(300.0, 50.0, 0.0),
    ];
    let kept = nms(&raw, DEFAULT_TOL_NMS);
    for d in &kept {
        println!(
            "kept p={:.2} at ({}, {})",
            d.probability, d.bbox.x, d.bbox.y
        );
    }

    // tracks last seen slightly left of the detections
    let tracks = [
        BBox::new(95.0, 12.0, 20.0, 40.0),
        BBox::new(5.0, 10.0, 20.0, 40.0),
    ];
    let cost: Vec<Vec<f64>> = kept
        .iter()
        .map(|d| tracks.iter().map(|t| 1.0 - iou(&d.bbox, t)).collect())
        .collect();
    let assignment = solve_assignment(&cost)?;
    for (i, a) in assignment.iter().enumerate() {
        println!("detection {i} -> track {a:?}");
    }
    assert_eq!(assignment, [Some(0), Some(1)]);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
