// Attention-scheduled detection and tracking over a rendered panorama, scored
// against the scene's ground truth.

use std::error::Error;
use std::sync::Arc;

use towerkit::attention::{AttentionParams, Scheduler};
use towerkit::detect::{OracleDetector, OracleNoise};
use towerkit::scenegen::{circling_objects, Scenario, Scene, SceneRenderer};
use towerkit::session::TrackingSession;
use towerkit::tracker::{EventKind, Tracker, TrackerParams};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let ticks = 120;
    let mut sc = Scenario::panorama(5, 3, 480, 360, 1.0, 15.0);
    sc.ticks = ticks;
    sc.objects = circling_objects(3, 80.0, -1.0, 0.7, 0.3, ticks);
    let scene = Arc::new(Scene::new(sc)?);
    let renderer = SceneRenderer::new(scene.clone());
    let noise = OracleNoise {
        sigma: 2.0,
        dropout: 0.05,
        false_positive: 0.0,
    };
    let mut session = TrackingSession::new(
        Scheduler::new(AttentionParams {
            window: 360,
            ..Default::default()
        }),
        Box::new(OracleDetector::new(scene.clone(), noise)),
        Tracker::new(TrackerParams::default()),
    );

    let mut created = 0;
    for t in 0..ticks {
        let tick = session.process(renderer.render_tick(t).mosaic());
        for e in &tick.events {
            if e.event == EventKind::Created {
                created += 1;
                println!(
                    "tick {t}: new {} track {:?} at {:?}",
                    e.category.as_str(),
                    e.id,
                    e.bbox
                );
            }
        }
        if t % 30 == 0 {
            let mechanisms: Vec<_> = tick.requests.iter().map(|r| r.mechanism).collect();
            println!("tick {t}: windows {mechanisms:?}");
        }
    }
    println!(
        "{created} tracks for {} objects",
        scene.scenario.objects.len()
    );
    assert_eq!(created, 3);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
