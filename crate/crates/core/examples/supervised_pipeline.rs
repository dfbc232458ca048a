// The full component graph with a tracker crash injected: frames keep flowing on the
// vital path while the supervisor restarts the tracker.

use std::error::Error;
use std::sync::Arc;

use towerkit::cli::example_scenario;
use towerkit::pipeline::{run_graph, FaultSpec, HealthEvent, PipelineConfig, TRACKER};
use towerkit::scenegen::Scene;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let scene = Arc::new(Scene::new(example_scenario(1, 3, 320, 240, 3, 90))?);
    let mut cfg = PipelineConfig::default();
    cfg.attention.window = 240;
    // four times faster than real time
    cfg.speed = 4.0;
    cfg.faults.push(FaultSpec::crash(TRACKER, 30));
    let out = run_graph(scene, &cfg)?;
    let r = &out.report;

    println!(
        "delivered {}/{} frame sets, {:.1}% on schedule, median latency {:.2} ms",
        r.frames_delivered,
        r.ticks,
        100.0 * r.on_schedule_ratio,
        r.latency.median_ms
    );
    for h in &r.health {
        match h {
            HealthEvent::Down {
                component,
                tick,
                reason,
            } => {
                println!("tick {tick}: {component} down ({reason})")
            }
            HealthEvent::Up {
                component,
                tick,
                restart,
            } => {
                println!("tick {tick}: {component} up, restart {restart}")
            }
            HealthEvent::Degraded { component, tick } => {
                println!("tick {tick}: {component} degraded")
            }
        }
    }
    let positions = out.positions.len();
    println!(
        "{} track updates, {positions} geolocated positions",
        out.tracks.len()
    );
    assert_eq!(r.component(TRACKER).map(|c| c.restarts), Some(1));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
