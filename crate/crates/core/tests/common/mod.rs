#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use towerkit::geom::iou;
use towerkit::pipeline::TrackUpdate;
use towerkit::scenegen::{circling_objects, Scenario, Scene};
use towerkit::tracker::{EventKind, TrackedObject};

/// Five objects on arcs around a three-camera panorama, kept well apart.
pub fn five_object_scenario(seed: u64, width: usize, height: usize, ticks: u64) -> Scenario {
    let mut sc = Scenario::panorama(seed, 3, width, height, 1.0, 15.0);
    sc.ticks = ticks;
    sc.objects = circling_objects(5, 80.0, -1.2, 0.4, 0.6, ticks);
    sc
}

/// Tracking quality against ground truth over a range of ticks.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Fidelity {
    /// Track ids created inside the range.
    pub created: BTreeSet<u64>,
    /// Changes of the matched track id per ground-truth object.
    pub switches: usize,
    pub visible: usize,
    pub covered: usize,
}

impl Fidelity {
    pub fn coverage(&self) -> f64 {
        self.covered as f64 / self.visible.max(1) as f64
    }
}

/// Track whose current box best overlaps `gt` with IoU at least 0.5, same category.
fn matching(objects: &[TrackedObject], g: &towerkit::scenegen::GroundTruth) -> Option<u64> {
    objects
        .iter()
        .filter(|o| o.category == g.category)
        .map(|o| (o.id, iou(&o.latest_box(), &g.bbox)))
        .filter(|&(_, v)| v >= 0.5)
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(id, _)| id)
}

/// Scores tracker snapshots `(tick, objects, events)` for ticks in `[from, to)`.
/// Ticks without a snapshot count as uncovered.
pub fn fidelity<'a>(
    scene: &Scene,
    updates: impl IntoIterator<Item = &'a TrackUpdate>,
    from: u64,
    to: u64,
) -> Fidelity {
    let by_tick: HashMap<u64, &TrackUpdate> = updates.into_iter().map(|u| (u.tick, u)).collect();
    let mut f = Fidelity::default();
    let mut last_match: HashMap<u32, u64> = HashMap::new();
    for t in from..to {
        let update = by_tick.get(&t);
        if let Some(u) = update {
            f.created.extend(
                u.events
                    .iter()
                    .filter(|e| e.event == EventKind::Created)
                    .filter_map(|e| e.id),
            );
        }
        for g in scene.ground_truth(t) {
            if !g.visible {
                continue;
            }
            f.visible += 1;
            let Some(id) = update.and_then(|u| matching(&u.objects, &g)) else {
                continue;
            };
            f.covered += 1;
            if let Some(prev) = last_match.insert(g.id, id) {
                if prev != id {
                    f.switches += 1;
                }
            }
        }
    }
    f
}
