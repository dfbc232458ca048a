//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are always visible. The process fails
//! when a criterion fails, except for those listed in `KNOWN_SHORTFALLS`, which are
//! still reported as FAIL.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use towerkit::attention::{AttentionParams, Scheduler};
use towerkit::cli::{cmd_bench, BenchConfig};
use towerkit::detect::{
    nms, Detection, DetectionSource, OracleDetector, OracleNoise, DEFAULT_TOL_NMS,
};
use towerkit::exposure::{
    correct_frames, seam_cost, smooth_exposure, Affine, ExposureEstimator, ExposureMap,
    ExposureMode, ExposureParams, SeamSide, DEFAULT_SEAM_DOWNSAMPLE,
};
use towerkit::geom::{BBox, Category, Frame};
use towerkit::pipeline::{run_graph, FaultSpec, PipelineConfig, TrackUpdate};
use towerkit::scenegen::{
    random_distortion, Distortion, GroundTruth, ObjectSpec, Scenario, Scene, SceneRenderer,
    Waypoint,
};
use towerkit::session::TrackingSession;
use towerkit::tracker::{solve_assignment, Tracker, TrackerParams};
use towerkit::world3d::{position_event, CameraModel, DepthMap, HeightField, Ray, RayHit};

/// Criteria that fail on this implementation for reasons recorded with the project
/// decisions; they print FAIL but do not fail the run.
const KNOWN_SHORTFALLS: &[u32] = &[3];

type Criterion = (u32, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------------------------------
// 1. assignment

/// Minimum total over all injective row→column maps (rows ≤ columns).
fn brute_min(c: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
    if row == c.len() {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for j in 0..c[0].len() {
        if !used[j] {
            used[j] = true;
            best = best.min(c[row][j] + brute_min(c, row + 1, used));
            used[j] = false;
        }
    }
    best
}

fn transpose(c: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..c[0].len())
        .map(|j| c.iter().map(|r| r[j]).collect())
        .collect()
}

fn assignment_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut solver_time = 0.0;
    let mut checked = 0;
    let start = Instant::now();
    for rows in 1..=6 {
        for cols in 1..=6 {
            for k in 0..1000 {
                // integer and dyadic entries keep every sum exact in any order
                let c: Vec<Vec<f64>> = (0..rows)
                    .map(|_| {
                        (0..cols)
                            .map(|_| {
                                if k % 2 == 0 {
                                    rng.random_range(0..20) as f64
                                } else {
                                    rng.random_range(0..100_000) as f64 / 1024.0
                                }
                            })
                            .collect()
                    })
                    .collect();
                let t = Instant::now();
                let a = solve_assignment(&c).expect("finite matrix");
                solver_time += t.elapsed().as_secs_f64();
                let mut seen = vec![false; cols];
                let mut total = 0.0;
                for (i, col) in a.iter().enumerate() {
                    if let Some(j) = *col {
                        if seen[j] {
                            return outcome(false, format!("{rows}x{cols}: column {j} used twice"));
                        }
                        seen[j] = true;
                        total += c[i][j];
                    }
                }
                let assigned = a.iter().flatten().count();
                if assigned != rows.min(cols) {
                    return outcome(false, format!("{rows}x{cols}: {assigned} assignments"));
                }
                let m = if rows <= cols {
                    c.clone()
                } else {
                    transpose(&c)
                };
                let best = brute_min(&m, 0, &mut vec![false; m[0].len()]);
                if total != best {
                    return outcome(
                        false,
                        format!("{rows}x{cols}: total {total} vs optimum {best}"),
                    );
                }
                checked += 1;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    outcome(
        elapsed < 5.0,
        format!("{checked} matrices up to 6x6 exact; solver {solver_time:.3} s, total {elapsed:.3} s (limit 5 s)"),
    )
}

// ---------------------------------------------------------------------------------------
// 2. seam cost

fn seam_cost_improvement() -> Outcome {
    let mut improved = 0;
    let mut ratios = Vec::new();
    for s in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + s);
        let mut sc = Scenario::panorama(100 + s, 2, 320, 240, 1.0, 15.0);
        sc.distortion = vec![random_distortion(&mut rng, 1, (0.5, 2.0), (-40.0, 40.0))];
        let scene = Arc::new(Scene::new(sc).expect("valid scenario"));
        let frames = SceneRenderer::new(scene).render_tick(0).frames;
        let before = seam_cost(&frames[0], &frames[1], DEFAULT_SEAM_DOWNSAMPLE).unwrap();
        let mut est = ExposureEstimator::new(ExposureMode::Standard, ExposureParams::default());
        let maps = est.update(&frames).unwrap();
        let mut corrected = frames.clone();
        correct_frames(&mut corrected, &maps);
        let after = seam_cost(&corrected[0], &corrected[1], DEFAULT_SEAM_DOWNSAMPLE).unwrap();
        let r = after / before;
        ratios.push(r);
        if r <= 0.5 {
            improved += 1;
        }
    }
    ratios.sort_by(f64::total_cmp);
    outcome(
        improved >= 18,
        format!(
            "{improved}/20 scenes at or below half the uncorrected cost (need 18); ratio median {:.3}, worst {:.3}",
            ratios[10],
            ratios[19]
        ),
    )
}

// ---------------------------------------------------------------------------------------
// 3. flicker

/// A bright vehicle crossing the seam of a two-camera row in 60 ticks.
fn crossing_scene() -> Arc<Scene> {
    let ticks = 60;
    let mut sc = Scenario::panorama(3, 2, 320, 240, 1.0, 15.0);
    sc.ticks = ticks;
    sc.distortion = vec![Distortion {
        camera: 1,
        gain: [0.9, 0.85, 0.8],
        offset: [-10.0, 0.0, 5.0],
        gain_drift: [0.0; 3],
        offset_drift: [0.0; 3],
    }];
    let at = |az: f64, tick: f64| Waypoint {
        tick,
        east: 60.0 * az.sin(),
        north: 60.0 * az.cos(),
        altitude: 0.0,
    };
    sc.objects = vec![ObjectSpec {
        id: 1,
        category: Category::Vehicle,
        size: [6.0, 3.0],
        waypoints: vec![at(-0.3, 0.0), at(0.3, ticks as f64)],
        color: Some([235, 235, 235]),
    }];
    Arc::new(Scene::new(sc).expect("valid scenario"))
}

/// Largest per-channel change between consecutive corrected frames over pixels at least
/// two pixels away from the object's box in both frames.
fn max_background_change(scene: &Arc<Scene>, mode: ExposureMode) -> u8 {
    let r = SceneRenderer::new(scene.clone());
    let mut est = ExposureEstimator::new(mode, ExposureParams::default());
    let mut prev: Option<(Vec<Frame>, Vec<GroundTruth>)> = None;
    let mut worst = 0u8;
    for t in 0..scene.scenario.ticks {
        let out = r.render_tick(t);
        let maps = est.update(&out.frames).unwrap();
        let mut cur = out.frames.clone();
        correct_frames(&mut cur, &maps);
        if let Some((pf, pt)) = &prev {
            for (a, b) in pf.iter().zip(&cur) {
                let boxes: Vec<BBox> = pt
                    .iter()
                    .chain(&out.truth)
                    .flat_map(|g| g.camera_boxes.iter())
                    .filter(|(id, _)| *id == a.camera_id)
                    .map(|(_, b)| BBox::new(b.x - 2.0, b.y - 2.0, b.w + 4.0, b.h + 4.0))
                    .collect();
                for y in 0..a.height() {
                    for x in 0..a.width() {
                        let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                        if boxes.iter().any(|b| b.contains_point(cx, cy)) {
                            continue;
                        }
                        let (p, q) = (a.get(x, y), b.get(x, y));
                        for c in 0..3 {
                            worst = worst.max(p[c].abs_diff(q[c]));
                        }
                    }
                }
            }
        }
        prev = Some((cur, out.truth));
    }
    worst
}

fn flicker_mitigation() -> Outcome {
    let scene = crossing_scene();
    let std = max_background_change(&scene, ExposureMode::Standard);
    let rem = max_background_change(&scene, ExposureMode::ObjectRemoval);
    let smo = max_background_change(&scene, ExposureMode::Smoothing);
    let limit = std as f64 * 0.5;
    outcome(
        rem as f64 <= limit && smo as f64 <= limit,
        format!(
            "max background change: standard {std}, object_removal {rem}, smoothing {smo} (limit {limit:.1} each)"
        ),
    )
}

// ---------------------------------------------------------------------------------------
// 4. tracking

fn oracle_noise() -> OracleNoise {
    OracleNoise {
        sigma: 2.0,
        dropout: 0.05,
        false_positive: 0.0,
    }
}

fn min_separation(scene: &Scene, ticks: u64) -> f64 {
    let mut best = f64::INFINITY;
    for t in 0..ticks {
        let truth: Vec<GroundTruth> = scene
            .ground_truth(t)
            .into_iter()
            .filter(|g| g.visible)
            .collect();
        for (i, g) in truth.iter().enumerate() {
            for h in &truth[i + 1..] {
                let (a, b) = (g.bbox.center(), h.bbox.center());
                best = best.min((a.0 - b.0).hypot(a.1 - b.1));
            }
        }
    }
    best
}

fn tracking_fidelity() -> Outcome {
    let ticks = 300;
    let scene = Arc::new(Scene::new(common::five_object_scenario(42, 640, 480, ticks)).unwrap());
    let sep = min_separation(&scene, ticks);
    let renderer = SceneRenderer::new(scene.clone());
    let mut session = TrackingSession::new(
        Scheduler::new(AttentionParams {
            window: 480,
            ..Default::default()
        }),
        Box::new(OracleDetector::new(scene.clone(), oracle_noise())),
        Tracker::new(TrackerParams::default()),
    );
    let mut updates = Vec::new();
    for t in 0..ticks {
        let tick = session.process(renderer.render_tick(t).mosaic());
        updates.push(TrackUpdate {
            tick: t,
            objects: session.tracker.objects().to_vec(),
            events: tick.events,
        });
    }
    let f = common::fidelity(&scene, &updates, 0, ticks);
    outcome(
        sep >= 50.0 && f.created.len() == 5 && f.switches == 0 && f.coverage() >= 0.95,
        format!(
            "{} ids created, {} switches, coverage {}/{} = {:.2}% (min separation {sep:.0} px)",
            f.created.len(),
            f.switches,
            f.covered,
            f.visible,
            100.0 * f.coverage()
        ),
    )
}

// ---------------------------------------------------------------------------------------
// 5. geometry

fn rel_err(p: [f64; 3], q: [f64; 3], scale: f64) -> f64 {
    let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
    d / scale
}

fn geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (ga, gb, gc) = (0.08, -0.05, 12.0);
    let plane = HeightField::flat([-500.0, -500.0], 2.0, 501, 501, 7.5);
    let slope =
        HeightField::from_fn([-500.0, -500.0], 2.0, 501, 501, |e, n| ga * e + gb * n + gc).unwrap();
    let mut worst = 0.0f64;
    for (terrain, is_plane) in [(&plane, true), (&slope, false)] {
        for _ in 0..100 {
            let origin = [
                rng.random_range(-200.0..200.0),
                rng.random_range(-200.0..200.0),
                rng.random_range(60.0..120.0),
            ];
            let az: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let el: f64 = rng.random_range(-1.4..-0.35);
            let dir = [el.cos() * az.sin(), el.cos() * az.cos(), el.sin()];
            // exact hit parameter along the unit direction
            let t = if is_plane {
                (7.5 - origin[2]) / dir[2]
            } else {
                (ga * origin[0] + gb * origin[1] + gc - origin[2])
                    / (dir[2] - ga * dir[0] - gb * dir[1])
            };
            let exact = [
                origin[0] + t * dir[0],
                origin[1] + t * dir[1],
                origin[2] + t * dir[2],
            ];
            let hit = terrain
                .raycast(&Ray { origin, dir })
                .expect("origin above terrain");
            let RayHit::Hit { point, depth } = hit else {
                return outcome(false, format!("ray from {origin:?} missed"));
            };
            worst = worst
                .max(rel_err(point, exact, t))
                .max((depth - t).abs() / t);
        }
    }
    if worst > 1e-6 {
        return outcome(false, format!("raycast relative error {worst:.2e} > 1e-6"));
    }

    let hills = HeightField::from_fn([-400.0, -400.0], 2.0, 401, 401, |e, n| {
        6.0 * (e / 45.0).sin() * (n / 60.0).cos() + 0.02 * n
    })
    .unwrap();
    let mut cam = CameraModel::new(0, [0.0, -50.0, 60.0], 0.2, 1.0, 1280, 720);
    cam.pitch = -0.35;
    let depth = DepthMap::build(&cam, &hills);
    let mut errs = Vec::new();
    let mut tries = 0;
    while errs.len() < 100 {
        tries += 1;
        assert!(tries < 100_000, "could not find 100 visible ground points");
        let (e, n) = (
            rng.random_range(-150.0..150.0),
            rng.random_range(0.0..250.0),
        );
        let p = [e, n, hills.height_at(e, n).unwrap()];
        let Some((px, py, _)) = cam.project(p) else {
            continue;
        };
        if !cam.in_image(px, py) {
            continue;
        }
        let (x, y) = (px as usize, py as usize);
        let d = ((p[0] - cam.position[0]).powi(2)
            + (p[1] - cam.position[1]).powi(2)
            + (p[2] - cam.position[2]).powi(2))
        .sqrt();
        // skip points hidden behind a ridge
        if depth.get(x, y).is_none_or(|z| (z - d).abs() > 0.01 * d) {
            continue;
        }
        let q = position_event(&cam, &depth, x, y)
            .unwrap()
            .expect("ground pixel");
        errs.push(((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) + (q[2] - p[2]).powi(2)).sqrt());
    }
    let max = errs.iter().cloned().fold(0.0, f64::max);
    outcome(
        max <= 2.0,
        format!("raycast relative error {worst:.1e} (limit 1e-6); position round trip max {max:.3} m over 100 points (limit 2 m)"),
    )
}

// ---------------------------------------------------------------------------------------
// 6. resilience

fn resilience() -> Outcome {
    let ticks = 600;
    let crash_at = 100;
    let scene = Arc::new(Scene::new(common::five_object_scenario(42, 480, 360, ticks)).unwrap());
    let mut cfg = PipelineConfig::default();
    cfg.attention.window = 360;
    cfg.detector.noise = oracle_noise();
    cfg.faults.push(FaultSpec::crash("tracker", crash_at));
    let out = run_graph(scene.clone(), &cfg).expect("pipeline runs");
    let r = &out.report;
    let on_schedule = r.on_schedule as f64 / ticks as f64;
    let Some(back) = out
        .tracks
        .iter()
        .map(|u| u.tick)
        .filter(|&t| t > crash_at)
        .min()
    else {
        return outcome(false, "tracker never published again");
    };
    let recovery_ms = (back - crash_at) * scene.scenario.tick_ms;
    let f = common::fidelity(&scene, out.tracks.iter().map(|u| u.as_ref()), back, ticks);
    let restarts = r.component("tracker").map_or(0, |c| c.restarts);
    outcome(
        on_schedule >= 0.99
            && recovery_ms <= 5000
            && f.created.len() == 5
            && f.switches == 0
            && f.coverage() >= 0.95,
        format!(
            "on schedule {:.2}%, tracks again at tick {back} ({recovery_ms} ms simulated, {restarts} restart); after recovery {} ids, {} switches, coverage {:.2}%",
            100.0 * on_schedule,
            f.created.len(),
            f.switches,
            100.0 * f.coverage()
        ),
    )
}

// ---------------------------------------------------------------------------------------
// 7. smoothing

fn smoothing_decay() -> Outcome {
    let alpha = 0.05;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (a0, b0): (f64, f64) = (rng.random_range(0.5..2.0), rng.random_range(-60.0..60.0));
        let (at, bt): (f64, f64) = (rng.random_range(0.5..2.0), rng.random_range(-60.0..60.0));
        let map = |a, b| {
            let mut m = ExposureMap::identity((0, 1), SeamSide::Left, 32, 1);
            m.blocks[0] = [Affine { a, b }; 3];
            m
        };
        let target = map(at, bt);
        let mut cur = map(a0, b0);
        // rounding in each step is damped by the following ones; a few tens of ulps of the
        // coefficient scale bound the accumulated error
        let tol = 64.0 * f64::EPSILON * b0.abs().max(bt.abs());
        for n in 1..=200 {
            cur = smooth_exposure(&cur, &target, alpha).unwrap();
            let expect = (1.0 - alpha).powi(n) * (b0 - bt).abs();
            let got = (cur.blocks[0][0].b - bt).abs();
            worst = worst.max((got - expect).abs() / tol);
        }
    }
    outcome(
        worst <= 1.0,
        format!("|b_n - b_target| matches (1-a)^n |b_0 - b_target| for n <= 200; worst error {worst:.3} of the 64-ulp bound"),
    )
}

// ---------------------------------------------------------------------------------------
// 8. throughput

fn throughput() -> Outcome {
    let cfg = BenchConfig::default();
    let rows = match cmd_bench(&cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("bench failed: {e}")),
    };
    let get = |s: &str| rows.iter().find(|r| r.stage == s).map_or(0.0, |r| r.fps);
    let (apply, fit) = (get("apply"), get("fit"));
    outcome(
        apply >= 30.0 && fit >= 4.0,
        format!(
            "{}x{}x{} streams on {} thread(s): apply {apply:.1} FPS (need 30), fit {fit:.1} Hz (need 4), track {:.1} ticks/s",
            cfg.streams,
            cfg.width,
            cfg.height,
            rows[0].threads,
            get("track")
        ),
    )
}

// ---------------------------------------------------------------------------------------
// 9. nms

fn reference_iou(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let h = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let i = w * h;
    i / (a.w * a.h + b.w * b.h - i)
}

/// Repeatedly keep the most probable remaining detection (earliest on ties) and drop
/// everything of its category overlapping it by more than `tol`.
fn reference_nms(dets: &[Detection], tol: f64) -> Vec<Detection> {
    let mut left: Vec<Detection> = dets
        .iter()
        .copied()
        .filter(|d| d.probability > 0.0)
        .collect();
    let mut out = Vec::new();
    while !left.is_empty() {
        let mut best = 0;
        for (i, d) in left.iter().enumerate() {
            if d.probability > left[best].probability {
                best = i;
            }
        }
        let keep = left.remove(best);
        left.retain(|d| !(d.category == keep.category && reference_iou(&d.bbox, &keep.bbox) > tol));
        out.push(keep);
    }
    out
}

fn nms_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut kept = 0;
    for k in 0..1000 {
        let n = rng.random_range(0..=20);
        let dets: Vec<Detection> = (0..n)
            .map(|_| Detection {
                category: Category::ALL[rng.random_range(0..3)],
                bbox: BBox::new(
                    rng.random_range(0.0..60.0),
                    rng.random_range(0.0..60.0),
                    rng.random_range(5.0..40.0),
                    rng.random_range(5.0..40.0),
                ),
                // coarse probabilities make ties common
                probability: rng.random_range(0..=20) as f64 / 20.0,
                frame_index: 0,
                source: DetectionSource::Oracle,
            })
            .collect();
        let got = nms(&dets, DEFAULT_TOL_NMS);
        let want = reference_nms(&dets, DEFAULT_TOL_NMS);
        if got != want {
            return outcome(
                false,
                format!("set {k}: {} kept vs reference {}", got.len(), want.len()),
            );
        }
        kept += got.len();
    }
    outcome(
        true,
        format!("1000 random sets identical to the greedy reference ({kept} detections kept)"),
    )
}

// ---------------------------------------------------------------------------------------

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "assignment exactness", assignment_exactness),
        (2, "seam-cost improvement", seam_cost_improvement),
        (3, "flicker mitigation", flicker_mitigation),
        (4, "tracking fidelity", tracking_fidelity),
        (5, "geometry", geometry),
        (6, "resilience", resilience),
        (7, "exponential smoothing", smoothing_decay),
        (8, "throughput", throughput),
        (9, "nms oracle equivalence", nms_equivalence),
    ];
    let only: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut unexpected = Vec::new();
    for (n, name, f) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let known = KNOWN_SHORTFALLS.contains(&n);
        let tag = match (o.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known shortfall)",
            (false, false) => "FAIL",
        };
        println!(
            "[{n}] {name}: {tag} - {} [{:.1} s]",
            o.detail,
            t.elapsed().as_secs_f64()
        );
        if !o.pass && !known {
            unexpected.push(n);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("acceptance criteria failed: {unexpected:?}");
        std::process::exit(1);
    }
}
