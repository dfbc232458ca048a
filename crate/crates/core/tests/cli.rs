mod common;

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use towerkit::cli::{cmd_run, example_scenario, read_minimap, CliError};
use towerkit::pipeline::TRACKER;
use towerkit::scenegen::{Scenario, Scene, SceneRenderer};
use towerkit::tracker::TrackStatus;
use towerkit::world3d::mosaic_position;

fn towerkit(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_towerkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, scenario: &Path, extra: &str) -> std::path::PathBuf {
    let p = dir.join("run.toml");
    let text = format!(
        "scenario = {:?}\n{extra}\n[attention]\nwindow = 480\n[detector]\nnoise = {{ sigma = 2.0, dropout = 0.05, false_positive = 0.0 }}\n",
        scenario.display().to_string()
    );
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn example_scenario_runs_end_to_end_with_five_tracks() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scene.json");
    let s = dir.path().to_str().unwrap();
    let o = towerkit(&["scenegen", "example", "--out", scenario.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let config = write_config(dir.path(), &scenario, "");
    let out = dir.path().join("out");
    let o = towerkit(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("delivered 300/300"));

    for f in [
        "tracks.jsonl",
        "seam_cost.csv",
        "minimap.csv",
        "report.json",
    ] {
        assert!(out.join(f).is_file(), "{f} missing in {s}");
    }
    let rows = read_minimap(&std::fs::read_to_string(out.join("minimap.csv")).unwrap()).unwrap();
    let ids: BTreeSet<u64> = rows.iter().map(|r| r.id).collect();
    assert_eq!(ids.len(), 5, "{ids:?}");

    let seam = std::fs::read_to_string(out.join("seam_cost.csv")).unwrap();
    assert_eq!(seam.lines().next(), Some("tick,seam,cost"));
    assert_eq!(seam.lines().count(), 1 + 300 * 2);

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["run"]["frames_delivered"], 300);
    assert!(report["wall_seconds"].as_f64().unwrap() > 0.0);

    let created = std::fs::read_to_string(out.join("tracks.jsonl"))
        .unwrap()
        .lines()
        .filter(|l| l.contains("\"created\""))
        .count();
    assert_eq!(created, 5);
}

/// Every minimap row is the terrain point under its track's box at that tick.
#[test]
fn minimap_rows_match_geolocated_tracks() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scene.json");
    let mut sc = example_scenario(4, 3, 320, 240, 3, 80);
    sc.ticks = 80;
    std::fs::write(&scenario, sc.to_json()).unwrap();
    let config = write_config(dir.path(), &scenario, "");
    let (files, out) = cmd_run(&config, &dir.path().join("out")).unwrap();
    let rows = read_minimap(&std::fs::read_to_string(&files.minimap).unwrap()).unwrap();
    assert!(!rows.is_empty());

    let scene = Arc::new(Scene::new(Scenario::load(&scenario).unwrap()).unwrap());
    let renderer = SceneRenderer::new(scene.clone());
    let (_, height) = scene.mosaic_dims();
    let mut expected = Vec::new();
    for u in &out.tracks {
        for o in &u.objects {
            if o.status != TrackStatus::Active || o.last_seen() != u.tick {
                continue;
            }
            let p = mosaic_position(
                &o.latest_box(),
                scene.tiles(),
                height,
                scene.cameras(),
                renderer.depth_maps(),
            )
            .unwrap();
            if let Some(p) = p {
                expected.push((u.tick, o.id, o.category.as_str().to_string(), p));
            }
        }
    }
    assert_eq!(rows.len(), expected.len());
    for (r, (tick, id, cat, p)) in rows.iter().zip(&expected) {
        assert_eq!((r.tick, r.id, &r.category), (*tick, *id, cat));
        assert_eq!([r.east, r.north, r.height], *p);
    }
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let o = towerkit(&["run", "--config", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "speed = -1.0\n").unwrap();
    let o = towerkit(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let vital = write_config(
        dir.path(),
        &dir.path().join("scene.json"),
        "[[faults]]\ncomponent = \"exposure-apply\"\nat_tick = 3\nkind = \"crash\"",
    );
    let o = towerkit(&["pipeline", "run", "--config", vital.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("exposure-apply"));

    let no_scene = write_config(dir.path(), &dir.path().join("scene.json"), "");
    let o = towerkit(&["run", "--config", no_scene.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("scenario"));
}

#[test]
fn missing_scenario_is_a_scenario_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &dir.path().join("absent.json"), "");
    let e = cmd_run(&config, &dir.path().join("out")).unwrap_err();
    assert!(matches!(e, CliError::Scenario(_)), "{e}");
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn command_line_overrides_reach_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scene.json");
    std::fs::write(&scenario, example_scenario(2, 2, 160, 120, 1, 20).to_json()).unwrap();
    let config = write_config(dir.path(), &scenario, "");
    let out = dir.path().join("out");
    let o = towerkit(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--exposure-mode",
        "smoothing",
        "--blocks",
        "4",
        "--detector",
        "blob",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = towerkit(&["run", "--config", config.to_str().unwrap(), "--blocks", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = towerkit(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--exposure-mode",
        "vivid",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn tracker_crash_in_config_is_survived() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scene.json");
    std::fs::write(&scenario, example_scenario(3, 2, 160, 120, 2, 60).to_json()).unwrap();
    let config = write_config(
        dir.path(),
        &scenario,
        "[[faults]]\ncomponent = \"tracker\"\nat_tick = 20\nkind = \"crash\"",
    );
    let (_, out) = cmd_run(&config, &dir.path().join("out")).unwrap();
    assert_eq!(out.report.frames_delivered, 60);
    assert_eq!(out.report.component(TRACKER).unwrap().restarts, 1);
}

#[test]
fn scenegen_render_writes_frames_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scene.json");
    std::fs::write(&scenario, example_scenario(5, 2, 64, 48, 2, 10).to_json()).unwrap();
    let out = dir.path().join("frames");
    let o = towerkit(&[
        "scenegen",
        "render",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--ticks",
        "3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for t in 0..3 {
        for c in 0..2 {
            let bytes = std::fs::read(out.join(format!("tick_{t}_cam_{c}.ppm"))).unwrap();
            assert!(bytes.starts_with(b"P6\n64 48\n255\n"));
            assert_eq!(bytes.len(), 13 + 64 * 48 * 3);
        }
    }
    let truth = std::fs::read_to_string(out.join("truth.jsonl")).unwrap();
    assert_eq!(truth.lines().count(), 3);
    let first: serde_json::Value = serde_json::from_str(truth.lines().next().unwrap()).unwrap();
    assert_eq!(first.as_array().unwrap().len(), 2);
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bench.csv");
    let o = towerkit(&[
        "bench",
        "--streams",
        "2",
        "--width",
        "128",
        "--height",
        "96",
        "--iterations",
        "3",
        "--repeats",
        "1",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(csv).unwrap();
    let stages: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(stages, ["apply", "fit", "track"]);
}
