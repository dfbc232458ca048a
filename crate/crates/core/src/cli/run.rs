//! `run`: one pipeline run from a config file, with its outputs written to a directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use super::CliError;
use crate::pipeline::{run_graph, PipelineConfig, RunOutput, RunReport};
use crate::scenegen::{Scenario, Scene};
use crate::tracker::write_events;

pub const TRACKS_FILE: &str = "tracks.jsonl";
pub const SEAM_COST_FILE: &str = "seam_cost.csv";
pub const MINIMAP_FILE: &str = "minimap.csv";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq)]
pub struct RunFiles {
    pub tracks: PathBuf,
    pub seam_cost: PathBuf,
    pub minimap: PathBuf,
    pub report: PathBuf,
}

impl RunFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            tracks: dir.join(TRACKS_FILE),
            seam_cost: dir.join(SEAM_COST_FILE),
            minimap: dir.join(MINIMAP_FILE),
            report: dir.join(REPORT_FILE),
        }
    }
}

/// Contents of `report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary<'a> {
    pub wall_seconds: f64,
    /// Delivered frame sets per wall-clock second.
    pub delivered_fps: f64,
    pub run: &'a RunReport,
}

/// Loads the config and its scenario, runs the pipeline and writes the output files.
///
/// A run stopped by a vital failure still writes its files before returning
/// [`CliError::Aborted`].
pub fn cmd_run(config: &Path, out_dir: &Path) -> Result<(RunFiles, RunOutput), CliError> {
    cmd_run_config(PipelineConfig::load(config)?, out_dir)
}

/// As [`cmd_run`] for an already loaded config; a relative scenario path resolves against
/// the working directory.
pub fn cmd_run_config(
    cfg: PipelineConfig,
    out_dir: &Path,
) -> Result<(RunFiles, RunOutput), CliError> {
    cfg.validate()?;
    let path = cfg
        .scenario
        .clone()
        .ok_or_else(|| CliError::Config("config has no `scenario`".into()))?;
    let scene = Arc::new(Scene::new(Scenario::load(&path)?)?);
    std::fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;

    let start = Instant::now();
    let out = run_graph(scene, &cfg)?;
    let wall = start.elapsed().as_secs_f64();
    let files = RunFiles::in_dir(out_dir);
    write_outputs(&files, &out, wall)?;
    if let Some(why) = &out.report.aborted {
        return Err(CliError::Aborted(why.clone()));
    }
    tracing::info!(
        delivered = out.report.frames_delivered,
        on_schedule = out.report.on_schedule_ratio,
        "run finished"
    );
    Ok((files, out))
}

pub fn write_outputs(files: &RunFiles, out: &RunOutput, wall_seconds: f64) -> Result<(), CliError> {
    let create = |p: &Path| File::create(p).map(BufWriter::new).map_err(CliError::io(p));

    let mut w = create(&files.tracks)?;
    for u in &out.tracks {
        write_events(&mut w, &u.events).map_err(CliError::io(&files.tracks))?;
    }
    w.flush().map_err(CliError::io(&files.tracks))?;

    let mut w = create(&files.seam_cost)?;
    let io = CliError::io(&files.seam_cost);
    let r: std::io::Result<()> = (|| {
        writeln!(w, "tick,seam,cost")?;
        for rec in &out.sink {
            for (i, c) in rec.seam_costs.iter().enumerate() {
                writeln!(w, "{},{},{}", rec.tick, i, c)?;
            }
        }
        w.flush()
    })();
    r.map_err(io)?;

    let mut w = create(&files.minimap)?;
    let io = CliError::io(&files.minimap);
    let r: std::io::Result<()> = (|| {
        writeln!(w, "tick,id,category,east,north,height")?;
        for p in &out.positions {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                p.tick,
                p.id,
                p.category.as_str(),
                p.east,
                p.north,
                p.height
            )?;
        }
        w.flush()
    })();
    r.map_err(io)?;

    let summary = RunSummary {
        wall_seconds,
        delivered_fps: out.report.frames_delivered as f64 / wall_seconds.max(1e-9),
        run: &out.report,
    };
    let text = serde_json::to_string_pretty(&summary).expect("report serializes");
    std::fs::write(&files.report, text).map_err(CliError::io(&files.report))?;
    Ok(())
}

/// One row of `minimap.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimapRow {
    pub tick: u64,
    pub id: u64,
    pub category: String,
    pub east: f64,
    pub north: f64,
    pub height: f64,
}

pub fn read_minimap(text: &str) -> Result<Vec<MinimapRow>, CliError> {
    let bad = |n: usize| CliError::Config(format!("minimap line {n}: malformed"));
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return Err(bad(n + 1));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(n + 1));
            Ok(MinimapRow {
                tick: f[0].parse().map_err(|_| bad(n + 1))?,
                id: f[1].parse().map_err(|_| bad(n + 1))?,
                category: f[2].to_string(),
                east: num(f[3])?,
                north: num(f[4])?,
                height: num(f[5])?,
            })
        })
        .collect()
}
