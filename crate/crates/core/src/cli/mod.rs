//! Operator entry points behind the `towerkit` binary.

pub mod bench;
pub mod calib;
pub mod render;
pub mod run;
pub mod scene;

use std::path::PathBuf;

use thiserror::Error;

use crate::pipeline::PipelineError;
use crate::scenegen::SceneError;
use crate::world3d::GeoError;

pub use bench::{cmd_bench, BenchConfig, BenchRow};
pub use calib::{calib_router, CalibState};
pub use render::{blend, render_wireframe};
pub use run::{cmd_run, cmd_run_config, read_minimap, MinimapRow, RunFiles};
pub use scene::{example_scenario, render_scenario};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("scenario: {0}")]
    Scenario(#[from] SceneError),
    #[error(transparent)]
    Pipeline(PipelineError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("run aborted: {0}")]
    Aborted(String),
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(m) => CliError::Config(m),
            PipelineError::VitalFault(_) | PipelineError::UnknownComponent(_) => {
                CliError::Config(e.to_string())
            }
            PipelineError::Scene(s) => CliError::Scenario(s),
            other => CliError::Pipeline(other),
        }
    }
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// 2 for bad input, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Scenario(_) => 2,
            _ => 1,
        }
    }
}
