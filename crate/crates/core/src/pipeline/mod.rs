//! Fault-isolated component graph over an in-process message bus.
//!
//! The vital path is frame source → `exposure-apply` → sink. Exposure fitting, tracking
//! and positioning hang off it as non-vital subscribers whose failures are contained by a
//! per-component supervisor.

pub mod bridge;
pub mod bus;
pub mod components;
pub mod config;
pub mod graph;
pub mod wire;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bus::{
    Bus, BusMessage, HealthEvent, Inbox, Payload, Position, Publisher, QueueStats, Recv,
    Subscription, Topic, TrackUpdate,
};
pub use config::{DetectorConfig, DetectorKind, PipelineConfig};
pub use graph::{run_graph, Graph, LatencySummary, RunOptions, RunOutput, RunReport};

pub const SOURCE: &str = "source";
pub const APPLIER: &str = "exposure-apply";
pub const SINK: &str = "sink";
pub const EXPOSURE_FIT: &str = "exposure-fit";
pub const TRACKER: &str = "tracker";
pub const POSITIONING: &str = "positioning";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("fault injection into vital component `{0}` is not allowed")]
    VitalFault(String),
    #[error("no component named `{0}`")]
    UnknownComponent(String),
    #[error(transparent)]
    Scene(#[from] crate::scenegen::SceneError),
    #[error("tracker bridge: {0}")]
    Bridge(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type ComponentError = Box<dyn std::error::Error + Send + Sync>;

/// A unit of work driven by its supervisor, one message at a time.
pub trait Component: Send {
    fn handle(&mut self, msg: &BusMessage, out: &Publisher) -> Result<(), ComponentError>;
}

impl<F> Component for F
where
    F: FnMut(&BusMessage, &Publisher) -> Result<(), ComponentError> + Send,
{
    fn handle(&mut self, msg: &BusMessage, out: &Publisher) -> Result<(), ComponentError> {
        self(msg, out)
    }
}

/// Builds a fresh instance; the argument counts restarts so far.
pub type Factory = Box<dyn Fn(u32) -> Result<Box<dyn Component>, ComponentError> + Send>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RestartPolicy {
    pub max_restarts: u32,
    /// Simulated milliseconds between a failure and the restart.
    pub backoff_ms: u64,
}

impl Default for RestartPolicy {
    fn default() -> Self {
        Self {
            max_restarts: 3,
            backoff_ms: 500,
        }
    }
}

pub struct ComponentSpec {
    pub name: String,
    pub vital: bool,
    pub subscriptions: Vec<Subscription>,
    pub restart: RestartPolicy,
    pub factory: Factory,
}

impl ComponentSpec {
    pub fn new(
        name: &str,
        vital: bool,
        subscriptions: Vec<Subscription>,
        factory: Factory,
    ) -> Self {
        Self {
            name: name.to_string(),
            vital,
            subscriptions,
            restart: RestartPolicy::default(),
            factory,
        }
    }

    pub fn with_restart(mut self, restart: RestartPolicy) -> Self {
        self.restart = restart;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultKind {
    Crash,
    Stall,
}

/// Fires once, when the component first handles a message of tick `at_tick` or later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub component: String,
    pub at_tick: u64,
    pub kind: FaultKind,
    /// Stall length in simulated milliseconds.
    #[serde(default = "default_stall_ms")]
    pub duration_ms: u64,
}

fn default_stall_ms() -> u64 {
    2000
}

impl FaultSpec {
    pub fn crash(component: &str, at_tick: u64) -> Self {
        Self {
            component: component.to_string(),
            at_tick,
            kind: FaultKind::Crash,
            duration_ms: 0,
        }
    }

    pub fn stall(component: &str, at_tick: u64, duration_ms: u64) -> Self {
        Self {
            component: component.to_string(),
            at_tick,
            kind: FaultKind::Stall,
            duration_ms,
        }
    }
}
