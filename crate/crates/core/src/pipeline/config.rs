//! Run configuration, read from TOML.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    FaultSpec, PipelineError, RestartPolicy, APPLIER, EXPOSURE_FIT, POSITIONING, SINK, SOURCE,
    TRACKER,
};
use crate::attention::AttentionParams;
use crate::detect::{DetectParams, OracleNoise, DEFAULT_TOL_DETECT, DEFAULT_TOL_NMS};
use crate::exposure::{ExposureMode, ExposureParams};
use crate::geom::{Category, DEFAULT_DIFF_THRESHOLD};
use crate::tracker::TrackerParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Scenario JSON; relative paths resolve against the config file's directory.
    pub scenario: Option<PathBuf>,
    /// Overrides the scenario's tick count.
    pub ticks: Option<u64>,
    /// Simulated time runs this many times faster than wall time.
    pub speed: f64,
    pub exposure: ExposureConfig,
    pub detector: DetectorConfig,
    pub attention: AttentionParams,
    pub tracker: TrackerParams,
    pub tracking: TrackingConfig,
    pub positioning: bool,
    pub restart: RestartPolicy,
    pub faults: Vec<FaultSpec>,
    /// Wall-clock milliseconds to let non-vital consumers finish after the last tick.
    pub drain_ms: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scenario: None,
            ticks: None,
            speed: 1.0,
            exposure: ExposureConfig::default(),
            detector: DetectorConfig::default(),
            attention: AttentionParams::default(),
            tracker: TrackerParams::default(),
            tracking: TrackingConfig::default(),
            positioning: true,
            restart: RestartPolicy::default(),
            faults: Vec::new(),
            drain_ms: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExposureConfig {
    pub mode: ExposureMode,
    /// Map refits per simulated second.
    pub rate_hz: f64,
    pub params: ExposureParams,
    /// Record the seam cost of every delivered tick.
    pub seam_cost: bool,
}

impl Default for ExposureConfig {
    fn default() -> Self {
        Self {
            mode: ExposureMode::Smoothing,
            rate_hz: 4.0,
            params: ExposureParams::default(),
            seam_cost: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    #[default]
    Oracle,
    Blob,
    External,
}

impl std::str::FromStr for DetectorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(Self::Oracle),
            "blob" => Ok(Self::Blob),
            "external" => Ok(Self::External),
            _ => Err(format!("unknown detector `{s}` (oracle, blob, external)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    pub noise: OracleNoise,
    /// `host:port` of an external detector.
    pub address: Option<String>,
    pub deadline_ms: u64,
    pub blob_category: Category,
    pub tol_detect: f64,
    pub tol_nms: f64,
    pub diff_threshold: u8,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            kind: DetectorKind::Oracle,
            noise: OracleNoise::default(),
            address: None,
            deadline_ms: 100,
            blob_category: Category::Vehicle,
            tol_detect: DEFAULT_TOL_DETECT,
            tol_nms: DEFAULT_TOL_NMS,
            diff_threshold: DEFAULT_DIFF_THRESHOLD,
        }
    }
}

impl DetectorConfig {
    pub fn params(&self) -> DetectParams {
        DetectParams {
            tol_detect: self.tol_detect,
            tol_nms: self.tol_nms,
        }
    }

    pub fn socket_addr(&self) -> Result<SocketAddr, PipelineError> {
        let a = self
            .address
            .as_deref()
            .ok_or_else(|| PipelineError::Config("external detector needs `address`".into()))?;
        a.parse()
            .map_err(|e| PipelineError::Config(format!("detector address `{a}`: {e}")))
    }

    pub fn deadline(&self) -> Duration {
        Duration::from_millis(self.deadline_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    pub enabled: bool,
    /// Run the tracker in a child process bridged over a local socket.
    pub process: bool,
    /// Executable providing the `tracker-worker` subcommand; defaults to the current one.
    pub worker_exe: Option<PathBuf>,
    pub queue_capacity: usize,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            process: false,
            worker_exe: None,
            queue_capacity: 8,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let c: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut c = Self::from_toml(&text)?;
        if let (Some(s), Some(dir)) = (&c.scenario, path.parent()) {
            if s.is_relative() {
                c.scenario = Some(dir.join(s));
            }
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if !(self.speed.is_finite() && self.speed > 0.0) {
            return bad("speed must be positive");
        }
        if !(self.exposure.rate_hz.is_finite() && self.exposure.rate_hz > 0.0) {
            return bad("exposure.rate_hz must be positive");
        }
        if !(0.0..=1.0).contains(&self.exposure.params.alpha) {
            return bad("exposure.params.alpha must lie in [0, 1]");
        }
        if self.exposure.params.blocks == 0 || self.exposure.params.band_width == 0 {
            return bad("exposure.params.blocks and band_width must be positive");
        }
        if self.tracking.queue_capacity == 0 {
            return bad("tracking.queue_capacity must be at least 1");
        }
        if self.attention.window == 0 || self.attention.budget == 0 {
            return bad("attention.window and attention.budget must be positive");
        }
        if self.detector.kind == DetectorKind::External {
            self.detector.socket_addr()?;
        }
        for f in &self.faults {
            check_fault_target(&f.component, &[EXPOSURE_FIT, TRACKER, POSITIONING])?;
        }
        Ok(())
    }
}

/// Faults may only target non-vital components.
pub(crate) fn check_fault_target(name: &str, non_vital: &[&str]) -> Result<(), PipelineError> {
    if [SOURCE, APPLIER, SINK].contains(&name) {
        return Err(PipelineError::VitalFault(name.to_string()));
    }
    if !non_vital.contains(&name) {
        return Err(PipelineError::UnknownComponent(name.to_string()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::FaultKind;

    #[test]
    fn empty_config_uses_defaults() {
        let c = PipelineConfig::from_toml("").unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert_eq!(c.tracking.queue_capacity, 8);
        assert_eq!(c.exposure.rate_hz, 4.0);
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
            speed = 2.0
            ticks = 600
            [exposure]
            mode = "object_removal"
            [exposure.params]
            blocks = 8
            [detector]
            kind = "oracle"
            noise = { sigma = 2.0, dropout = 0.05, false_positive = 0.0 }
            [[faults]]
            component = "tracker"
            at_tick = 100
            kind = "crash"
        "#;
        let c = PipelineConfig::from_toml(text).unwrap();
        assert_eq!(c.exposure.mode, ExposureMode::ObjectRemoval);
        assert_eq!(c.exposure.params.blocks, 8);
        assert_eq!(c.exposure.params.band_width, 32);
        assert_eq!(c.faults[0].kind, FaultKind::Crash);
        assert_eq!(PipelineConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "speed = 0.0",
            "bogus = 1",
            "[tracking]\nqueue_capacity = 0",
            "[exposure.params]\nblocks = 0",
            "[detector]\nkind = \"external\"",
            "[[faults]]\ncomponent = \"nobody\"\nat_tick = 1\nkind = \"crash\"",
        ] {
            assert!(PipelineConfig::from_toml(text).is_err(), "{text}");
        }
        let vital = "[[faults]]\ncomponent = \"source\"\nat_tick = 1\nkind = \"stall\"";
        assert!(matches!(
            PipelineConfig::from_toml(vital),
            Err(PipelineError::VitalFault(_))
        ));
    }
}
