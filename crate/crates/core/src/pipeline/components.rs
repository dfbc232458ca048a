//! The standard components and the tracker logic shared with the worker process.

use std::sync::{mpsc, Arc};
use std::time::Instant;

use super::bus::{HealthEvent, Payload, Position, Publisher, Subscription, Topic, TrackUpdate};
use super::config::{DetectorKind, PipelineConfig};
use super::graph::Clock;
use super::{BusMessage, Component, ComponentError, ComponentSpec, PipelineError};
use super::{APPLIER, EXPOSURE_FIT, POSITIONING, SOURCE, TRACKER};
use crate::attention::Scheduler;
use crate::detect::{BlobDetector, Detection, Detector, ExternalDetector, OracleDetector};
use crate::exposure::{
    correct_frames, seam_cost, ExposureEstimator, SeamMaps, DEFAULT_SEAM_DOWNSAMPLE,
};
use crate::geom::{Frame, Mosaic, RasterError, Tile};
use crate::scenegen::Scene;
use crate::session::TrackingSession;
use crate::tracker::{TrackStatus, Tracker};
use crate::world3d::{mosaic_position, CameraModel, DepthMap};

/// Applies the newest exposure maps to every source frame set.
#[derive(Default)]
pub struct Applier {
    maps: Option<Arc<Vec<SeamMaps>>>,
}

impl Component for Applier {
    fn handle(&mut self, msg: &BusMessage, out: &Publisher) -> Result<(), ComponentError> {
        match &msg.payload {
            Payload::ExposureMaps(m) => self.maps = Some(m.clone()),
            Payload::Frames(f) => {
                let mut frames = f.as_ref().clone();
                if let Some(m) = &self.maps {
                    correct_frames(&mut frames, m);
                }
                out.publish(msg.tick, Payload::Frames(Arc::new(frames)));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Vital; maps are drained before frames so a frame set always sees the newest maps.
pub fn applier_spec() -> ComponentSpec {
    ComponentSpec::new(
        APPLIER,
        true,
        vec![
            Subscription::latest(Topic::ExposureMaps).from_publisher(EXPOSURE_FIT),
            Subscription::latest(Topic::Frames).from_publisher(SOURCE),
        ],
        Box::new(|_| Ok(Box::new(Applier::default()))),
    )
}

/// Refits exposure maps from raw source frames at a fixed simulated rate.
pub struct ExposureFit {
    pub estimator: ExposureEstimator,
    period_ms: f64,
    tick_ms: f64,
    next_due: f64,
}

impl ExposureFit {
    pub fn new(estimator: ExposureEstimator, rate_hz: f64, tick_ms: u64) -> Self {
        Self {
            estimator,
            period_ms: 1000.0 / rate_hz,
            tick_ms: tick_ms as f64,
            next_due: 0.0,
        }
    }
}

impl Component for ExposureFit {
    fn handle(&mut self, msg: &BusMessage, out: &Publisher) -> Result<(), ComponentError> {
        let Payload::Frames(frames) = &msg.payload else {
            return Ok(());
        };
        let now = msg.tick as f64 * self.tick_ms;
        if now < self.next_due {
            return Ok(());
        }
        while self.next_due <= now {
            self.next_due += self.period_ms;
        }
        let maps = self.estimator.update(frames)?;
        out.publish(msg.tick, Payload::ExposureMaps(Arc::new(maps)));
        Ok(())
    }
}

pub fn exposure_fit_spec(cfg: &PipelineConfig, tick_ms: u64) -> ComponentSpec {
    let e = cfg.exposure;
    ComponentSpec::new(
        EXPOSURE_FIT,
        false,
        vec![Subscription::latest(Topic::Frames).from_publisher(SOURCE)],
        Box::new(move |_| {
            let est = ExposureEstimator::new(e.mode, e.params);
            Ok(Box::new(ExposureFit::new(est, e.rate_hz, tick_ms)))
        }),
    )
    .with_restart(cfg.restart)
}

pub fn build_detector(
    cfg: &PipelineConfig,
    scene: Option<Arc<Scene>>,
) -> Result<Box<dyn Detector>, PipelineError> {
    let d = &cfg.detector;
    Ok(match d.kind {
        DetectorKind::Oracle => {
            let scene = scene.ok_or_else(|| {
                PipelineError::Config("the oracle detector needs a scenario".into())
            })?;
            Box::new(OracleDetector::new(scene, d.noise))
        }
        DetectorKind::Blob => Box::new(BlobDetector {
            diff_threshold: d.diff_threshold,
            category: d.blob_category,
        }),
        DetectorKind::External => {
            let mut x = ExternalDetector::new(d.socket_addr()?);
            x.deadline = d.deadline();
            Box::new(x)
        }
    })
}

/// First track id handed out by the tracker's `generation`-th instance, so ids never
/// repeat across restarts.
pub fn first_track_id(generation: u32) -> u64 {
    generation as u64 * 1_000_000 + 1
}

/// Attention, detection and tracking for one frame set at a time.
pub struct TrackerCore {
    pub session: TrackingSession,
}

pub struct TrackerOutput {
    pub detections: Vec<Detection>,
    pub update: TrackUpdate,
    pub degraded: bool,
}

impl TrackerCore {
    pub fn new(
        cfg: &PipelineConfig,
        scene: Option<Arc<Scene>>,
        generation: u32,
    ) -> Result<Self, PipelineError> {
        let tracker = Tracker::new(cfg.tracker).with_first_id(first_track_id(generation));
        let mut session = TrackingSession::new(
            Scheduler::new(cfg.attention),
            build_detector(cfg, scene)?,
            tracker,
        );
        session.detect_params = cfg.detector.params();
        session.diff_threshold = cfg.detector.diff_threshold;
        Ok(Self { session })
    }

    pub fn process(&mut self, tick: u64, frames: &[Frame]) -> Result<TrackerOutput, RasterError> {
        let mosaic = Mosaic::from_frames(frames)?;
        let t = self.session.process(mosaic);
        Ok(TrackerOutput {
            detections: t.detections,
            update: TrackUpdate {
                tick,
                objects: self.session.tracker.objects().to_vec(),
                events: t.events,
            },
            degraded: t.degraded,
        })
    }
}

/// Messages carrying a tracker result, in publication order.
pub fn tracker_payloads(component: &str, tick: u64, r: TrackerOutput) -> Vec<Payload> {
    let mut out = Vec::with_capacity(3);
    if r.degraded {
        out.push(Payload::Health(HealthEvent::Degraded {
            component: component.to_string(),
            tick,
        }));
    }
    out.push(Payload::Detections(r.detections));
    out.push(Payload::Tracks(Arc::new(r.update)));
    out
}

pub struct TrackerComponent {
    pub core: TrackerCore,
}

impl Component for TrackerComponent {
    fn handle(&mut self, msg: &BusMessage, out: &Publisher) -> Result<(), ComponentError> {
        if let Payload::Frames(frames) = &msg.payload {
            let r = self.core.process(msg.tick, frames)?;
            for p in tracker_payloads(out.name(), msg.tick, r) {
                out.publish(msg.tick, p);
            }
        }
        Ok(())
    }
}

pub fn tracker_subscriptions(cfg: &PipelineConfig) -> Vec<Subscription> {
    vec![Subscription::queue(Topic::Frames, cfg.tracking.queue_capacity).from_publisher(APPLIER)]
}

pub fn tracker_spec(cfg: &PipelineConfig, scene: Option<Arc<Scene>>) -> ComponentSpec {
    let c = cfg.clone();
    ComponentSpec::new(
        TRACKER,
        false,
        tracker_subscriptions(cfg),
        Box::new(move |generation| {
            let core = TrackerCore::new(&c, scene.clone(), generation)?;
            Ok(Box::new(TrackerComponent { core }))
        }),
    )
    .with_restart(cfg.restart)
}

/// Turns fresh track observations into world positions.
pub struct Positioning {
    pub tiles: Vec<Tile>,
    pub height: usize,
    pub cameras: Vec<CameraModel>,
    pub depths: Vec<Arc<DepthMap>>,
}

impl Positioning {
    pub fn positions(&self, update: &TrackUpdate) -> Vec<Position> {
        update
            .objects
            .iter()
            .filter(|o| o.status == TrackStatus::Active && o.last_seen() == update.tick)
            .filter_map(|o| {
                let p = mosaic_position(
                    &o.latest_box(),
                    &self.tiles,
                    self.height,
                    &self.cameras,
                    &self.depths,
                )
                .ok()
                .flatten()?;
                Some(Position {
                    tick: update.tick,
                    id: o.id,
                    category: o.category,
                    east: p[0],
                    north: p[1],
                    height: p[2],
                })
            })
            .collect()
    }
}

impl Component for Positioning {
    fn handle(&mut self, msg: &BusMessage, out: &Publisher) -> Result<(), ComponentError> {
        if let Payload::Tracks(u) = &msg.payload {
            out.publish(msg.tick, Payload::Positions(self.positions(u)));
        }
        Ok(())
    }
}

pub fn positioning_spec(
    cfg: &PipelineConfig,
    scene: &Scene,
    depths: Vec<Arc<DepthMap>>,
) -> ComponentSpec {
    let tiles = scene.tiles().to_vec();
    let height = scene.mosaic_dims().1;
    let cameras = scene.cameras().to_vec();
    ComponentSpec::new(
        POSITIONING,
        false,
        vec![
            Subscription::queue(Topic::Tracks, cfg.tracking.queue_capacity).from_publisher(TRACKER),
        ],
        Box::new(move |_| {
            Ok(Box::new(Positioning {
                tiles: tiles.clone(),
                height,
                cameras: cameras.clone(),
                depths: depths.clone(),
            }))
        }),
    )
    .with_restart(cfg.restart)
}

/// What the sink saw for one delivered tick.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkRecord {
    pub tick: u64,
    /// Delivery time after the tick's scheduled time, in simulated milliseconds.
    pub latency_ms: f64,
    pub seam_costs: Vec<f64>,
}

/// End of the vital path: timestamps delivery and measures seams.
pub struct Sink {
    pub clock: Clock,
    pub seam_cost: bool,
    pub records: mpsc::Sender<SinkRecord>,
}

impl Component for Sink {
    fn handle(&mut self, msg: &BusMessage, _out: &Publisher) -> Result<(), ComponentError> {
        let Payload::Frames(frames) = &msg.payload else {
            return Ok(());
        };
        let arrived = Instant::now();
        let latency = arrived.saturating_duration_since(self.clock.scheduled(msg.tick));
        let seam_costs = if self.seam_cost {
            frames
                .windows(2)
                .map(|p| seam_cost(&p[0], &p[1], DEFAULT_SEAM_DOWNSAMPLE))
                .collect::<Result<Vec<f64>, _>>()?
        } else {
            Vec::new()
        };
        // the receiver is gone only once the run is over
        let _ = self.records.send(SinkRecord {
            tick: msg.tick,
            latency_ms: self.clock.to_sim_ms(latency),
            seam_costs,
        });
        Ok(())
    }
}
