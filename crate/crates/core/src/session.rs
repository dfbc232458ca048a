//! One tick of attention, detection and tracking over a mosaic.

use crate::attention::{AttentionRequest, Scheduler, TickState};
use crate::detect::{detect, DetectContext, DetectParams, Detection, Detector};
use crate::geom::{abs_diff_threshold, Mosaic};
use crate::tracker::{TrackEvent, Tracker};

pub struct TrackingSession {
    pub scheduler: Scheduler,
    pub detector: Box<dyn Detector>,
    pub tracker: Tracker,
    pub detect_params: DetectParams,
    pub diff_threshold: u8,
    previous: Option<Mosaic>,
}

#[derive(Debug, Clone, Default)]
pub struct SessionTick {
    pub requests: Vec<AttentionRequest>,
    pub detections: Vec<Detection>,
    pub events: Vec<TrackEvent>,
    /// Some detector call failed to answer in time.
    pub degraded: bool,
}

impl TrackingSession {
    pub fn new(scheduler: Scheduler, detector: Box<dyn Detector>, tracker: Tracker) -> Self {
        Self {
            scheduler,
            detector,
            tracker,
            detect_params: DetectParams::default(),
            diff_threshold: crate::geom::DEFAULT_DIFF_THRESHOLD,
            previous: None,
        }
    }

    pub fn process(&mut self, mosaic: Mosaic) -> SessionTick {
        let frame = mosaic.frame_index();
        let motion = self
            .previous
            .as_ref()
            .and_then(|p| abs_diff_threshold(&p.image, &mosaic.image, self.diff_threshold).ok());
        let requests = self.scheduler.schedule(&TickState {
            frame,
            width: mosaic.width(),
            height: mosaic.height(),
            objects: self.tracker.objects(),
            motion: motion.as_ref(),
        });
        let ctx = DetectContext {
            mosaic: &mosaic,
            previous: self.previous.as_ref(),
        };
        let mut detections = Vec::new();
        let mut degraded = false;
        for r in &requests {
            let out = detect(self.detector.as_mut(), &r.window, &ctx, &self.detect_params);
            degraded |= out.degraded;
            detections.extend(out.detections);
        }
        let events = self.tracker.step(frame, &detections);
        self.previous = Some(mosaic);
        SessionTick {
            requests,
            detections,
            events,
            degraded,
        }
    }
}
