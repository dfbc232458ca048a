//! Where to run the detector each tick, under a fixed window budget.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::detect::{DetectorWindow, DEFAULT_WINDOW};
use crate::geom::{iou, Mask};
use crate::tracker::TrackedObject;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    SlidingWindow,
    Difference,
    Expectation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionRequest {
    pub window: DetectorWindow,
    pub mechanism: Mechanism,
    /// Rank within its plan, 0 first.
    pub priority: u32,
    pub target: Option<u64>,
}

/// Window origins along one axis: a fixed stride with the last window moved back
/// inside the extent.
fn axis_positions(extent: usize, size: usize, stride: usize) -> Vec<i64> {
    if extent <= size {
        return vec![0];
    }
    let last = (extent - size) as i64;
    let mut out = Vec::new();
    let mut x = 0i64;
    while x < last {
        out.push(x);
        x += stride.max(1) as i64;
    }
    out.push(last);
    out
}

fn stride(size: usize, overlap: f64) -> usize {
    ((size as f64 * (1.0 - overlap.clamp(0.0, 0.99))).round() as usize).max(1)
}

/// Row-major tiling covering the whole mosaic.
pub fn sliding_window_plan(
    width: usize,
    height: usize,
    size: usize,
    overlap: f64,
) -> Vec<AttentionRequest> {
    let s = stride(size, overlap);
    let xs = axis_positions(width, size, s);
    let ys = axis_positions(height, size, s);
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            out.push(AttentionRequest {
                window: DetectorWindow { x, y, size },
                mechanism: Mechanism::SlidingWindow,
                priority: out.len() as u32,
                target: None,
            });
        }
    }
    out
}

/// Tiling windows whose count of changed pixels exceeds `threshold`, busiest first.
pub fn difference_plan(
    mask: &Mask,
    size: usize,
    overlap: f64,
    threshold: u32,
) -> Vec<AttentionRequest> {
    let (w, h) = (mask.width(), mask.height());
    let integral = mask.integral();
    let mut scored: Vec<(u32, DetectorWindow)> = sliding_window_plan(w, h, size, overlap)
        .into_iter()
        .map(|r| {
            let x0 = r.window.x.max(0) as usize;
            let y0 = r.window.y.max(0) as usize;
            let x1 = (r.window.x as usize + size).min(w);
            let y1 = (r.window.y as usize + size).min(h);
            (integral.count(x0, y0, x1, y1), r.window)
        })
        .filter(|(n, _)| *n > threshold)
        .collect();
    scored.sort_by_key(|s| std::cmp::Reverse(s.0));
    scored
        .into_iter()
        .enumerate()
        .map(|(i, (_, window))| AttentionRequest {
            window,
            mechanism: Mechanism::Difference,
            priority: i as u32,
            target: None,
        })
        .collect()
}

/// Predicted box centre of `o` at `frame` by linear extrapolation of its last two
/// observations.
pub fn predict_center(o: &TrackedObject, frame: u64) -> (f64, f64) {
    let n = o.history.len();
    let (f1, b1) = o.history[n - 1];
    let (cx, cy) = b1.center();
    if n < 2 {
        return (cx, cy);
    }
    let (f0, b0) = o.history[n - 2];
    let (px, py) = b0.center();
    let df = (f1 - f0) as f64;
    let ahead = frame as f64 - f1 as f64;
    (cx + (cx - px) / df * ahead, cy + (cy - py) / df * ahead)
}

fn centered_window(cx: f64, cy: f64, size: usize, width: usize, height: usize) -> DetectorWindow {
    let place = |c: f64, extent: usize| -> i64 {
        let x = (c - size as f64 / 2.0).round() as i64;
        x.clamp(0, extent.saturating_sub(size) as i64)
    };
    DetectorWindow {
        x: place(cx, width),
        y: place(cy, height),
        size,
    }
}

/// One window centred on each object's predicted position, least recently seen first.
pub fn expectation_plan(
    objects: &[TrackedObject],
    frame: u64,
    size: usize,
    width: usize,
    height: usize,
) -> Vec<AttentionRequest> {
    let mut order: Vec<&TrackedObject> = objects.iter().filter(|o| !o.history.is_empty()).collect();
    order.sort_by_key(|o| (o.last_seen(), o.id));
    order
        .into_iter()
        .enumerate()
        .map(|(i, o)| {
            let (cx, cy) = predict_center(o, frame);
            AttentionRequest {
                window: centered_window(cx, cy, size, width, height),
                mechanism: Mechanism::Expectation,
                priority: i as u32,
                target: Some(o.id),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttentionParams {
    pub budget: usize,
    pub window: usize,
    pub startup_overlap: f64,
    pub on_count_threshold: u32,
    pub merge_iou: f64,
}

impl Default for AttentionParams {
    fn default() -> Self {
        Self {
            budget: 4,
            window: DEFAULT_WINDOW,
            startup_overlap: 0.0,
            on_count_threshold: 50,
            merge_iou: 0.8,
        }
    }
}

/// Per-tick inputs to the scheduler.
pub struct TickState<'a> {
    pub frame: u64,
    pub width: usize,
    pub height: usize,
    pub objects: &'a [TrackedObject],
    /// Changed pixels since the previous mosaic, if one exists.
    pub motion: Option<&'a Mask>,
}

/// Combines the three mechanisms. A fresh scheduler (or one after [`Scheduler::restart`])
/// first works through the full sliding-window tiling, `budget` windows per tick.
#[derive(Debug, Clone)]
pub struct Scheduler {
    pub params: AttentionParams,
    startup: Option<VecDeque<AttentionRequest>>,
}

impl Scheduler {
    pub fn new(params: AttentionParams) -> Self {
        Self {
            params,
            startup: None,
        }
    }

    pub fn restart(&mut self) {
        self.startup = None;
    }

    pub fn in_startup(&self) -> bool {
        self.startup.as_ref().is_none_or(|q| !q.is_empty())
    }

    pub fn schedule(&mut self, state: &TickState) -> Vec<AttentionRequest> {
        let p = self.params;
        let budget = p.budget.max(1);
        let queue = self.startup.get_or_insert_with(|| {
            sliding_window_plan(state.width, state.height, p.window, p.startup_overlap).into()
        });
        if !queue.is_empty() {
            let n = budget.min(queue.len());
            let out: Vec<AttentionRequest> = queue.drain(..n).collect();
            tracing::debug!(frame = state.frame, windows = out.len(), "startup windows");
            return out;
        }
        let mut candidates = expectation_plan(
            state.objects,
            state.frame,
            p.window,
            state.width,
            state.height,
        );
        if let Some(mask) = state.motion {
            candidates.extend(difference_plan(mask, p.window, 0.0, p.on_count_threshold));
        }
        let mut out: Vec<AttentionRequest> = Vec::with_capacity(budget);
        for c in candidates {
            if out.len() == budget {
                break;
            }
            if out
                .iter()
                .all(|k| iou(&k.window.bbox(), &c.window.bbox()) <= p.merge_iou)
            {
                out.push(c);
            }
        }
        tracing::debug!(
            frame = state.frame,
            windows = out.len(),
            "scheduled windows"
        );
        out
    }
}
