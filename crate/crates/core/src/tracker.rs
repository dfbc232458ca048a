//! Assignment-based multi-object tracking with discounted IoU costs.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{nms, Detection};
use crate::geom::{iou, BBox, Category};

#[derive(Debug, Error, PartialEq)]
pub enum TrackError {
    #[error("detection from frame {detection} is older than the object's last frame {object}")]
    FrameOrder { detection: u64, object: u64 },
    #[error("cost matrix entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("cost matrix rows have different lengths")]
    Ragged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerParams {
    /// Per-frame discount of the IoU.
    pub discount: f64,
    /// A matched detection extends its object when the discounted IoU exceeds this.
    pub tol_iou: f64,
    /// An unmatched detection starts a new object when its best discounted IoU is below this.
    pub tol_create: f64,
    /// Suppression tolerance across attention mechanisms.
    pub tol_nms: f64,
    pub coast_frames: u64,
    pub retire_frames: u64,
    /// Oldest history entries are dropped beyond this length.
    pub max_history: usize,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            discount: 0.99,
            tol_iou: 0.05,
            tol_create: 0.001,
            tol_nms: 0.3,
            coast_frames: 30,
            retire_frames: 300,
            max_history: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Active,
    Coasting,
    Retired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedObject {
    pub id: u64,
    pub category: Category,
    /// `(frame_index, box)` with strictly increasing frame indices.
    pub history: Vec<(u64, BBox)>,
    pub status: TrackStatus,
}

impl TrackedObject {
    pub fn last_seen(&self) -> u64 {
        self.history.last().map_or(0, |h| h.0)
    }

    pub fn latest_box(&self) -> BBox {
        self.history.last().map(|h| h.1).unwrap_or_default()
    }
}

/// `1 - IoU * discount^(f_d - f_o)` against the object's latest box.
pub fn cost(d: &Detection, o: &TrackedObject, discount: f64) -> Result<f64, TrackError> {
    let f_o = o.last_seen();
    if d.frame_index < f_o {
        return Err(TrackError::FrameOrder {
            detection: d.frame_index,
            object: f_o,
        });
    }
    let gap = (d.frame_index - f_o).min(i32::MAX as u64) as i32;
    Ok(1.0 - iou(&d.bbox, &o.latest_box()) * discount.powi(gap))
}

/// Minimum-cost one-to-one assignment of rows to columns.
///
/// Returns the assigned column of every row, `None` for rows left over when there are
/// more rows than columns. Rectangular inputs are padded to square with a constant,
/// which does not change the optimum. Runs in cubic time.
pub fn solve_assignment(c: &[Vec<f64>]) -> Result<Vec<Option<usize>>, TrackError> {
    let m = c.len();
    let n = c.first().map_or(0, Vec::len);
    for (i, row) in c.iter().enumerate() {
        if row.len() != n {
            return Err(TrackError::Ragged);
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(TrackError::NonFinite { row: i, col: j });
        }
    }
    if m == 0 || n == 0 {
        return Ok(vec![None; m]);
    }
    let k = m.max(n);
    let at = |i: usize, j: usize| if i < m && j < n { c[i][j] } else { 1.0 };

    // shortest augmenting paths with row/column potentials; index 0 is a sentinel
    let mut u = vec![0.0; k + 1];
    let mut v = vec![0.0; k + 1];
    let mut row_of = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for i in 1..=k {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=k {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; m];
    for j in 1..=k {
        let i = row_of[j];
        if i >= 1 && i <= m && j <= n {
            out[i - 1] = Some(j - 1);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Created,
    Updated,
    Coasting,
    Retired,
    /// A detection that neither extended an object nor was distinct enough to start one.
    Discarded,
}

/// One line of the track event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackEvent {
    pub tick: u64,
    pub event: EventKind,
    pub id: Option<u64>,
    pub category: Category,
    pub bbox: BBox,
    /// Discounted IoU that decided the event, where one applies.
    pub discounted_iou: Option<f64>,
}

impl TrackEvent {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}

pub fn write_events<W: Write>(mut w: W, events: &[TrackEvent]) -> std::io::Result<()> {
    for e in events {
        writeln!(w, "{}", e.to_json_line())?;
    }
    Ok(())
}

pub fn read_events(text: &str) -> Result<Vec<TrackEvent>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

/// Tracker state: the live objects and the id counter.
#[derive(Debug, Clone)]
pub struct Tracker {
    pub params: TrackerParams,
    objects: Vec<TrackedObject>,
    next_id: u64,
}

impl Tracker {
    pub fn new(params: TrackerParams) -> Self {
        Self {
            params,
            objects: Vec::new(),
            next_id: 1,
        }
    }

    /// Starts ids at `first_id`, e.g. to keep ids unique across restarts.
    pub fn with_first_id(mut self, first_id: u64) -> Self {
        self.next_id = first_id;
        self
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    /// Active and coasting objects.
    pub fn objects(&self) -> &[TrackedObject] {
        &self.objects
    }

    /// Consolidates the detections of frame `frame` into the object set.
    pub fn step(&mut self, frame: u64, detections: &[Detection]) -> Vec<TrackEvent> {
        let p = self.params;
        let dets = nms(detections, p.tol_nms);
        let mut events = Vec::new();
        for cat in Category::ALL {
            let cat_dets: Vec<&Detection> = dets.iter().filter(|d| d.category == cat).collect();
            if cat_dets.is_empty() {
                continue;
            }
            let cols: Vec<usize> = (0..self.objects.len())
                .filter(|&j| self.objects[j].category == cat)
                .collect();
            let matrix: Vec<Vec<f64>> = cat_dets
                .iter()
                .map(|d| cols.iter().map(|&j| self.cost_or_max(d, j)).collect())
                .collect();
            let assignment = solve_assignment(&matrix).expect("costs are finite");
            let mut leftovers = Vec::new();
            for (i, d) in cat_dets.iter().enumerate() {
                let matched = assignment[i].map(|c| (cols[c], 1.0 - matrix[i][c]));
                match matched {
                    Some((j, score)) if score > p.tol_iou => {
                        self.extend(j, d);
                        events.push(TrackEvent {
                            tick: frame,
                            event: EventKind::Updated,
                            id: Some(self.objects[j].id),
                            category: cat,
                            bbox: d.bbox,
                            discounted_iou: Some(score),
                        });
                    }
                    _ => leftovers.push(i),
                }
            }
            for i in leftovers {
                let d = cat_dets[i];
                // objects created earlier in this tick count as existing
                let best = (0..self.objects.len())
                    .filter(|&j| self.objects[j].category == cat)
                    .map(|j| 1.0 - self.cost_or_max(d, j))
                    .fold(0.0, f64::max);
                if best < p.tol_create {
                    let id = self.next_id;
                    self.next_id += 1;
                    self.objects.push(TrackedObject {
                        id,
                        category: cat,
                        history: vec![(d.frame_index, d.bbox)],
                        status: TrackStatus::Active,
                    });
                    events.push(TrackEvent {
                        tick: frame,
                        event: EventKind::Created,
                        id: Some(id),
                        category: cat,
                        bbox: d.bbox,
                        discounted_iou: Some(best),
                    });
                } else {
                    tracing::debug!(frame, category = %cat, best, "detection discarded");
                    events.push(TrackEvent {
                        tick: frame,
                        event: EventKind::Discarded,
                        id: None,
                        category: cat,
                        bbox: d.bbox,
                        discounted_iou: Some(best),
                    });
                }
            }
        }
        self.age(frame, &mut events);
        events
    }

    fn cost_or_max(&self, d: &Detection, j: usize) -> f64 {
        cost(d, &self.objects[j], self.params.discount).unwrap_or_else(|e| {
            tracing::warn!(error = %e, "out-of-order detection");
            1.0
        })
    }

    fn extend(&mut self, j: usize, d: &Detection) {
        let limit = self.params.max_history.max(2);
        let o = &mut self.objects[j];
        match o.history.last_mut() {
            Some(last) if last.0 >= d.frame_index => last.1 = d.bbox,
            _ => o.history.push((d.frame_index, d.bbox)),
        }
        if o.history.len() > limit {
            let excess = o.history.len() - limit;
            o.history.drain(..excess);
        }
        o.status = TrackStatus::Active;
    }

    fn age(&mut self, frame: u64, events: &mut Vec<TrackEvent>) {
        let p = self.params;
        for o in &mut self.objects {
            let gap = frame.saturating_sub(o.last_seen());
            let status = if gap > p.retire_frames {
                TrackStatus::Retired
            } else if gap > p.coast_frames {
                TrackStatus::Coasting
            } else {
                TrackStatus::Active
            };
            if status != o.status && status != TrackStatus::Active {
                events.push(TrackEvent {
                    tick: frame,
                    event: match status {
                        TrackStatus::Retired => EventKind::Retired,
                        _ => EventKind::Coasting,
                    },
                    id: Some(o.id),
                    category: o.category,
                    bbox: o.latest_box(),
                    discounted_iou: None,
                });
            }
            o.status = status;
        }
        self.objects.retain(|o| o.status != TrackStatus::Retired);
    }
}
