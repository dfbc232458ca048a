//! Detector interface, the built-in detectors and greedy non-maximum suppression.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{abs_diff_threshold, iou, BBox, Category, Frame, Mosaic, DEFAULT_DIFF_THRESHOLD};
use crate::pnm;
use crate::scenegen::Scene;

pub const DEFAULT_TOL_DETECT: f64 = 0.65;
pub const DEFAULT_TOL_NMS: f64 = 0.45;
pub const DEFAULT_WINDOW: usize = 960;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionSource {
    Oracle,
    Blob,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub category: Category,
    /// Mosaic coordinates.
    pub bbox: BBox,
    pub probability: f64,
    pub frame_index: u64,
    pub source: DetectionSource,
}

/// Square detector input region in mosaic coordinates. May extend past the mosaic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DetectorWindow {
    pub x: i64,
    pub y: i64,
    pub size: usize,
}

impl DetectorWindow {
    pub fn bbox(&self) -> BBox {
        BBox::new(
            self.x as f64,
            self.y as f64,
            self.size as f64,
            self.size as f64,
        )
    }

    pub fn contains(&self, px: f64, py: f64) -> bool {
        self.bbox().contains_point(px, py)
    }

    pub fn intersects(&self, width: usize, height: usize) -> bool {
        self.bbox().clip(width as f64, height as f64).is_some()
    }
}

/// What a detector may look at for one call.
pub struct DetectContext<'a> {
    pub mosaic: &'a Mosaic,
    pub previous: Option<&'a Mosaic>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectOutcome {
    pub detections: Vec<Detection>,
    /// Set when the detector could not answer in time and returned nothing.
    pub degraded: bool,
}

pub trait Detector: Send {
    /// Raw detections for `window`, in mosaic coordinates.
    fn detect_raw(&mut self, window: &DetectorWindow, ctx: &DetectContext) -> DetectOutcome;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectParams {
    pub tol_detect: f64,
    pub tol_nms: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            tol_detect: DEFAULT_TOL_DETECT,
            tol_nms: DEFAULT_TOL_NMS,
        }
    }
}

/// Runs a detector and applies the confidence threshold, clipping and in-window NMS.
pub fn detect(
    detector: &mut dyn Detector,
    window: &DetectorWindow,
    ctx: &DetectContext,
    params: &DetectParams,
) -> DetectOutcome {
    let (w, h) = (ctx.mosaic.width() as f64, ctx.mosaic.height() as f64);
    let mut out = detector.detect_raw(window, ctx);
    let kept: Vec<Detection> = out
        .detections
        .into_iter()
        .filter(|d| d.probability > params.tol_detect)
        .filter_map(|d| {
            d.bbox.clip(w, h).map(|bbox| Detection {
                bbox,
                probability: d.probability.min(1.0),
                ..d
            })
        })
        .collect();
    out.detections = nms(&kept, params.tol_nms);
    out
}

/// Greedy per-category non-maximum suppression.
///
/// Detections are visited by descending probability (ties keep input order); each kept
/// detection suppresses later ones of its category with IoU above `tol`. Detections
/// with probability `<= 0` are dropped.
pub fn nms(dets: &[Detection], tol: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len())
        .filter(|&i| dets[i].probability > 0.0)
        .collect();
    order.sort_by(|&a, &b| dets[b].probability.total_cmp(&dets[a].probability));
    let mut suppressed = vec![false; dets.len()];
    let mut out = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        out.push(dets[i]);
        for &j in &order[k + 1..] {
            if !suppressed[j]
                && dets[j].category == dets[i].category
                && iou(&dets[i].bbox, &dets[j].bbox) > tol
            {
                suppressed[j] = true;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleNoise {
    /// Standard deviation of the box centre jitter in pixels.
    pub sigma: f64,
    /// Probability of missing a visible object.
    pub dropout: f64,
    /// Probability of one spurious detection per call.
    pub false_positive: f64,
}

impl Default for OracleNoise {
    fn default() -> Self {
        Self {
            sigma: 2.0,
            dropout: 0.05,
            false_positive: 0.0,
        }
    }
}

impl OracleNoise {
    pub const NONE: OracleNoise = OracleNoise {
        sigma: 0.0,
        dropout: 0.0,
        false_positive: 0.0,
    };

    fn is_noiseless(&self) -> bool {
        self.sigma == 0.0 && self.dropout == 0.0 && self.false_positive == 0.0
    }
}

/// Reads the scene's ground truth and corrupts it with seeded noise.
///
/// Reports every visible object whose box centre lies in the window. Results depend only
/// on the scene seed, the frame index and the window, so repeated calls agree.
pub struct OracleDetector {
    scene: Arc<Scene>,
    pub noise: OracleNoise,
}

impl OracleDetector {
    pub fn new(scene: Arc<Scene>, noise: OracleNoise) -> Self {
        Self { scene, noise }
    }
}

impl Detector for OracleDetector {
    fn detect_raw(&mut self, window: &DetectorWindow, ctx: &DetectContext) -> DetectOutcome {
        let tick = ctx.mosaic.frame_index();
        let seed = self.scene.scenario.seed
            ^ tick.wrapping_mul(0x9e37_79b9_7f4a_7c15)
            ^ (window.x as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f)
            ^ (window.y as u64).wrapping_mul(0x1656_67b1_9e37_79f9)
            ^ window.size as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noiseless = self.noise.is_noiseless();
        let jitter =
            Normal::new(0.0, self.noise.sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
        let mut detections = Vec::new();
        for gt in self.scene.ground_truth(tick) {
            let (cx, cy) = gt.bbox.center();
            if !gt.visible || !window.contains(cx, cy) {
                continue;
            }
            if rng.random::<f64>() < self.noise.dropout {
                continue;
            }
            let (dx, dy) = if self.noise.sigma > 0.0 {
                (jitter.sample(&mut rng), jitter.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            let probability = if noiseless {
                1.0
            } else {
                rng.random_range(0.7..=1.0)
            };
            detections.push(Detection {
                category: gt.category,
                bbox: gt.bbox.translate(dx, dy),
                probability,
                frame_index: tick,
                source: DetectionSource::Oracle,
            });
        }
        if rng.random::<f64>() < self.noise.false_positive {
            let s = window.size as f64;
            let (w, h) = (
                rng.random_range(4.0..s / 8.0 + 5.0),
                rng.random_range(4.0..s / 8.0 + 5.0),
            );
            let category = Category::ALL[rng.random_range(0..3)];
            detections.push(Detection {
                category,
                bbox: BBox::new(
                    window.x as f64 + rng.random_range(0.0..s - w),
                    window.y as f64 + rng.random_range(0.0..s - h),
                    w,
                    h,
                ),
                probability: rng.random_range(0.66..=1.0),
                frame_index: tick,
                source: DetectionSource::Oracle,
            });
        }
        DetectOutcome {
            detections,
            degraded: false,
        }
    }
}

/// Connected components of the thresholded frame difference, one detection each.
pub struct BlobDetector {
    pub diff_threshold: u8,
    pub category: Category,
}

impl Default for BlobDetector {
    fn default() -> Self {
        Self {
            diff_threshold: DEFAULT_DIFF_THRESHOLD,
            category: Category::Vehicle,
        }
    }
}

impl Detector for BlobDetector {
    fn detect_raw(&mut self, window: &DetectorWindow, ctx: &DetectContext) -> DetectOutcome {
        let Some(prev) = ctx.previous else {
            return DetectOutcome::default();
        };
        let cur = ctx.mosaic.crop(window.x, window.y, window.size);
        let old = prev.crop(window.x, window.y, window.size);
        let Ok(mask) = abs_diff_threshold(&cur, &old, self.diff_threshold) else {
            return DetectOutcome::default();
        };
        let detections = components(&mask)
            .into_iter()
            .map(|(x0, y0, x1, y1, area)| Detection {
                category: self.category,
                bbox: BBox::from_corners(x0 as f64, y0 as f64, x1 as f64 + 1.0, y1 as f64 + 1.0)
                    .translate(window.x as f64, window.y as f64),
                probability: area as f64 / (area as f64 + 10.0),
                frame_index: ctx.mosaic.frame_index(),
                source: DetectionSource::Blob,
            })
            .collect();
        DetectOutcome {
            detections,
            degraded: false,
        }
    }
}

/// 8-connected components as inclusive pixel bounds plus pixel count.
fn components(mask: &crate::geom::Mask) -> Vec<(usize, usize, usize, usize, usize)> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if seen[start] || !mask.get(start % w, start / w) {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut x0, mut y0, mut x1, mut y1, mut area) = (w, h, 0, 0, 0);
        while let Some(p) = stack.pop() {
            let (x, y) = (p % w, p / w);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            area += 1;
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let q = ny * w + nx;
                    if !seen[q] && mask.get(nx, ny) {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        out.push((x0, y0, x1, y1, area));
    }
    out
}

#[derive(Debug, Error)]
pub enum ExternalError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad response line `{0}`")]
    BadLine(String),
    #[error("deadline exceeded")]
    Timeout,
}

/// Client for a detector served over TCP.
///
/// One connection per call. The request is `DETECT x y size\n` followed by the window
/// as a binary PPM; the response is one `category x y w h p` line per detection in
/// window coordinates, terminated by `END`.
pub struct ExternalDetector {
    pub addr: SocketAddr,
    pub deadline: Duration,
}

impl ExternalDetector {
    pub fn new(addr: SocketAddr) -> Self {
        Self {
            addr,
            deadline: Duration::from_millis(100),
        }
    }

    fn call(
        &self,
        window: &DetectorWindow,
        image: &Frame,
    ) -> Result<Vec<(Category, BBox, f64)>, ExternalError> {
        let start = Instant::now();
        let remaining = || {
            self.deadline
                .checked_sub(start.elapsed())
                .filter(|d| !d.is_zero())
                .ok_or(ExternalError::Timeout)
        };
        let mut stream = TcpStream::connect_timeout(&self.addr, remaining()?)?;
        stream.set_nodelay(true)?;
        stream.set_write_timeout(Some(remaining()?))?;
        let mut req = format!("DETECT {} {} {}\n", window.x, window.y, window.size).into_bytes();
        req.extend_from_slice(&pnm::encode_ppm(image));
        stream.write_all(&req)?;
        let mut reader = BufReader::new(stream);
        let mut out = Vec::new();
        let mut line = String::new();
        loop {
            reader.get_ref().set_read_timeout(Some(remaining()?))?;
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                return Err(ExternalError::BadLine(
                    "connection closed before END".into(),
                ));
            }
            let l = line.trim();
            if l == "END" {
                return Ok(out);
            }
            if l.is_empty() {
                continue;
            }
            out.push(parse_detection_line(l)?);
        }
    }
}

pub fn parse_detection_line(l: &str) -> Result<(Category, BBox, f64), ExternalError> {
    let bad = || ExternalError::BadLine(l.to_string());
    let f: Vec<&str> = l.split_whitespace().collect();
    if f.len() != 6 {
        return Err(bad());
    }
    let cat = Category::from_str(f[0]).map_err(|_| bad())?;
    let n: Vec<f64> = f[1..]
        .iter()
        .map(|s| s.parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    if !n.iter().all(|v| v.is_finite()) || !(0.0..=1.0).contains(&n[4]) {
        return Err(bad());
    }
    Ok((cat, BBox::new(n[0], n[1], n[2], n[3]), n[4]))
}

impl Detector for ExternalDetector {
    fn detect_raw(&mut self, window: &DetectorWindow, ctx: &DetectContext) -> DetectOutcome {
        let image = ctx.mosaic.crop(window.x, window.y, window.size);
        match self.call(window, &image) {
            Ok(found) => DetectOutcome {
                detections: found
                    .into_iter()
                    .map(|(category, b, p)| Detection {
                        category,
                        bbox: b.translate(window.x as f64, window.y as f64),
                        probability: p,
                        frame_index: ctx.mosaic.frame_index(),
                        source: DetectionSource::External,
                    })
                    .collect(),
                degraded: false,
            },
            Err(e) => {
                tracing::warn!(error = %e, "external detector degraded");
                DetectOutcome {
                    detections: Vec::new(),
                    degraded: true,
                }
            }
        }
    }
}

/// Serves the external detector protocol on `listener`, one request per connection,
/// until the listener fails. `handler` gets the window image and returns detections in
/// window coordinates.
pub fn serve_external(
    listener: TcpListener,
    mut handler: impl FnMut(&DetectorWindow, &Frame) -> Vec<(Category, BBox, f64)>,
) -> std::io::Result<()> {
    for conn in listener.incoming() {
        let stream = conn?;
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut head = String::new();
        reader.read_line(&mut head)?;
        let parts: Vec<&str> = head.split_whitespace().collect();
        let window = match parts.as_slice() {
            ["DETECT", x, y, s] => match (x.parse(), y.parse(), s.parse()) {
                (Ok(x), Ok(y), Ok(size)) => DetectorWindow { x, y, size },
                _ => continue,
            },
            _ => continue,
        };
        let Ok(image) = pnm::read_ppm(&mut reader) else {
            continue;
        };
        let mut body = String::new();
        for (c, b, p) in handler(&window, &image) {
            body.push_str(&format!("{} {} {} {} {} {}\n", c, b.x, b.y, b.w, b.h, p));
        }
        body.push_str("END\n");
        let mut stream = stream;
        let _ = stream.write_all(body.as_bytes());
    }
    Ok(())
}
