//! Raster, box and category primitives shared by every stage of the toolkit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default threshold for [`abs_diff_threshold`], in 8-bit intensity units.
pub const DEFAULT_DIFF_THRESHOLD: u8 = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RasterError {
    #[error("pixel buffer has {actual} bytes, expected {expected} for {width}x{height} RGB")]
    BufferSize {
        width: usize,
        height: usize,
        expected: usize,
        actual: usize,
    },
    #[error("raster dimensions differ: {a:?} vs {b:?}")]
    DimensionMismatch {
        a: (usize, usize),
        b: (usize, usize),
    },
    #[error("frames come from different cameras ({0} and {1})")]
    CameraMismatch(u16, u16),
    #[error("mosaic needs at least one frame")]
    EmptyMosaic,
}

/// One RGB video frame from a single camera.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    pub camera_id: u16,
    pub frame_index: u64,
    pub timestamp_ms: u64,
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Frame")
            .field("camera_id", &self.camera_id)
            .field("frame_index", &self.frame_index)
            .field("timestamp_ms", &self.timestamp_ms)
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Frame {
    pub fn new(
        camera_id: u16,
        frame_index: u64,
        timestamp_ms: u64,
        width: usize,
        height: usize,
        pixels: Vec<u8>,
    ) -> Result<Self, RasterError> {
        let expected = width * height * 3;
        if pixels.len() != expected {
            return Err(RasterError::BufferSize {
                width,
                height,
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            camera_id,
            frame_index,
            timestamp_ms,
            width,
            height,
            pixels,
        })
    }

    /// A frame filled with a single colour.
    pub fn filled(camera_id: u16, width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            pixels.extend_from_slice(&rgb);
        }
        Self {
            camera_id,
            frame_index: 0,
            timestamp_ms: 0,
            width,
            height,
            pixels,
        }
    }

    pub fn with_index(mut self, frame_index: u64, timestamp_ms: u64) -> Self {
        self.frame_index = frame_index;
        self.timestamp_ms = timestamp_ms;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Row `y` as a slice of `width * 3` bytes.
    pub fn row(&self, y: usize) -> &[u8] {
        let stride = self.width * 3;
        &self.pixels[y * stride..(y + 1) * stride]
    }

    /// Fills the pixels whose centres fall inside `bbox`.
    pub fn fill_box(&mut self, bbox: &BBox, rgb: [u8; 3]) {
        if let Some((x0, y0, x1, y1)) = bbox.pixel_span(self.width, self.height) {
            for y in y0..y1 {
                for x in x0..x1 {
                    self.set(x, y, rgb);
                }
            }
        }
    }
}

/// Axis-aligned box with a top-left corner and extents, in continuous pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self {
            x,
            y,
            w: w.max(0.0),
            h: h.max(0.0),
        }
    }

    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new(x0.min(x1), y0.min(y1), (x1 - x0).abs(), (y1 - y0).abs())
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// Point where an object standing on the ground touches it.
    pub fn bottom_center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.right().min(other.right()) - self.x.max(other.x)).max(0.0);
        let h = (self.bottom().min(other.bottom()) - self.y.max(other.y)).max(0.0);
        w * h
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x1 > x0 && y1 > y0).then(|| BBox::new(x0, y0, x1 - x0, y1 - y0))
    }

    pub fn union_hull(&self, other: &BBox) -> BBox {
        BBox::from_corners(
            self.x.min(other.x),
            self.y.min(other.y),
            self.right().max(other.right()),
            self.bottom().max(other.bottom()),
        )
    }

    pub fn clip(&self, width: f64, height: f64) -> Option<BBox> {
        self.intersection(&BBox::new(0.0, 0.0, width, height))
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }

    /// Integer pixel range `[x0, x1) x [y0, y1)` of pixels whose centres lie in the box,
    /// clipped to a `width x height` raster.
    pub fn pixel_span(&self, width: usize, height: usize) -> Option<(usize, usize, usize, usize)> {
        let span = |lo: f64, hi: f64, n: usize| -> (usize, usize) {
            let a = (lo - 0.5).ceil().max(0.0);
            let b = (hi - 0.5).ceil().max(0.0);
            ((a as usize).min(n), (b as usize).min(n))
        };
        let (x0, x1) = span(self.x, self.right(), width);
        let (y0, y1) = span(self.y, self.bottom(), height);
        (x1 > x0 && y1 > y0).then_some((x0, y0, x1, y1))
    }
}

/// Intersection over union of two boxes. Two zero-area boxes give 0.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Aircraft,
    Vehicle,
    Person,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Aircraft, Category::Vehicle, Category::Person];

    /// Display colour used for boxes, rendered objects and map markers.
    pub fn color(self) -> [u8; 3] {
        match self {
            Category::Aircraft => [230, 57, 70],
            Category::Vehicle => [255, 190, 11],
            Category::Person => [58, 134, 255],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Aircraft => "aircraft",
            Category::Vehicle => "vehicle",
            Category::Person => "person",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "aircraft" => Ok(Category::Aircraft),
            "vehicle" => Ok(Category::Vehicle),
            "person" => Ok(Category::Person),
            other => Err(format!("unknown category `{other}`")),
        }
    }
}

/// Binary raster, one byte per pixel (0 = off, 1 = on).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y) as u8);
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.data[y * self.width + x] = on as u8;
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn count_on(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    /// Summed-area table with a zero border: `(width + 1) * (height + 1)` entries.
    pub fn integral(&self) -> IntegralCount {
        let w = self.width + 1;
        let mut table = vec![0u32; w * (self.height + 1)];
        for y in 0..self.height {
            let mut run = 0u32;
            for x in 0..self.width {
                run += self.data[y * self.width + x] as u32;
                table[(y + 1) * w + x + 1] = table[y * w + x + 1] + run;
            }
        }
        IntegralCount { width: w, table }
    }
}

/// Constant-time on-pixel counts over rectangles of a [`Mask`].
pub struct IntegralCount {
    width: usize,
    table: Vec<u32>,
}

impl IntegralCount {
    /// Count in `[x0, x1) x [y0, y1)`; bounds are clamped to the mask.
    pub fn count(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> u32 {
        let h = self.table.len() / self.width - 1;
        let w = self.width - 1;
        let (x0, x1) = (x0.min(w), x1.min(w));
        let (y0, y1) = (y0.min(h), y1.min(h));
        if x1 <= x0 || y1 <= y0 {
            return 0;
        }
        let at = |x: usize, y: usize| self.table[y * self.width + x];
        at(x1, y1) + at(x0, y0) - at(x0, y1) - at(x1, y0)
    }
}

/// On where the largest per-channel absolute difference strictly exceeds `t_diff`.
pub fn abs_diff_threshold(a: &Frame, b: &Frame, t_diff: u8) -> Result<Mask, RasterError> {
    if a.dims() != b.dims() {
        return Err(RasterError::DimensionMismatch {
            a: a.dims(),
            b: b.dims(),
        });
    }
    if a.camera_id != b.camera_id {
        return Err(RasterError::CameraMismatch(a.camera_id, b.camera_id));
    }
    let data = a
        .pixels
        .chunks_exact(3)
        .zip(b.pixels.chunks_exact(3))
        .map(|(p, q)| {
            let d = p[0]
                .abs_diff(q[0])
                .max(p[1].abs_diff(q[1]))
                .max(p[2].abs_diff(q[2]));
            (d > t_diff) as u8
        })
        .collect();
    Ok(Mask {
        width: a.width,
        height: a.height,
        data,
    })
}

/// Horizontal placement of one camera inside a [`Mosaic`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tile {
    pub camera_id: u16,
    pub x_offset: usize,
    pub width: usize,
}

/// Synchronized frames of all cameras concatenated left to right.
#[derive(Debug, Clone)]
pub struct Mosaic {
    pub image: Frame,
    pub tiles: Vec<Tile>,
}

impl Mosaic {
    pub fn from_frames(frames: &[Frame]) -> Result<Self, RasterError> {
        let first = frames.first().ok_or(RasterError::EmptyMosaic)?;
        let height = first.height;
        let mut tiles = Vec::with_capacity(frames.len());
        let mut x_offset = 0;
        for f in frames {
            if f.height != height {
                return Err(RasterError::DimensionMismatch {
                    a: first.dims(),
                    b: f.dims(),
                });
            }
            tiles.push(Tile {
                camera_id: f.camera_id,
                x_offset,
                width: f.width,
            });
            x_offset += f.width;
        }
        let width = x_offset;
        let mut pixels = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for f in frames {
                pixels.extend_from_slice(f.row(y));
            }
        }
        let image = Frame {
            camera_id: 0,
            frame_index: first.frame_index,
            timestamp_ms: first.timestamp_ms,
            width,
            height,
            pixels,
        };
        Ok(Self { image, tiles })
    }

    pub fn width(&self) -> usize {
        self.image.width
    }

    pub fn height(&self) -> usize {
        self.image.height
    }

    pub fn frame_index(&self) -> u64 {
        self.image.frame_index
    }

    /// Camera tile containing mosaic column `x`, with the local column.
    pub fn locate(&self, x: usize) -> Option<(&Tile, usize)> {
        self.tiles
            .iter()
            .find(|t| x >= t.x_offset && x < t.x_offset + t.width)
            .map(|t| (t, x - t.x_offset))
    }

    /// Copies the square `[x, x + size) x [y, y + size)` region; outside pixels are black.
    pub fn crop(&self, x: i64, y: i64, size: usize) -> Frame {
        let mut out = Frame::filled(0, size, size, [0, 0, 0]);
        out.frame_index = self.image.frame_index;
        out.timestamp_ms = self.image.timestamp_ms;
        for dy in 0..size {
            let sy = y + dy as i64;
            if sy < 0 || sy >= self.height() as i64 {
                continue;
            }
            let sx0 = x.max(0);
            let sx1 = (x + size as i64).min(self.width() as i64);
            if sx1 <= sx0 {
                continue;
            }
            let src = &self.image.row(sy as usize)[sx0 as usize * 3..sx1 as usize * 3];
            let dx0 = (sx0 - x) as usize;
            let dst_start = (dy * size + dx0) * 3;
            out.pixels[dst_start..dst_start + src.len()].copy_from_slice(src);
        }
        out
    }
}
