//! Seam-aware exposure and white-balance correction.
//!
//! Each seam between two horizontally adjacent cameras gets a pair of per-channel affine
//! maps `x -> a*x + b`, one per side, estimated per vertical block from the first two
//! moments of a narrow band along the seam. A map is applied to the half of the frame
//! nearest its seam, blended linearly from the identity at the centre column to the full
//! map at the border column.

use std::fmt::Write as _;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{abs_diff_threshold, Frame, Mask, RasterError, DEFAULT_DIFF_THRESHOLD};

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_BAND_WIDTH: usize = 32;
pub const DEFAULT_BLOCKS: usize = 16;
pub const DEFAULT_SEAM_DOWNSAMPLE: usize = 8;

const MAP_HEADER: &str = "towerkit-exposure-map v1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExposureError {
    #[error("exposure maps differ in geometry: {0}")]
    GeometryMismatch(String),
    #[error("band width {band} exceeds half the frame width {width}")]
    BandTooWide { band: usize, width: usize },
    #[error("block count {blocks} is invalid for frame height {height}")]
    BadBlockCount { blocks: usize, height: usize },
    #[error("downsampled width {0} is below 2 columns")]
    TooNarrow(usize),
    #[error("frame heights differ: {0} vs {1}")]
    HeightMismatch(usize, usize),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("exposure map text, line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Which side of a seam a frame sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeamSide {
    /// Camera left of the seam; its band is the rightmost columns.
    Left,
    /// Camera right of the seam; its band is the leftmost columns.
    Right,
}

impl SeamSide {
    fn as_str(self) -> &'static str {
        match self {
            SeamSide::Left => "left",
            SeamSide::Right => "right",
        }
    }

    /// Column range of the band of width `band` in a frame of `width` columns.
    pub fn band_columns(self, width: usize, band: usize) -> Range<usize> {
        match self {
            SeamSide::Left => width - band..width,
            SeamSide::Right => 0..band,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub a: f64,
    pub b: f64,
}

impl Affine {
    pub const IDENTITY: Affine = Affine { a: 1.0, b: 0.0 };

    pub fn eval(self, x: f64) -> f64 {
        self.a * x + self.b
    }

    fn lerp(self, other: Affine, alpha: f64) -> Affine {
        let mix = |p: f64, n: f64| {
            if p == n {
                p
            } else {
                (1.0 - alpha) * p + alpha * n
            }
        };
        Affine {
            a: mix(self.a, other.a),
            b: mix(self.b, other.b),
        }
    }
}

/// Per-channel maps of one block, in r, g, b order.
pub type BlockMap = [Affine; 3];

pub const IDENTITY_BLOCK: BlockMap = [Affine::IDENTITY; 3];

/// Affine coefficients for one side of one seam, per vertical block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureMap {
    pub seam: (u16, u16),
    pub side: SeamSide,
    pub band_width: usize,
    pub blocks: Vec<BlockMap>,
}

impl ExposureMap {
    pub fn identity(seam: (u16, u16), side: SeamSide, band_width: usize, blocks: usize) -> Self {
        Self {
            seam,
            side,
            band_width,
            blocks: vec![IDENTITY_BLOCK; blocks],
        }
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    fn same_geometry(&self, other: &ExposureMap) -> Result<(), ExposureError> {
        if self.seam != other.seam
            || self.side != other.side
            || self.band_width != other.band_width
            || self.blocks.len() != other.blocks.len()
        {
            return Err(ExposureError::GeometryMismatch(format!(
                "{:?}/{:?}/{}/{} vs {:?}/{:?}/{}/{}",
                self.seam,
                self.side,
                self.band_width,
                self.blocks.len(),
                other.seam,
                other.side,
                other.band_width,
                other.blocks.len()
            )));
        }
        Ok(())
    }
}

/// Both sides of one seam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeamMaps {
    pub left: ExposureMap,
    pub right: ExposureMap,
}

impl SeamMaps {
    pub fn identity(seam: (u16, u16), band_width: usize, blocks: usize) -> Self {
        Self {
            left: ExposureMap::identity(seam, SeamSide::Left, band_width, blocks),
            right: ExposureMap::identity(seam, SeamSide::Right, band_width, blocks),
        }
    }

    pub fn seam(&self) -> (u16, u16) {
        self.left.seam
    }
}

/// Row ranges of `blocks` equal-height blocks; leftover rows join the last block.
pub fn block_rows(height: usize, blocks: usize) -> Result<Vec<Range<usize>>, ExposureError> {
    if blocks == 0 || blocks > height {
        return Err(ExposureError::BadBlockCount { blocks, height });
    }
    let h = height / blocks;
    Ok((0..blocks)
        .map(|k| {
            let end = if k + 1 == blocks { height } else { (k + 1) * h };
            k * h..end
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BlockStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
    pub valid: usize,
    pub area: usize,
}

impl BlockStats {
    pub fn valid_fraction(&self) -> f64 {
        if self.area == 0 {
            0.0
        } else {
            self.valid as f64 / self.area as f64
        }
    }
}

/// Band moments per block.
#[derive(Debug, Clone, PartialEq)]
pub struct BandStats {
    pub blocks: Vec<BlockStats>,
}

/// Mean and population standard deviation per block and channel over the band pixels
/// that are not switched on in `exclude`.
pub fn band_stats(
    frame: &Frame,
    side: SeamSide,
    band_width: usize,
    blocks: usize,
    exclude: Option<&Mask>,
) -> Result<BandStats, ExposureError> {
    let (width, height) = frame.dims();
    if band_width == 0 || band_width > width / 2 {
        return Err(ExposureError::BandTooWide {
            band: band_width,
            width,
        });
    }
    if let Some(m) = exclude {
        if (m.width(), m.height()) != (width, height) {
            return Err(RasterError::DimensionMismatch {
                a: (width, height),
                b: (m.width(), m.height()),
            }
            .into());
        }
    }
    let cols = side.band_columns(width, band_width);
    let stats = block_rows(height, blocks)?
        .into_iter()
        .map(|rows| {
            let mut sum = [0u64; 3];
            let mut sq = [0u64; 3];
            let mut n = 0usize;
            let area = rows.len() * band_width;
            for y in rows {
                let row = frame.row(y);
                for x in cols.clone() {
                    if exclude.is_some_and(|m| m.get(x, y)) {
                        continue;
                    }
                    n += 1;
                    for c in 0..3 {
                        let v = row[x * 3 + c] as u64;
                        sum[c] += v;
                        sq[c] += v * v;
                    }
                }
            }
            let mut s = BlockStats {
                valid: n,
                area,
                ..Default::default()
            };
            if n > 0 {
                let nf = n as f64;
                for c in 0..3 {
                    let mean = sum[c] as f64 / nf;
                    // integer sums keep this cancellation-free for 8-bit data
                    let var = (sq[c] as f64 * nf - (sum[c] as f64).powi(2)) / (nf * nf);
                    s.mean[c] = mean;
                    s.std[c] = var.max(0.0).sqrt();
                }
            }
            s
        })
        .collect();
    Ok(BandStats { blocks: stats })
}

/// Thresholds for fitting maps from band moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub min_band_pixels: usize,
    pub sigma_min: f64,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            min_band_pixels: 64,
            sigma_min: 1e-3,
        }
    }
}

/// A block had too few usable pixels on one side; the caller falls back to smoothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("block has {left} left / {right} right valid pixels, below the fitting minimum")]
pub struct InsufficientPixels {
    pub left: usize,
    pub right: usize,
}

/// Moment matching for one block: both sides are mapped onto the averaged mean and
/// standard deviation. Returns `(left, right)` maps.
pub fn fit_block(
    left: &BlockStats,
    right: &BlockStats,
    params: &FitParams,
) -> Result<(BlockMap, BlockMap), InsufficientPixels> {
    if left.valid < params.min_band_pixels.max(1) || right.valid < params.min_band_pixels.max(1) {
        return Err(InsufficientPixels {
            left: left.valid,
            right: right.valid,
        });
    }
    let mut lm = IDENTITY_BLOCK;
    let mut rm = IDENTITY_BLOCK;
    for c in 0..3 {
        let mu = (left.mean[c] + right.mean[c]) / 2.0;
        let sigma = (left.std[c] + right.std[c]) / 2.0;
        let side = |mean: f64, std: f64| {
            if std < params.sigma_min {
                Affine {
                    a: 1.0,
                    b: mu - mean,
                }
            } else {
                let a = sigma / std;
                Affine {
                    a,
                    b: mu - a * mean,
                }
            }
        };
        lm[c] = side(left.mean[c], left.std[c]);
        rm[c] = side(right.mean[c], right.std[c]);
    }
    Ok((lm, rm))
}

/// Fits every block; blocks without enough pixels carry the error instead of a map.
pub fn fit_affine(
    left: &BandStats,
    right: &BandStats,
    params: &FitParams,
) -> Vec<Result<(BlockMap, BlockMap), InsufficientPixels>> {
    left.blocks
        .iter()
        .zip(&right.blocks)
        .map(|(l, r)| fit_block(l, r, params))
        .collect()
}

/// Coefficient-wise `(1 - alpha) * prev + alpha * new`.
pub fn smooth_exposure(
    prev: &ExposureMap,
    new: &ExposureMap,
    alpha: f64,
) -> Result<ExposureMap, ExposureError> {
    prev.same_geometry(new)?;
    let blocks = prev
        .blocks
        .iter()
        .zip(&new.blocks)
        .map(|(p, n)| smooth_block(p, n, alpha))
        .collect();
    Ok(ExposureMap {
        blocks,
        ..prev.clone()
    })
}

fn smooth_block(prev: &BlockMap, new: &BlockMap, alpha: f64) -> BlockMap {
    [
        prev[0].lerp(new[0], alpha),
        prev[1].lerp(new[1], alpha),
        prev[2].lerp(new[2], alpha),
    ]
}

pub fn smooth_seam(prev: &SeamMaps, new: &SeamMaps, alpha: f64) -> Result<SeamMaps, ExposureError> {
    Ok(SeamMaps {
        left: smooth_exposure(&prev.left, &new.left, alpha)?,
        right: smooth_exposure(&prev.right, &new.right, alpha)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExposureMode {
    #[default]
    Standard,
    ObjectRemoval,
    Smoothing,
}

impl std::str::FromStr for ExposureMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "standard" => Ok(Self::Standard),
            "object_removal" => Ok(Self::ObjectRemoval),
            "smoothing" => Ok(Self::Smoothing),
            _ => Err(format!("unknown exposure mode `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExposureParams {
    pub band_width: usize,
    pub blocks: usize,
    pub alpha: f64,
    pub min_valid_fraction: f64,
    pub min_band_pixels: usize,
    pub sigma_min: f64,
    pub diff_threshold: u8,
}

impl Default for ExposureParams {
    fn default() -> Self {
        Self {
            band_width: DEFAULT_BAND_WIDTH,
            blocks: DEFAULT_BLOCKS,
            alpha: DEFAULT_ALPHA,
            min_valid_fraction: 0.25,
            min_band_pixels: 64,
            sigma_min: 1e-3,
            diff_threshold: DEFAULT_DIFF_THRESHOLD,
        }
    }
}

impl ExposureParams {
    pub fn fit(&self) -> FitParams {
        FitParams {
            min_band_pixels: self.min_band_pixels,
            sigma_min: self.sigma_min,
        }
    }
}

/// Estimates new maps for the seam between `current.0` (left) and `current.1` (right).
///
/// `previous` holds the preceding synchronized pair, used for the motion mask in
/// object-removal mode; `prev_maps` is the previous output for this seam.
pub fn update_exposure(
    current: (&Frame, &Frame),
    previous: Option<(&Frame, &Frame)>,
    prev_maps: Option<&SeamMaps>,
    mode: ExposureMode,
    params: &ExposureParams,
) -> Result<SeamMaps, ExposureError> {
    let (lf, rf) = current;
    if lf.height() != rf.height() {
        return Err(ExposureError::HeightMismatch(lf.height(), rf.height()));
    }
    let seam = (lf.camera_id, rf.camera_id);
    let bw = params.band_width;
    let k = params.blocks;
    let fit = params.fit();
    if let Some(p) = prev_maps {
        let probe = SeamMaps::identity(seam, bw, k);
        p.left.same_geometry(&probe.left)?;
    }

    let raw_l = band_stats(lf, SeamSide::Left, bw, k, None)?;
    let raw_r = band_stats(rf, SeamSide::Right, bw, k, None)?;
    let standard = fit_affine(&raw_l, &raw_r, &fit);

    let prev_block = |i: usize| prev_maps.map(|p| (p.left.blocks[i], p.right.blocks[i]));
    // standard fit, or the previous block (identity when none) if the band is too small
    let standard_or_prev = |i: usize| match standard[i] {
        Ok(pair) => pair,
        Err(_) => prev_block(i).unwrap_or((IDENTITY_BLOCK, IDENTITY_BLOCK)),
    };
    let smoothed = |i: usize| {
        let new = standard_or_prev(i);
        match prev_block(i) {
            Some((pl, pr)) => (
                smooth_block(&pl, &new.0, params.alpha),
                smooth_block(&pr, &new.1, params.alpha),
            ),
            None => new,
        }
    };

    let pairs: Vec<(BlockMap, BlockMap)> = match mode {
        ExposureMode::Standard => (0..k).map(standard_or_prev).collect(),
        ExposureMode::Smoothing => (0..k).map(smoothed).collect(),
        ExposureMode::ObjectRemoval => match previous {
            None => (0..k).map(standard_or_prev).collect(),
            Some((pl, pr)) => {
                let ml = abs_diff_threshold(pl, lf, params.diff_threshold)?;
                let mr = abs_diff_threshold(pr, rf, params.diff_threshold)?;
                let masked_l = band_stats(lf, SeamSide::Left, bw, k, Some(&ml))?;
                let masked_r = band_stats(rf, SeamSide::Right, bw, k, Some(&mr))?;
                (0..k)
                    .map(|i| {
                        let (l, r) = (&masked_l.blocks[i], &masked_r.blocks[i]);
                        let frac = l.valid_fraction().min(r.valid_fraction());
                        if frac < params.min_valid_fraction {
                            return smoothed(i);
                        }
                        fit_block(l, r, &fit).unwrap_or_else(|_| smoothed(i))
                    })
                    .collect()
            }
        },
    };

    let (lb, rb) = pairs.into_iter().unzip();
    Ok(SeamMaps {
        left: ExposureMap {
            seam,
            side: SeamSide::Left,
            band_width: bw,
            blocks: lb,
        },
        right: ExposureMap {
            seam,
            side: SeamSide::Right,
            band_width: bw,
            blocks: rb,
        },
    })
}

/// Columns touched by a map and their blend weights: 0 at the centre column, 1 at the
/// seam border column. The right side is the mirror image of the left side.
fn blend_columns(width: usize, side: SeamSide) -> (Range<usize>, Vec<f64>) {
    let center = width / 2;
    let span = (width - 1).saturating_sub(center);
    let mut weights: Vec<f64> = (0..width - center)
        .map(|i| {
            if span == 0 {
                1.0
            } else {
                i as f64 / span as f64
            }
        })
        .collect();
    match side {
        SeamSide::Left => (center..width, weights),
        SeamSide::Right => {
            weights.reverse();
            (0..width - center, weights)
        }
    }
}

/// Applies `map` to `frame` in place.
pub fn apply_exposure_in_place(frame: &mut Frame, map: &ExposureMap) {
    let (width, height) = frame.dims();
    if width == 0 || height == 0 {
        return;
    }
    let Ok(rows) = block_rows(height, map.blocks.len()) else {
        return;
    };
    let (cols, lambda) = blend_columns(width, map.side);
    let n = cols.len() * 3;
    let mut gain = vec![0f32; n];
    let mut offset = vec![0f32; n];
    let stride = width * 3;
    let pixels = frame.pixels_mut();
    for (block, rows) in map.blocks.iter().zip(rows) {
        for (i, &l) in lambda.iter().enumerate() {
            for c in 0..3 {
                let f = block[c];
                gain[i * 3 + c] = (1.0 - l + l * f.a) as f32;
                offset[i * 3 + c] = (l * f.b) as f32;
            }
        }
        for y in rows {
            let start = y * stride + cols.start * 3;
            let seg = &mut pixels[start..start + n];
            for ((p, &g), &o) in seg.iter_mut().zip(&gain).zip(&offset) {
                let v = (*p as f32 * g + o).clamp(0.0, 255.0) + 0.5;
                *p = v as u8;
            }
        }
    }
}

/// Returns the corrected frame; the half away from the map's seam is untouched.
pub fn apply_exposure(frame: &Frame, map: &ExposureMap) -> Frame {
    let mut out = frame.clone();
    apply_exposure_in_place(&mut out, map);
    out
}

/// Corrects a row of cameras in place; `maps[i]` is the seam between `frames[i]` and
/// `frames[i + 1]`. Frames are processed in parallel.
pub fn correct_frames(frames: &mut [Frame], maps: &[SeamMaps]) {
    let n = frames.len();
    frames.par_iter_mut().enumerate().for_each(|(j, f)| {
        if let Some(m) = j.checked_sub(1).and_then(|i| maps.get(i)) {
            apply_exposure_in_place(f, &m.right);
        }
        if let Some(m) = maps.get(j).filter(|_| j + 1 < n) {
            apply_exposure_in_place(f, &m.left);
        }
    });
}

/// Box-filtered column `col` of a frame downsampled by `factor` in both directions.
fn downsampled_column(frame: &Frame, factor: usize, col: usize, rows: usize) -> Vec<[f64; 3]> {
    let norm = (factor * factor) as f64;
    (0..rows)
        .map(|r| {
            let mut acc = [0f64; 3];
            for y in r * factor..(r + 1) * factor {
                let row = frame.row(y);
                for x in col * factor..(col + 1) * factor {
                    for c in 0..3 {
                        acc[c] += row[x * 3 + c] as f64;
                    }
                }
            }
            acc.map(|v| v / norm)
        })
        .collect()
}

/// Mean discrepancy of the intensity trend across the seam between `left` and `right`.
///
/// After box downsampling, each row contributes the average of the Euclidean RGB norms
/// of the second differences taken across the two columns on each side of the seam.
pub fn seam_cost(left: &Frame, right: &Frame, downsample: usize) -> Result<f64, ExposureError> {
    if left.height() != right.height() {
        return Err(ExposureError::HeightMismatch(left.height(), right.height()));
    }
    let f = downsample.max(1);
    let lw = left.width() / f;
    let rw = right.width() / f;
    let rows = left.height() / f;
    if lw < 2 || rw < 2 {
        return Err(ExposureError::TooNarrow(lw.min(rw)));
    }
    if rows == 0 {
        return Err(ExposureError::BadBlockCount {
            blocks: f,
            height: left.height(),
        });
    }
    let l_outer = downsampled_column(left, f, lw - 2, rows);
    let l_edge = downsampled_column(left, f, lw - 1, rows);
    let r_edge = downsampled_column(right, f, 0, rows);
    let r_outer = downsampled_column(right, f, 1, rows);
    let norm = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let mut total = 0.0;
    for i in 0..rows {
        let mut dp = [0f64; 3];
        let mut dm = [0f64; 3];
        for c in 0..3 {
            dp[c] = (r_outer[i][c] - r_edge[i][c]) - (r_edge[i][c] - l_edge[i][c]);
            dm[c] = (l_outer[i][c] - l_edge[i][c]) - (l_edge[i][c] - r_edge[i][c]);
        }
        total += (norm(dp) + norm(dm)) / 2.0;
    }
    Ok(total / rows as f64)
}

/// Serializes maps as a versioned table, one coefficient pair per line.
pub fn maps_to_text(maps: &[SeamMaps]) -> String {
    let mut out = String::new();
    out.push_str(MAP_HEADER);
    out.push('\n');
    out.push_str("# seam_left seam_right side band_width block channel a b\n");
    for m in maps {
        for map in [&m.left, &m.right] {
            for (k, block) in map.blocks.iter().enumerate() {
                for (c, ch) in ["r", "g", "b"].iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{} {} {} {} {} {} {} {}",
                        map.seam.0,
                        map.seam.1,
                        map.side.as_str(),
                        map.band_width,
                        k,
                        ch,
                        block[c].a,
                        block[c].b
                    );
                }
            }
        }
    }
    out
}

pub fn maps_from_text(text: &str) -> Result<Vec<SeamMaps>, ExposureError> {
    let err = |line: usize, msg: &str| ExposureError::Parse {
        line,
        msg: msg.to_string(),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == MAP_HEADER => {}
        _ => return Err(err(1, "missing header")),
    }
    let mut out: Vec<SeamMaps> = Vec::new();
    for (i, line) in lines {
        let ln = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 8 {
            return Err(err(ln, "expected 8 fields"));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| err(ln, "bad integer"));
        let float = |s: &str| s.parse::<f64>().map_err(|_| err(ln, "bad number"));
        let seam = (int(f[0])? as u16, int(f[1])? as u16);
        let side = match f[2] {
            "left" => SeamSide::Left,
            "right" => SeamSide::Right,
            _ => return Err(err(ln, "side must be left or right")),
        };
        let band = int(f[3])?;
        let block = int(f[4])?;
        let ch = match f[5] {
            "r" => 0,
            "g" => 1,
            "b" => 2,
            _ => return Err(err(ln, "channel must be r, g or b")),
        };
        let coef = Affine {
            a: float(f[6])?,
            b: float(f[7])?,
        };
        let idx = match out.iter().position(|m| m.seam() == seam) {
            Some(i) => i,
            None => {
                out.push(SeamMaps::identity(seam, band, 0));
                out.len() - 1
            }
        };
        let map = match side {
            SeamSide::Left => &mut out[idx].left,
            SeamSide::Right => &mut out[idx].right,
        };
        map.band_width = band;
        if map.blocks.len() <= block {
            map.blocks.resize(block + 1, IDENTITY_BLOCK);
        }
        map.blocks[block][ch] = coef;
    }
    Ok(out)
}

/// Keeps the previous frames and maps of a camera row between map updates.
#[derive(Debug, Clone)]
pub struct ExposureEstimator {
    pub mode: ExposureMode,
    pub params: ExposureParams,
    prev_frames: Option<Vec<Frame>>,
    maps: Option<Vec<SeamMaps>>,
}

impl ExposureEstimator {
    pub fn new(mode: ExposureMode, params: ExposureParams) -> Self {
        Self {
            mode,
            params,
            prev_frames: None,
            maps: None,
        }
    }

    pub fn maps(&self) -> Option<&[SeamMaps]> {
        self.maps.as_deref()
    }

    /// Updates the maps for every adjacent pair in `frames`.
    pub fn update(&mut self, frames: &[Frame]) -> Result<Vec<SeamMaps>, ExposureError> {
        let mut out = Vec::with_capacity(frames.len().saturating_sub(1));
        for i in 0..frames.len().saturating_sub(1) {
            let prev = self
                .prev_frames
                .as_ref()
                .filter(|p| p.len() == frames.len())
                .map(|p| (&p[i], &p[i + 1]));
            let prev_map = self.maps.as_ref().and_then(|m| m.get(i));
            out.push(update_exposure(
                (&frames[i], &frames[i + 1]),
                prev,
                prev_map,
                self.mode,
                &self.params,
            )?);
        }
        self.prev_frames = Some(frames.to_vec());
        self.maps = Some(out.clone());
        Ok(out)
    }
}
