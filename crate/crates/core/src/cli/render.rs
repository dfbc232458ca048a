//! Terrain wireframe overlays and frame blending for calibration.

use std::io::Cursor;

use image::{ImageFormat, RgbImage, RgbaImage};

use crate::geom::Frame;
use crate::world3d::{CameraModel, DepthMap, HeightField, Vec3};

pub const WIRE_COLOR: [u8; 3] = [255, 220, 0];
/// Grid lines drawn per direction, at most.
const MAX_LINES: usize = 100;

/// Terrain grid edges as seen by `cam`, opaque on a transparent background.
///
/// Edges are drawn far to near and each sample is tested against `depth`, the camera's
/// depth map of the same terrain, so hidden edges stay invisible.
pub fn render_wireframe(cam: &CameraModel, hf: &HeightField, depth: &DepthMap) -> RgbaImage {
    let mut img = RgbaImage::new(cam.width as u32, cam.height as u32);
    let stride = (hf.cols.max(hf.rows) / MAX_LINES).max(1);
    let cols: Vec<usize> = grid_lines(hf.cols, stride);
    let rows: Vec<usize> = grid_lines(hf.rows, stride);
    let vertex = |c: usize, r: usize| -> Option<Vec3> {
        let h = hf.sample(c, r)?;
        Some([
            hf.origin[0] + c as f64 * hf.cell_size,
            hf.origin[1] + r as f64 * hf.cell_size,
            h,
        ])
    };
    let mut edges: Vec<(Vec3, Vec3)> = Vec::new();
    for &r in &rows {
        for w in cols.windows(2) {
            if let (Some(a), Some(b)) = (vertex(w[0], r), vertex(w[1], r)) {
                edges.push((a, b));
            }
        }
    }
    for &c in &cols {
        for w in rows.windows(2) {
            if let (Some(a), Some(b)) = (vertex(c, w[0]), vertex(c, w[1])) {
                edges.push((a, b));
            }
        }
    }
    let dist = |p: Vec3| {
        let d = [
            p[0] - cam.position[0],
            p[1] - cam.position[1],
            p[2] - cam.position[2],
        ];
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    };
    let mid = |e: &(Vec3, Vec3)| {
        dist([
            (e.0[0] + e.1[0]) / 2.0,
            (e.0[1] + e.1[1]) / 2.0,
            (e.0[2] + e.1[2]) / 2.0,
        ])
    };
    edges.sort_by(|a, b| mid(b).total_cmp(&mid(a)));

    for (a, b) in edges {
        let steps = match (cam.project(a), cam.project(b)) {
            (Some(pa), Some(pb)) => {
                if !segment_may_hit(cam, pa, pb) {
                    continue;
                }
                ((pa.0 - pb.0).hypot(pa.1 - pb.1).ceil() as usize).clamp(1, 8192)
            }
            (None, None) => continue,
            _ => 2048,
        };
        for k in 0..=steps {
            let t = k as f64 / steps as f64;
            let p = [
                a[0] + (b[0] - a[0]) * t,
                a[1] + (b[1] - a[1]) * t,
                a[2] + (b[2] - a[2]) * t,
            ];
            let Some((px, py, _)) = cam.project(p) else {
                continue;
            };
            if !cam.in_image(px, py) {
                continue;
            }
            let (x, y) = (px as usize, py as usize);
            let visible = depth.get(x, y).is_some_and(|d| dist(p) <= d * 1.01 + 1.0);
            if visible {
                img.put_pixel(
                    x as u32,
                    y as u32,
                    image::Rgba([WIRE_COLOR[0], WIRE_COLOR[1], WIRE_COLOR[2], 255]),
                );
            }
        }
    }
    img
}

fn grid_lines(n: usize, stride: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).step_by(stride).collect();
    if v.last() != Some(&(n - 1)) {
        v.push(n - 1);
    }
    v
}

/// Cheap rejection of segments entirely off one side of the image.
fn segment_may_hit(cam: &CameraModel, a: (f64, f64, f64), b: (f64, f64, f64)) -> bool {
    let (w, h) = (cam.width as f64, cam.height as f64);
    !((a.0 < 0.0 && b.0 < 0.0)
        || (a.1 < 0.0 && b.1 < 0.0)
        || (a.0 >= w && b.0 >= w)
        || (a.1 >= h && b.1 >= h))
}

/// `(1 - alpha) * frame + alpha * overlay`, with the overlay composited on black.
pub fn blend(frame: &Frame, overlay: &RgbaImage, alpha: f64) -> Frame {
    let mut out = frame.clone();
    let alpha = alpha.clamp(0.0, 1.0);
    for (p, o) in out.pixels_mut().chunks_exact_mut(3).zip(overlay.pixels()) {
        let a = o[3] as f64 / 255.0;
        for c in 0..3 {
            let v = (1.0 - alpha) * p[c] as f64 + alpha * (o[c] as f64 * a);
            p[c] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

pub fn png_rgb(frame: &Frame) -> Vec<u8> {
    let img = RgbImage::from_raw(
        frame.width() as u32,
        frame.height() as u32,
        frame.pixels().to_vec(),
    )
    .expect("frame buffer matches its dimensions");
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .expect("in-memory PNG encoding");
    buf.into_inner()
}

pub fn png_rgba(img: &RgbaImage) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .expect("in-memory PNG encoding");
    buf.into_inner()
}
