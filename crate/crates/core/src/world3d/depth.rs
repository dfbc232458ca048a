use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;

use super::{CameraModel, GeoError, HeightField, Vec3};
use crate::geom::{BBox, Tile};

const MAGIC: &[u8; 4] = b"TKDM";
const VERSION: u32 = 1;

/// Per-pixel distance along the pixel ray to the terrain; `f64::INFINITY` marks sky.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    depth: Vec<f64>,
}

impl DepthMap {
    /// Casts one ray per pixel centre. Pixels whose ray cannot be cast are sky.
    pub fn build(cam: &CameraModel, hf: &HeightField) -> Self {
        let (w, h) = (cam.width, cam.height);
        let mut depth = vec![f64::INFINITY; w * h];
        depth.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            for (x, d) in row.iter_mut().enumerate() {
                if let Ok(hit) = hf.raycast(&cam.pixel_to_ray(x, y)) {
                    *d = hit.depth().unwrap_or(f64::INFINITY);
                }
            }
        });
        Self {
            width: w,
            height: h,
            depth,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// `None` for sky.
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let d = self.depth[y * self.width + x];
        d.is_finite().then_some(d)
    }

    pub fn values(&self) -> &[f64] {
        &self.depth
    }

    pub fn is_all_sky(&self) -> bool {
        self.depth.iter().all(|d| d.is_infinite())
    }

    /// `TKDM`, version, width, height (u32 LE) then little-endian f32 depths.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), GeoError> {
        w.write_all(MAGIC)?;
        for v in [VERSION, self.width as u32, self.height as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.depth.len() * 4);
        for &d in &self.depth {
            buf.extend_from_slice(&(d as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, GeoError> {
        let mut head = [0u8; 16];
        r.read_exact(&mut head)?;
        if &head[..4] != MAGIC {
            return Err(GeoError::Parse("not a depth map file".into()));
        }
        let word = |i: usize| u32::from_le_bytes(head[i..i + 4].try_into().unwrap());
        if word(4) != VERSION {
            return Err(GeoError::Parse(format!(
                "unsupported depth map version {}",
                word(4)
            )));
        }
        let (width, height) = (word(8) as usize, word(12) as usize);
        let mut raw = vec![0u8; width * height * 4];
        r.read_exact(&mut raw)?;
        let depth = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Ok(Self {
            width,
            height,
            depth,
        })
    }
}

/// Pixel where a box touches the ground: the bottom-centre pixel, clamped to the image.
pub fn ground_anchor(bbox: &BBox, width: usize, height: usize) -> (usize, usize) {
    let x = (bbox.x + bbox.w / 2.0).floor();
    let y = (bbox.y + bbox.h).ceil() - 1.0;
    let clamp = |v: f64, n: usize| (v.max(0.0) as usize).min(n.saturating_sub(1));
    (clamp(x, width), clamp(y, height))
}

/// World position of the surface seen at pixel `(px, py)`; `Ok(None)` for sky.
pub fn position_event(
    cam: &CameraModel,
    depth: &DepthMap,
    px: usize,
    py: usize,
) -> Result<Option<Vec3>, GeoError> {
    if depth.dims() != (cam.width, cam.height) {
        return Err(GeoError::DepthMapSize {
            got: depth.dims(),
            want: (cam.width, cam.height),
        });
    }
    if px >= cam.width || py >= cam.height {
        return Err(GeoError::PixelOutOfRange(px, py));
    }
    Ok(depth.get(px, py).map(|d| cam.pixel_to_ray(px, py).at(d)))
}

/// World position under the ground anchor of a box given in mosaic coordinates.
///
/// `depths[i]` belongs to `cameras[i]`; `Ok(None)` when the anchor sees sky or falls
/// on a camera that has no entry.
pub fn mosaic_position(
    bbox: &BBox,
    tiles: &[Tile],
    height: usize,
    cameras: &[CameraModel],
    depths: &[Arc<DepthMap>],
) -> Result<Option<Vec3>, GeoError> {
    let width = tiles
        .iter()
        .map(|t| t.x_offset + t.width)
        .max()
        .unwrap_or(0);
    let (x, y) = ground_anchor(bbox, width, height);
    let Some(tile) = tiles
        .iter()
        .find(|t| x >= t.x_offset && x < t.x_offset + t.width)
    else {
        return Ok(None);
    };
    let Some(i) = cameras.iter().position(|c| c.id == tile.camera_id) else {
        return Ok(None);
    };
    match depths.get(i) {
        Some(d) => position_event(&cameras[i], d, x - tile.x_offset, y),
        None => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn flat() -> HeightField {
        HeightField::flat([-500.0, -500.0], 2.0, 501, 501, 0.0)
    }

    fn looking_down(yaw: f64) -> CameraModel {
        let mut c = CameraModel::new(1, [0.0, 0.0, 10.0], yaw, FRAC_PI_2, 64, 48);
        c.pitch = -0.5;
        c
    }

    #[test]
    fn bottom_centre_depth_is_analytic() {
        let cam = looking_down(0.0);
        let dm = DepthMap::build(&cam, &flat());
        let ray = cam.pixel_to_ray(32, 47);
        let analytic = 10.0 / -ray.dir[2];
        let got = dm.get(32, 47).unwrap();
        assert!((got - analytic).abs() / analytic < 1e-6);
    }

    #[test]
    fn sky_camera_sees_only_sky() {
        let mut cam = looking_down(0.0);
        cam.pitch = 1.2;
        assert!(DepthMap::build(&cam, &flat()).is_all_sky());
    }

    #[test]
    fn depth_grows_towards_the_horizon() {
        let cam = looking_down(0.3);
        let dm = DepthMap::build(&cam, &flat());
        for x in [0, 20, 63] {
            let col: Vec<f64> = (0..48).filter_map(|y| dm.get(x, y)).collect();
            assert!(col.windows(2).all(|w| w[0] > w[1]), "column {x}");
        }
    }

    #[test]
    fn yaw_leaves_flat_terrain_depths_unchanged() {
        let hf = flat();
        let mut a = CameraModel::new(1, [0.0, 0.0, 10.0], 0.0, FRAC_PI_2, 64, 48);
        a.pitch = 0.0;
        let b = CameraModel {
            yaw: FRAC_PI_2,
            ..a.clone()
        };
        let (da, db) = (DepthMap::build(&a, &hf), DepthMap::build(&b, &hf));
        for (x, y) in [(0, 40), (31, 47), (63, 30)] {
            let (p, q) = (da.get(x, y).unwrap(), db.get(x, y).unwrap());
            assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn position_event_matches_raycast_example() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // a 1x1 camera whose only ray points along (1, 0, -1) / sqrt 2
        let mut cam = CameraModel::new(0, [0.0, 0.0, 10.0], FRAC_PI_2, 0.1, 1, 1);
        cam.pitch = -std::f64::consts::FRAC_PI_4;
        let dm = DepthMap::build(&cam, &flat());
        let p = position_event(&cam, &dm, 0, 0).unwrap().unwrap();
        assert!((p[0] - 10.0).abs() < 1e-9 && p[1].abs() < 1e-9 && p[2].abs() < 1e-9);
        assert!((dm.get(0, 0).unwrap() - 20.0 * s).abs() < 1e-9);
    }

    #[test]
    fn sky_pixel_positions_nowhere() {
        let mut cam = looking_down(0.0);
        cam.pitch = 1.2;
        let dm = DepthMap::build(&cam, &flat());
        assert_eq!(position_event(&cam, &dm, 3, 3).unwrap(), None);
        assert!(position_event(&cam, &dm, 64, 0).is_err());
    }

    #[test]
    fn anchor_is_bottom_centre() {
        let b = BBox::new(10.0, 20.0, 6.0, 4.0);
        assert_eq!(ground_anchor(&b, 100, 100), (13, 23));
        assert_eq!(
            ground_anchor(&BBox::new(98.0, 98.0, 10.0, 10.0), 100, 100),
            (99, 99)
        );
    }

    #[test]
    fn binary_round_trip() {
        let cam = looking_down(0.0);
        let dm = DepthMap::build(&cam, &flat());
        let mut bytes = Vec::new();
        dm.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"TKDM");
        assert_eq!(bytes.len(), 16 + 64 * 48 * 4);
        let back = DepthMap::read_from(&bytes[..]).unwrap();
        for (a, b) in back.values().iter().zip(dm.values()) {
            assert!(a == b || (a - b).abs() / b < 1e-6);
        }
    }
}
