use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GeoError, Vec3};

/// Calibrated pinhole camera in a planar metric coordinate system
/// (x = easting, y = northing, z = height).
///
/// `yaw` is measured clockwise from north, `pitch` is positive upwards and `roll`
/// rotates the image clockwise. Lens distortion is not modelled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub id: u16,
    pub position: Vec3,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    pub hfov: f64,
    pub aspect: f64,
    pub width: usize,
    pub height: usize,
}

/// Ray with unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        [
            self.origin[0] + t * self.dir[0],
            self.origin[1] + t * self.dir[1],
            self.origin[2] + t * self.dir[2],
        ]
    }
}

impl CameraModel {
    /// Square-pixel camera looking horizontally along `yaw`.
    pub fn new(id: u16, position: Vec3, yaw: f64, hfov: f64, width: usize, height: usize) -> Self {
        Self {
            id,
            position,
            yaw,
            pitch: 0.0,
            roll: 0.0,
            hfov,
            aspect: width as f64 / height as f64,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        let mut bad = Vec::new();
        if !(self.hfov > 0.0 && self.hfov < std::f64::consts::PI) {
            bad.push(("hfov", "must lie in (0, pi)".to_string()));
        }
        if !(self.aspect > 0.0 && self.aspect.is_finite()) {
            bad.push(("aspect", "must be positive".to_string()));
        }
        if self.width == 0 {
            bad.push(("width", "must be positive".to_string()));
        }
        if self.height == 0 {
            bad.push(("height", "must be positive".to_string()));
        }
        for (name, v) in [
            ("yaw", self.yaw),
            ("pitch", self.pitch),
            ("roll", self.roll),
        ] {
            if !v.is_finite() {
                bad.push((name, "must be finite".to_string()));
            }
        }
        if self.position.iter().any(|v| !v.is_finite()) {
            bad.push(("position", "must be finite".to_string()));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(GeoError::InvalidCamera(
                bad.into_iter().map(|(f, m)| (f.to_string(), m)).collect(),
            ))
        }
    }

    /// Focal lengths in pixels.
    pub fn focal(&self) -> (f64, f64) {
        let t = (self.hfov / 2.0).tan();
        let fx = self.width as f64 / 2.0 / t;
        let fy = self.height as f64 / 2.0 * self.aspect / t;
        (fx, fy)
    }

    fn axes(&self) -> (Vec3, Vec3) {
        let (s, c) = self.yaw.sin_cos();
        let forward = [s, c, 0.0];
        let right = [c, -s, 0.0];
        (forward, right)
    }

    /// Ray through continuous image coordinates; pixel `(i, j)` spans `[i, i+1) x [j, j+1)`.
    pub fn image_ray(&self, px: f64, py: f64) -> Ray {
        let (fx, fy) = self.focal();
        let r = (px - self.width as f64 / 2.0) / fx;
        let u = -(py - self.height as f64 / 2.0) / fy;
        let f = 1.0;
        // roll about forward
        let (sr, cr) = self.roll.sin_cos();
        let (r1, u1) = (r * cr - u * sr, r * sr + u * cr);
        // pitch about right
        let (sp, cp) = self.pitch.sin_cos();
        let (u2, f2) = (u1 * cp + f * sp, f * cp - u1 * sp);
        // yaw about up
        let (fwd, right) = self.axes();
        let d = [r1 * right[0] + f2 * fwd[0], r1 * right[1] + f2 * fwd[1], u2];
        Ray {
            origin: self.position,
            dir: super::normalize(d),
        }
    }

    /// Ray through the centre of pixel `(px, py)`.
    pub fn pixel_to_ray(&self, px: usize, py: usize) -> Ray {
        self.image_ray(px as f64 + 0.5, py as f64 + 0.5)
    }

    /// Continuous image coordinates of a world point and its depth along the optical
    /// axis; `None` behind the camera. Points outside the image are still returned.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64, f64)> {
        let d = [
            p[0] - self.position[0],
            p[1] - self.position[1],
            p[2] - self.position[2],
        ];
        let (fwd, right) = self.axes();
        let f2 = d[0] * fwd[0] + d[1] * fwd[1];
        let r1 = d[0] * right[0] + d[1] * right[1];
        let u2 = d[2];
        let (sp, cp) = self.pitch.sin_cos();
        let f1 = f2 * cp + u2 * sp;
        let u1 = -f2 * sp + u2 * cp;
        let (sr, cr) = self.roll.sin_cos();
        let r = r1 * cr + u1 * sr;
        let u = -r1 * sr + u1 * cr;
        if f1 <= 1e-9 {
            return None;
        }
        let (fx, fy) = self.focal();
        Some((
            self.width as f64 / 2.0 + fx * r / f1,
            self.height as f64 / 2.0 - fy * u / f1,
            f1,
        ))
    }

    pub fn in_image(&self, px: f64, py: f64) -> bool {
        px >= 0.0 && py >= 0.0 && px < self.width as f64 && py < self.height as f64
    }

    /// Parameters as `key=value` lines. Floats use the shortest representation that
    /// parses back to the same value.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "id={}", self.id);
        let _ = writeln!(s, "easting={}", self.position[0]);
        let _ = writeln!(s, "northing={}", self.position[1]);
        let _ = writeln!(s, "height={}", self.position[2]);
        let _ = writeln!(s, "yaw={}", self.yaw);
        let _ = writeln!(s, "pitch={}", self.pitch);
        let _ = writeln!(s, "roll={}", self.roll);
        let _ = writeln!(s, "hfov={}", self.hfov);
        let _ = writeln!(s, "aspect={}", self.aspect);
        let _ = writeln!(s, "width_px={}", self.width);
        let _ = writeln!(s, "height_px={}", self.height);
        s
    }

    pub fn from_kv(text: &str) -> Result<Self, GeoError> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| GeoError::Parse(format!("line {}: expected key=value", i + 1)))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            map.get(k)
                .ok_or_else(|| GeoError::Parse(format!("missing key `{k}`")))
        };
        let float = |k: &str| -> Result<f64, GeoError> {
            get(k)?
                .parse()
                .map_err(|_| GeoError::Parse(format!("bad number for `{k}`")))
        };
        let int = |k: &str| -> Result<usize, GeoError> {
            get(k)?
                .parse()
                .map_err(|_| GeoError::Parse(format!("bad integer for `{k}`")))
        };
        let cam = CameraModel {
            id: int("id")? as u16,
            position: [float("easting")?, float("northing")?, float("height")?],
            yaw: float("yaw")?,
            pitch: float("pitch")?,
            roll: float("roll")?,
            hfov: float("hfov")?,
            aspect: float("aspect")?,
            width: int("width_px")?,
            height: int("height_px")?,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn save(&self, path: &Path) -> Result<(), GeoError> {
        std::fs::write(path, self.to_kv())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, GeoError> {
        Self::from_kv(&std::fs::read_to_string(path)?)
    }
}
