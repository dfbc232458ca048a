//! Calibrated cameras over a georeferenced heightfield.

mod camera;
mod depth;
mod terrain;

pub use camera::{CameraModel, Ray};
pub use depth::{ground_anchor, mosaic_position, position_event, DepthMap};
pub use terrain::{HeightField, RayHit, DEFAULT_NODATA};

use thiserror::Error;

/// Easting, northing, height in metres.
pub type Vec3 = [f64; 3];

pub fn normalize(v: Vec3) -> Vec3 {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("invalid camera parameters: {}", fmt_fields(.0))]
    InvalidCamera(Vec<(String, String)>),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("ray origin {origin:?} lies below terrain height {terrain}")]
    OriginBelowTerrain { origin: Vec3, terrain: f64 },
    #[error("pixel ({0}, {1}) outside the image")]
    PixelOutOfRange(usize, usize),
    #[error("depth map is {got:?}, camera is {want:?}")]
    DepthMapSize {
        got: (usize, usize),
        want: (usize, usize),
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn fmt_fields(fields: &[(String, String)]) -> String {
    fields
        .iter()
        .map(|(f, m)| format!("{f} {m}"))
        .collect::<Vec<_>>()
        .join("; ")
}
