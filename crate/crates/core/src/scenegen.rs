//! Deterministic synthetic multi-camera scenes with ground truth.
//!
//! A [`Scenario`] is plain data (JSON on disk). [`Scene`] resolves the terrain and
//! answers ground-truth queries; [`SceneRenderer`] adds the per-camera background
//! rasters needed to produce frames.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{BBox, Category, Frame, Mosaic, Tile};
use crate::world3d::{CameraModel, DepthMap, GeoError, HeightField, Vec3};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("reading scenario {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("scenario syntax: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerrainSpec {
    /// Constant height over a square grid centred on `center`.
    Flat {
        #[serde(default)]
        height: f64,
        #[serde(default)]
        center: [f64; 2],
        #[serde(default = "default_cell")]
        cell_size: f64,
        #[serde(default = "default_half_extent")]
        half_extent: f64,
    },
    /// `height + gradient . (e, n)` over a square grid centred on `center`.
    Slope {
        #[serde(default)]
        height: f64,
        gradient: [f64; 2],
        #[serde(default)]
        center: [f64; 2],
        #[serde(default = "default_cell")]
        cell_size: f64,
        #[serde(default = "default_half_extent")]
        half_extent: f64,
    },
    /// ESRI ASCII grid, relative paths resolved against the scenario file.
    AsciiGrid { path: PathBuf },
}

fn default_cell() -> f64 {
    2.0
}

fn default_half_extent() -> f64 {
    1000.0
}

fn default_tick_ms() -> u64 {
    33
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub sky: [u8; 3],
    pub ground: [u8; 3],
    /// Relative amplitude of the noise texture.
    pub contrast: f64,
    /// Ground texture feature size in metres.
    pub ground_scale: f64,
    /// Sky texture feature size in radians.
    pub sky_scale: f64,
}

impl Default for Background {
    fn default() -> Self {
        Self {
            sky: [120, 150, 190],
            ground: [90, 110, 70],
            contrast: 0.35,
            ground_scale: 25.0,
            sky_scale: 0.15,
        }
    }
}

/// Per-channel `gain * p + offset` applied to one camera after rendering, with a linear
/// drift per tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distortion {
    pub camera: u16,
    #[serde(default = "unit3")]
    pub gain: [f64; 3],
    #[serde(default)]
    pub offset: [f64; 3],
    #[serde(default)]
    pub gain_drift: [f64; 3],
    #[serde(default)]
    pub offset_drift: [f64; 3],
}

fn unit3() -> [f64; 3] {
    [1.0; 3]
}

impl Distortion {
    pub fn at(&self, tick: u64) -> ([f64; 3], [f64; 3]) {
        let t = tick as f64;
        let mut g = self.gain;
        let mut o = self.offset;
        for c in 0..3 {
            g[c] += self.gain_drift[c] * t;
            o[c] += self.offset_drift[c] * t;
        }
        (g, o)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub tick: f64,
    pub east: f64,
    pub north: f64,
    /// Height above the terrain.
    #[serde(default)]
    pub altitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: u32,
    pub category: Category,
    /// Width and height in metres.
    pub size: [f64; 2],
    pub waypoints: Vec<Waypoint>,
    /// Overrides the category colour.
    #[serde(default)]
    pub color: Option<[u8; 3]>,
}

impl ObjectSpec {
    /// Linear interpolation between waypoints; `None` outside the path's time span.
    pub fn position_at(&self, tick: f64) -> Option<(f64, f64, f64)> {
        let first = self.waypoints.first()?;
        let last = self.waypoints.last()?;
        if tick < first.tick || tick > last.tick {
            return None;
        }
        let lerp = |a: &Waypoint, b: &Waypoint| {
            let s = if b.tick > a.tick {
                (tick - a.tick) / (b.tick - a.tick)
            } else {
                0.0
            };
            (
                a.east + s * (b.east - a.east),
                a.north + s * (b.north - a.north),
                a.altitude + s * (b.altitude - a.altitude),
            )
        };
        let seg = self
            .waypoints
            .windows(2)
            .find(|w| tick <= w[1].tick)
            .map(|w| lerp(&w[0], &w[1]));
        Some(seg.unwrap_or((first.east, first.north, first.altitude)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub ticks: u64,
    #[serde(default = "default_tick_ms")]
    pub tick_ms: u64,
    pub cameras: Vec<CameraModel>,
    pub terrain: TerrainSpec,
    #[serde(default)]
    pub background: Background,
    #[serde(default)]
    pub distortion: Vec<Distortion>,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    /// Standard deviation of per-pixel Gaussian sensor noise.
    #[serde(default)]
    pub sensor_noise: f64,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn load(path: &Path) -> Result<Self, SceneError> {
        let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut s = Self::from_json(&text)?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        Ok(s)
    }

    /// `cameras` cameras side by side at the origin, `height` metres up, each covering
    /// `hfov` of azimuth with abutting fields of view, over flat ground.
    pub fn panorama(
        seed: u64,
        cameras: usize,
        width: usize,
        height: usize,
        hfov: f64,
        camera_height: f64,
    ) -> Self {
        let first_yaw = -(cameras as f64 - 1.0) / 2.0 * hfov;
        let cams = (0..cameras)
            .map(|i| {
                let mut c = CameraModel::new(
                    i as u16,
                    [0.0, 0.0, camera_height],
                    first_yaw + i as f64 * hfov,
                    hfov,
                    width,
                    height,
                );
                c.pitch = -0.08;
                c
            })
            .collect();
        Self {
            seed,
            ticks: 1,
            tick_ms: default_tick_ms(),
            cameras: cams,
            terrain: TerrainSpec::Flat {
                height: 0.0,
                center: [0.0, 0.0],
                cell_size: default_cell(),
                half_extent: default_half_extent(),
            },
            background: Background::default(),
            distortion: Vec::new(),
            objects: Vec::new(),
            sensor_noise: 0.0,
            base_dir: None,
        }
    }

    fn validate(&self) -> Result<(), SceneError> {
        if self.cameras.is_empty() {
            return Err(SceneError::Invalid("no cameras".into()));
        }
        let h = self.cameras[0].height;
        for c in &self.cameras {
            c.validate()?;
            if c.height != h {
                return Err(SceneError::Invalid(format!(
                    "camera {} is {} px high, expected {h}",
                    c.id, c.height
                )));
            }
        }
        let mut ids: Vec<u16> = self.cameras.iter().map(|c| c.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.cameras.len() {
            return Err(SceneError::Invalid("duplicate camera ids".into()));
        }
        for d in &self.distortion {
            if !ids.contains(&d.camera) {
                return Err(SceneError::Invalid(format!(
                    "distortion for unknown camera {}",
                    d.camera
                )));
            }
        }
        for o in &self.objects {
            if o.waypoints.is_empty() {
                return Err(SceneError::Invalid(format!(
                    "object {} has no waypoints",
                    o.id
                )));
            }
            if o.waypoints.windows(2).any(|w| w[1].tick < w[0].tick) {
                return Err(SceneError::Invalid(format!(
                    "object {} waypoints are not in time order",
                    o.id
                )));
            }
            if !(o.size[0] > 0.0 && o.size[1] > 0.0) {
                return Err(SceneError::Invalid(format!(
                    "object {} has empty size",
                    o.id
                )));
            }
        }
        Ok(())
    }
}

/// Ground truth for one object at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub id: u32,
    pub category: Category,
    /// Mosaic-coordinate box; the hull of the per-camera boxes.
    pub bbox: BBox,
    /// Ground contact point.
    pub world: Vec3,
    pub visible: bool,
    /// Per-camera boxes in that camera's pixel coordinates.
    pub camera_boxes: Vec<(u16, BBox)>,
}

/// A scenario with its terrain resolved.
#[derive(Debug)]
pub struct Scene {
    pub scenario: Scenario,
    pub terrain: HeightField,
    tiles: Vec<Tile>,
    reference: [f64; 2],
}

impl Scene {
    pub fn new(scenario: Scenario) -> Result<Self, SceneError> {
        scenario.validate()?;
        let terrain = build_terrain(&scenario.terrain, scenario.base_dir.as_deref())?;
        let mut tiles = Vec::with_capacity(scenario.cameras.len());
        let mut x = 0;
        for c in &scenario.cameras {
            tiles.push(Tile {
                camera_id: c.id,
                x_offset: x,
                width: c.width,
            });
            x += c.width;
        }
        let n = scenario.cameras.len() as f64;
        let reference = [
            scenario.cameras.iter().map(|c| c.position[0]).sum::<f64>() / n,
            scenario.cameras.iter().map(|c| c.position[1]).sum::<f64>() / n,
        ];
        Ok(Self {
            scenario,
            terrain,
            tiles,
            reference,
        })
    }

    pub fn cameras(&self) -> &[CameraModel] {
        &self.scenario.cameras
    }

    pub fn tiles(&self) -> &[Tile] {
        &self.tiles
    }

    pub fn mosaic_dims(&self) -> (usize, usize) {
        let w = self.tiles.iter().map(|t| t.width).sum();
        (w, self.scenario.cameras[0].height)
    }

    /// Ground truth for every object present at `tick`, in scenario order.
    pub fn ground_truth(&self, tick: u64) -> Vec<GroundTruth> {
        self.scenario
            .objects
            .iter()
            .filter_map(|o| self.object_truth(o, tick))
            .collect()
    }

    fn object_truth(&self, o: &ObjectSpec, tick: u64) -> Option<GroundTruth> {
        let (e, n, alt) = o.position_at(tick as f64)?;
        let ground = self.terrain.height_at(e, n).unwrap_or(0.0);
        let base = [e, n, ground + alt];
        let corners = billboard(base, o.size, self.reference);
        let mut camera_boxes = Vec::new();
        let mut hull: Option<BBox> = None;
        for (cam, tile) in self.scenario.cameras.iter().zip(&self.tiles) {
            let Some(b) = project_box(cam, &corners) else {
                continue;
            };
            camera_boxes.push((cam.id, b));
            let m = b.translate(tile.x_offset as f64, 0.0);
            hull = Some(hull.map_or(m, |h| h.union_hull(&m)));
        }
        Some(GroundTruth {
            id: o.id,
            category: o.category,
            bbox: hull.unwrap_or_default(),
            world: base,
            visible: hull.is_some(),
            camera_boxes,
        })
    }
}

/// Corners of a vertical quad facing `reference`: bottom-left, bottom-right,
/// top-right, top-left.
fn billboard(base: Vec3, size: [f64; 2], reference: [f64; 2]) -> [Vec3; 4] {
    let (dx, dy) = (base[0] - reference[0], base[1] - reference[1]);
    let len = (dx * dx + dy * dy).sqrt();
    let (fx, fy) = if len > 1e-9 {
        (dx / len, dy / len)
    } else {
        (0.0, 1.0)
    };
    let (rx, ry) = (fy * size[0] / 2.0, -fx * size[0] / 2.0);
    let top = base[2] + size[1];
    [
        [base[0] - rx, base[1] - ry, base[2]],
        [base[0] + rx, base[1] + ry, base[2]],
        [base[0] + rx, base[1] + ry, top],
        [base[0] - rx, base[1] - ry, top],
    ]
}

fn project_box(cam: &CameraModel, corners: &[Vec3; 4]) -> Option<BBox> {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for &p in corners {
        let (px, py, _) = cam.project(p)?;
        x0 = x0.min(px);
        y0 = y0.min(py);
        x1 = x1.max(px);
        y1 = y1.max(py);
    }
    BBox::from_corners(x0, y0, x1, y1)
        .clip(cam.width as f64, cam.height as f64)
        .filter(|b| b.pixel_span(cam.width, cam.height).is_some())
}

fn build_terrain(spec: &TerrainSpec, base: Option<&Path>) -> Result<HeightField, SceneError> {
    let square = |center: [f64; 2], cs: f64, half: f64| {
        let n = (2.0 * half / cs).ceil() as usize + 1;
        ([center[0] - half, center[1] - half], n)
    };
    Ok(match spec {
        TerrainSpec::Flat {
            height,
            center,
            cell_size,
            half_extent,
        } => {
            let (origin, n) = square(*center, *cell_size, *half_extent);
            HeightField::from_fn(origin, *cell_size, n, n, |_, _| *height)?
        }
        TerrainSpec::Slope {
            height,
            gradient,
            center,
            cell_size,
            half_extent,
        } => {
            let (origin, n) = square(*center, *cell_size, *half_extent);
            HeightField::from_fn(origin, *cell_size, n, n, |e, nn| {
                height + gradient[0] * e + gradient[1] * nn
            })?
        }
        TerrainSpec::AsciiGrid { path } => {
            let full = match base {
                Some(b) if path.is_relative() => b.join(path),
                _ => path.clone(),
            };
            HeightField::load(&full)?
        }
    })
}

/// Frames and ground truth for one tick.
#[derive(Debug, Clone)]
pub struct TickOutput {
    pub frames: Vec<Frame>,
    pub truth: Vec<GroundTruth>,
}

impl TickOutput {
    pub fn mosaic(&self) -> Mosaic {
        Mosaic::from_frames(&self.frames).expect("scene frames share a height")
    }
}

/// Renders frames for a [`Scene`]. Background rasters and depth maps are built once.
pub struct SceneRenderer {
    scene: Arc<Scene>,
    backgrounds: Vec<Frame>,
    depth: Vec<Arc<DepthMap>>,
}

impl SceneRenderer {
    pub fn new(scene: Arc<Scene>) -> Self {
        let depth: Vec<Arc<DepthMap>> = scene
            .cameras()
            .iter()
            .map(|c| Arc::new(DepthMap::build(c, &scene.terrain)))
            .collect();
        let backgrounds = scene
            .cameras()
            .iter()
            .zip(&depth)
            .map(|(c, d)| render_background(c, d, &scene.scenario))
            .collect();
        Self {
            scene,
            backgrounds,
            depth,
        }
    }

    pub fn scene(&self) -> &Arc<Scene> {
        &self.scene
    }

    pub fn depth_maps(&self) -> &[Arc<DepthMap>] {
        &self.depth
    }

    pub fn render_tick(&self, tick: u64) -> TickOutput {
        let sc = &self.scene.scenario;
        let truth = self.scene.ground_truth(tick);
        let ts = tick * sc.tick_ms;
        // far objects first so nearer ones paint over them
        let mut order: Vec<&GroundTruth> = truth.iter().filter(|g| g.visible).collect();
        let dist = |g: &GroundTruth| {
            let (dx, dy) = (
                g.world[0] - self.scene.reference[0],
                g.world[1] - self.scene.reference[1],
            );
            dx * dx + dy * dy
        };
        order.sort_by(|a, b| dist(b).total_cmp(&dist(a)));

        let frames = sc
            .cameras
            .iter()
            .zip(&self.backgrounds)
            .map(|(cam, bg)| {
                let mut f = bg.clone().with_index(tick, ts);
                for g in &order {
                    let color = sc
                        .objects
                        .iter()
                        .find(|o| o.id == g.id)
                        .and_then(|o| o.color)
                        .unwrap_or_else(|| g.category.color());
                    for (id, b) in &g.camera_boxes {
                        if *id == cam.id {
                            f.fill_box(b, color);
                        }
                    }
                }
                if sc.sensor_noise > 0.0 {
                    add_noise(&mut f, sc.sensor_noise, sc.seed, tick, cam.id);
                }
                if let Some(d) = sc.distortion.iter().find(|d| d.camera == cam.id) {
                    let (g, o) = d.at(tick);
                    distort(&mut f, g, o);
                }
                f
            })
            .collect();
        TickOutput { frames, truth }
    }
}

fn add_noise(f: &mut Frame, sigma: f64, seed: u64, tick: u64, cam: u16) {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, tick, cam as u64, 0x6e6f));
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    for p in f.pixels_mut() {
        *p = (*p as f64 + normal.sample(&mut rng))
            .round()
            .clamp(0.0, 255.0) as u8;
    }
}

/// Applies a per-channel affine intensity change with clamping.
pub fn distort(f: &mut Frame, gain: [f64; 3], offset: [f64; 3]) {
    let lut: [[u8; 256]; 3] = std::array::from_fn(|c| {
        std::array::from_fn(|v| (gain[c] * v as f64 + offset[c]).round().clamp(0.0, 255.0) as u8)
    });
    for px in f.pixels_mut().chunks_exact_mut(3) {
        for c in 0..3 {
            px[c] = lut[c][px[c] as usize];
        }
    }
}

fn render_background(cam: &CameraModel, depth: &DepthMap, sc: &Scenario) -> Frame {
    let bg = &sc.background;
    let mut f = Frame::filled(cam.id, cam.width, cam.height, [0, 0, 0]);
    for y in 0..cam.height {
        for x in 0..cam.width {
            let ray = cam.pixel_to_ray(x, y);
            let (base, u, v, salt) = match depth.get(x, y) {
                Some(d) => {
                    let p = ray.at(d);
                    (bg.ground, p[0] / bg.ground_scale, p[1] / bg.ground_scale, 1)
                }
                None => {
                    let az = ray.dir[0].atan2(ray.dir[1]);
                    let el = ray.dir[2].clamp(-1.0, 1.0).asin();
                    (bg.sky, az / bg.sky_scale, el / bg.sky_scale, 2)
                }
            };
            let mut rgb = [0u8; 3];
            for c in 0..3 {
                let n = fbm(sc.seed, salt * 4 + c as u64, u, v);
                let val = base[c] as f64 * (1.0 + bg.contrast * (2.0 * n - 1.0));
                rgb[c] = val.round().clamp(0.0, 255.0) as u8;
            }
            f.set(x, y, rgb);
        }
    }
    f
}

fn mix(a: u64, b: u64, c: u64, d: u64) -> u64 {
    let mut h = a ^ 0x9e37_79b9_7f4a_7c15;
    for v in [b, c, d] {
        h = splitmix(h ^ v);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn lattice(seed: u64, salt: u64, i: i64, j: i64) -> f64 {
    (mix(seed, salt, i as u64, j as u64) >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(seed: u64, salt: u64, u: f64, v: f64) -> f64 {
    let (i, j) = (u.floor(), v.floor());
    let (s, t) = (u - i, v - j);
    let (s, t) = (s * s * (3.0 - 2.0 * s), t * t * (3.0 - 2.0 * t));
    let (i, j) = (i as i64, j as i64);
    let a = lattice(seed, salt, i, j);
    let b = lattice(seed, salt, i + 1, j);
    let c = lattice(seed, salt, i, j + 1);
    let d = lattice(seed, salt, i + 1, j + 1);
    a + (b - a) * s + (c - a) * t + (a - b - c + d) * s * t
}

/// Two octaves of value noise in `[0, 1]`.
fn fbm(seed: u64, salt: u64, u: f64, v: f64) -> f64 {
    (2.0 * value_noise(seed, salt, u, v) + value_noise(seed, salt + 100, 2.0 * u, 2.0 * v)) / 3.0
}

/// `n` objects of mixed categories moving together along a circle of radius `range`
/// around the origin, spaced `spacing` radians apart and sweeping `sweep` radians over
/// `ticks` ticks.
pub fn circling_objects(
    n: usize,
    range: f64,
    start: f64,
    spacing: f64,
    sweep: f64,
    ticks: u64,
) -> Vec<ObjectSpec> {
    let kinds = [
        (Category::Vehicle, [6.0, 3.0]),
        (Category::Aircraft, [14.0, 5.0]),
        (Category::Person, [2.0, 3.0]),
    ];
    (0..n)
        .map(|k| {
            let (category, size) = kinds[k % kinds.len()];
            let steps = 30.max((ticks / 10) as usize);
            let waypoints = (0..=steps)
                .map(|s| {
                    let frac = s as f64 / steps as f64;
                    let az = start + k as f64 * spacing + sweep * frac;
                    Waypoint {
                        tick: frac * ticks as f64,
                        east: range * az.sin(),
                        north: range * az.cos(),
                        altitude: 0.0,
                    }
                })
                .collect();
            ObjectSpec {
                id: k as u32 + 1,
                category,
                size,
                waypoints,
                color: None,
            }
        })
        .collect()
}

/// Draws a seeded random distortion with gains in `gain` and offsets in `offset`.
pub fn random_distortion(
    rng: &mut impl Rng,
    camera: u16,
    gain: (f64, f64),
    offset: (f64, f64),
) -> Distortion {
    Distortion {
        camera,
        gain: std::array::from_fn(|_| rng.random_range(gain.0..=gain.1)),
        offset: std::array::from_fn(|_| rng.random_range(offset.0..=offset.1)),
        gain_drift: [0.0; 3],
        offset_drift: [0.0; 3],
    }
}
