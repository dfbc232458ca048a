//! HTTP service for interactive camera calibration.
//!
//! Camera parameters travel as JSON objects using the same keys as the `key=value`
//! parameter files (`easting`, `northing`, `height`, `yaw`, ..., `width_px`).

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Map, Value};

use super::render::{blend, png_rgb, png_rgba, render_wireframe};
use super::CliError;
use crate::geom::Frame;
use crate::world3d::{CameraModel, DepthMap, GeoError, HeightField};

/// Shared service state. Parameter updates swap the whole camera list, so readers always
/// see a consistent snapshot.
pub struct CalibState {
    cameras: RwLock<Arc<Vec<CameraModel>>>,
    terrain: Arc<HeightField>,
    frames: Vec<Frame>,
    save_dir: PathBuf,
}

impl CalibState {
    /// `frames[i]` is the current image of `cameras[i]`.
    pub fn new(
        cameras: Vec<CameraModel>,
        terrain: Arc<HeightField>,
        frames: Vec<Frame>,
        save_dir: impl Into<PathBuf>,
    ) -> Result<Self, CliError> {
        if frames.len() != cameras.len() {
            return Err(CliError::Config(format!(
                "{} cameras but {} frames",
                cameras.len(),
                frames.len()
            )));
        }
        for (c, f) in cameras.iter().zip(&frames) {
            c.validate()?;
            if f.dims() != (c.width, c.height) {
                return Err(CliError::Config(format!(
                    "camera {} is {}x{} but its frame is {}x{}",
                    c.id,
                    c.width,
                    c.height,
                    f.width(),
                    f.height()
                )));
            }
        }
        Ok(Self {
            cameras: RwLock::new(Arc::new(cameras)),
            terrain,
            frames,
            save_dir: save_dir.into(),
        })
    }

    pub fn cameras(&self) -> Arc<Vec<CameraModel>> {
        self.cameras.read().expect("camera lock").clone()
    }

    fn find(&self, id: u16) -> Option<(CameraModel, &Frame)> {
        let cams = self.cameras();
        let i = cams.iter().position(|c| c.id == id)?;
        Some((cams[i].clone(), &self.frames[i]))
    }

    /// Applies a partial parameter update. Errors are `(field, message)` pairs.
    pub fn update(&self, id: u16, patch: &Map<String, Value>) -> Result<CameraModel, UpdateError> {
        let mut guard = self.cameras.write().expect("camera lock");
        let i = guard
            .iter()
            .position(|c| c.id == id)
            .ok_or(UpdateError::NotFound)?;
        let mut cam = guard[i].clone();
        let mut errors = Vec::new();
        for (k, v) in patch {
            let slot = match k.as_str() {
                "easting" => &mut cam.position[0],
                "northing" => &mut cam.position[1],
                "height" => &mut cam.position[2],
                "yaw" => &mut cam.yaw,
                "pitch" => &mut cam.pitch,
                "roll" => &mut cam.roll,
                "hfov" => &mut cam.hfov,
                "aspect" => &mut cam.aspect,
                "id" | "width_px" | "height_px" => {
                    errors.push((k.clone(), "read-only".to_string()));
                    continue;
                }
                _ => {
                    errors.push((k.clone(), "unknown parameter".to_string()));
                    continue;
                }
            };
            match v.as_f64() {
                Some(x) => *slot = x,
                None => errors.push((k.clone(), "expected a number".to_string())),
            }
        }
        if errors.is_empty() {
            if let Err(GeoError::InvalidCamera(bad)) = cam.validate() {
                errors = bad;
            }
        }
        if !errors.is_empty() {
            return Err(UpdateError::Invalid(errors));
        }
        let mut next = guard.as_ref().clone();
        next[i] = cam.clone();
        *guard = Arc::new(next);
        Ok(cam)
    }

    /// Writes `camera_<id>.txt` for every camera and returns the paths.
    pub fn save(&self) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(&self.save_dir).map_err(CliError::io(&self.save_dir))?;
        let mut out = Vec::new();
        for c in self.cameras().iter() {
            let p = self.save_dir.join(format!("camera_{}.txt", c.id));
            c.save(&p)?;
            out.push(p);
        }
        Ok(out)
    }

    pub fn wireframe(&self, id: u16) -> Option<image::RgbaImage> {
        let (cam, _) = self.find(id)?;
        let depth = DepthMap::build(&cam, &self.terrain);
        Some(render_wireframe(&cam, &self.terrain, &depth))
    }
}

#[derive(Debug)]
pub enum UpdateError {
    NotFound,
    Invalid(Vec<(String, String)>),
}

pub fn camera_json(c: &CameraModel) -> Value {
    json!({
        "id": c.id,
        "easting": c.position[0],
        "northing": c.position[1],
        "height": c.position[2],
        "yaw": c.yaw,
        "pitch": c.pitch,
        "roll": c.roll,
        "hfov": c.hfov,
        "aspect": c.aspect,
        "width_px": c.width,
        "height_px": c.height,
    })
}

pub fn calib_router(state: Arc<CalibState>) -> Router {
    Router::new()
        .route("/cameras", get(list_cameras))
        .route("/cameras/{id}", get(get_camera).put(put_camera))
        .route("/frame/{id}", get(get_frame))
        .route("/wireframe/{id}", get(get_wireframe))
        .route("/blend/{id}", get(get_blend))
        .route("/save", post(save))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(state: Arc<CalibState>, addr: SocketAddr) -> Result<(), CliError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| CliError::Config(format!("bind {addr}: {e}")))?;
    tracing::info!(addr = %listener.local_addr().unwrap_or(addr), "calibration service listening");
    axum::serve(listener, calib_router(state))
        .await
        .map_err(|e| CliError::Pipeline(e.into()))
}

fn not_found(id: u16) -> Response {
    (
        StatusCode::NOT_FOUND,
        Json(json!({ "error": format!("no camera {id}") })),
    )
        .into_response()
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

fn internal(e: impl std::fmt::Display) -> Response {
    (
        StatusCode::INTERNAL_SERVER_ERROR,
        Json(json!({ "error": e.to_string() })),
    )
        .into_response()
}

async fn list_cameras(State(s): State<Arc<CalibState>>) -> Json<Value> {
    Json(Value::Array(s.cameras().iter().map(camera_json).collect()))
}

async fn get_camera(State(s): State<Arc<CalibState>>, Path(id): Path<u16>) -> Response {
    match s.find(id) {
        Some((c, _)) => Json(camera_json(&c)).into_response(),
        None => not_found(id),
    }
}

async fn put_camera(
    State(s): State<Arc<CalibState>>,
    Path(id): Path<u16>,
    Json(body): Json<Value>,
) -> Response {
    let Value::Object(patch) = body else {
        return (
            StatusCode::BAD_REQUEST,
            Json(json!({ "errors": [{ "field": "", "message": "expected a JSON object" }] })),
        )
            .into_response();
    };
    match s.update(id, &patch) {
        Ok(c) => Json(camera_json(&c)).into_response(),
        Err(UpdateError::NotFound) => not_found(id),
        Err(UpdateError::Invalid(errors)) => {
            let errors: Vec<Value> = errors
                .into_iter()
                .map(|(field, message)| json!({ "field": field, "message": message }))
                .collect();
            (StatusCode::BAD_REQUEST, Json(json!({ "errors": errors }))).into_response()
        }
    }
}

async fn get_frame(State(s): State<Arc<CalibState>>, Path(id): Path<u16>) -> Response {
    match s.find(id) {
        Some((_, f)) => png(png_rgb(f)),
        None => not_found(id),
    }
}

async fn get_wireframe(State(s): State<Arc<CalibState>>, Path(id): Path<u16>) -> Response {
    let r = tokio::task::spawn_blocking(move || s.wireframe(id).map(|w| png_rgba(&w))).await;
    match r {
        Ok(Some(bytes)) => png(bytes),
        Ok(None) => not_found(id),
        Err(e) => internal(e),
    }
}

#[derive(Deserialize)]
struct BlendQuery {
    alpha: Option<f64>,
}

async fn get_blend(
    State(s): State<Arc<CalibState>>,
    Path(id): Path<u16>,
    Query(q): Query<BlendQuery>,
) -> Response {
    let alpha = q.alpha.unwrap_or(0.5);
    if !(0.0..=1.0).contains(&alpha) {
        return (
            StatusCode::BAD_REQUEST,
            Json(json!({ "errors": [{ "field": "alpha", "message": "must lie in [0, 1]" }] })),
        )
            .into_response();
    }
    let r = tokio::task::spawn_blocking(move || {
        let (_, frame) = s.find(id)?;
        let wire = s.wireframe(id)?;
        Some(png_rgb(&blend(frame, &wire, alpha)))
    })
    .await;
    match r {
        Ok(Some(bytes)) => png(bytes),
        Ok(None) => not_found(id),
        Err(e) => internal(e),
    }
}

async fn save(State(s): State<Arc<CalibState>>) -> Response {
    match tokio::task::spawn_blocking(move || s.save()).await {
        Ok(Ok(paths)) => Json(json!({
            "saved": paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>()
        }))
        .into_response(),
        Ok(Err(e)) => internal(e),
        Err(e) => internal(e),
    }
}
