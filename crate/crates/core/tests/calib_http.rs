use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use towerkit::cli::{blend, calib_router, render_wireframe, CalibState};
use towerkit::geom::Frame;
use towerkit::world3d::{CameraModel, DepthMap, HeightField};

const W: usize = 96;
const H: usize = 64;

fn terrain() -> HeightField {
    HeightField::from_fn([-300.0, -300.0], 4.0, 151, 151, |e, n| {
        3.0 * (e / 40.0).sin() + 2.0 * (n / 30.0).cos()
    })
    .unwrap()
}

fn camera(id: u16, yaw: f64) -> CameraModel {
    let mut c = CameraModel::new(id, [0.0, 0.0, 30.0], yaw, 1.2, W, H);
    c.pitch = -0.25;
    c
}

fn state(save_dir: &std::path::Path) -> Arc<CalibState> {
    let cams = vec![camera(0, 0.0), camera(1, 1.2)];
    let frames = cams
        .iter()
        .map(|c| {
            let mut f = Frame::filled(c.id, W, H, [40, 80, 120]);
            f.set(5, 7, [200, 10, 10]);
            f
        })
        .collect();
    Arc::new(CalibState::new(cams, Arc::new(terrain()), frames, save_dir).unwrap())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let res = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

fn json_of(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

fn decode_rgb(bytes: &[u8]) -> image::RgbImage {
    image::load_from_memory(bytes).unwrap().to_rgb8()
}

fn camera_from_json(v: &Value) -> CameraModel {
    let f = |k: &str| v[k].as_f64().unwrap();
    let mut c = CameraModel::new(
        v["id"].as_u64().unwrap() as u16,
        [f("easting"), f("northing"), f("height")],
        f("yaw"),
        f("hfov"),
        v["width_px"].as_u64().unwrap() as usize,
        v["height_px"].as_u64().unwrap() as usize,
    );
    c.pitch = f("pitch");
    c.roll = f("roll");
    c.aspect = f("aspect");
    c
}

#[tokio::test]
async fn lists_and_fetches_cameras() {
    let dir = tempfile::tempdir().unwrap();
    let app = calib_router(state(dir.path()));
    let (s, b) = call(&app, "GET", "/cameras", None).await;
    assert_eq!(s, StatusCode::OK);
    let list = json_of(&b);
    assert_eq!(list.as_array().unwrap().len(), 2);
    assert_eq!(list[1]["yaw"], 1.2);
    assert_eq!(list[1]["width_px"], W);

    let (s, b) = call(&app, "GET", "/cameras/1", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(json_of(&b), list[1]);

    let (s, b) = call(&app, "GET", "/cameras/9", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert!(json_of(&b)["error"].is_string());
}

#[tokio::test]
async fn frame_is_served_losslessly() {
    let dir = tempfile::tempdir().unwrap();
    let app = calib_router(state(dir.path()));
    let (s, b) = call(&app, "GET", "/frame/0", None).await;
    assert_eq!(s, StatusCode::OK);
    let img = decode_rgb(&b);
    assert_eq!(img.dimensions(), (W as u32, H as u32));
    assert_eq!(img.get_pixel(5, 7).0, [200, 10, 10]);
    assert_eq!(img.get_pixel(0, 0).0, [40, 80, 120]);
}

#[tokio::test]
async fn blend_endpoints_are_frame_and_overlay() {
    let dir = tempfile::tempdir().unwrap();
    let st = state(dir.path());
    let app = calib_router(st.clone());
    let (_, frame) = call(&app, "GET", "/frame/0", None).await;
    let (s, zero) = call(&app, "GET", "/blend/0?alpha=0", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(decode_rgb(&zero), decode_rgb(&frame));

    let (s, one) = call(&app, "GET", "/blend/0?alpha=1", None).await;
    assert_eq!(s, StatusCode::OK);
    let wire = st.wireframe(0).unwrap();
    let one = decode_rgb(&one);
    let mut lines = 0;
    for (x, y, p) in wire.enumerate_pixels() {
        // fully opaque overlay pixels replace the frame; transparent ones blend to black
        let want = if p.0[3] == 255 {
            [p.0[0], p.0[1], p.0[2]]
        } else {
            [0, 0, 0]
        };
        assert_eq!(one.get_pixel(x, y).0, want, "({x}, {y})");
        lines += (p.0[3] == 255) as usize;
    }
    assert!(lines > 0);

    let (s, half) = call(&app, "GET", "/blend/0", None).await;
    assert_eq!(s, StatusCode::OK);
    let local = blend(&Frame::filled(0, W, H, [40, 80, 120]), &wire, 0.5);
    assert_eq!(decode_rgb(&half).get_pixel(50, 50).0, local.get(50, 50));

    for bad in ["-0.1", "1.5"] {
        let (s, b) = call(&app, "GET", &format!("/blend/0?alpha={bad}"), None).await;
        assert_eq!(s, StatusCode::BAD_REQUEST);
        assert_eq!(json_of(&b)["errors"][0]["field"], "alpha");
    }
}

#[tokio::test]
async fn invalid_updates_list_every_bad_field() {
    let dir = tempfile::tempdir().unwrap();
    let app = calib_router(state(dir.path()));
    let (s, b) = call(
        &app,
        "PUT",
        "/cameras/0",
        Some(json!({ "width_px": 10, "zoom": 2, "pitch": "down" })),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let mut fields: Vec<String> = json_of(&b)["errors"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["field"].as_str().unwrap().to_string())
        .collect();
    fields.sort();
    assert_eq!(fields, ["pitch", "width_px", "zoom"]);

    let (s, b) = call(&app, "PUT", "/cameras/0", Some(json!({ "hfov": 4.0 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(json_of(&b)["errors"][0]["field"], "hfov");

    // rejected updates leave the camera untouched
    let (_, b) = call(&app, "GET", "/cameras/0", None).await;
    assert_eq!(json_of(&b)["hfov"], 1.2);

    let (s, _) = call(&app, "PUT", "/cameras/7", Some(json!({ "yaw": 0.1 }))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn yaw_update_moves_the_view_and_the_wireframe() {
    let dir = tempfile::tempdir().unwrap();
    let app = calib_router(state(dir.path()));
    let (_, before) = call(&app, "GET", "/cameras/0", None).await;
    let old = camera_from_json(&json_of(&before));
    let delta = 0.1;
    let (s, after) = call(
        &app,
        "PUT",
        "/cameras/0",
        Some(json!({ "yaw": delta, "pitch": 0.0 })),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let new = camera_from_json(&json_of(&after));
    assert_eq!(new.yaw, delta);
    assert_eq!(new.position, old.position);

    // a point on the optical horizon seen at column x moves to cx + f tan(atan((x - cx) / f) - delta)
    let mut level = old.clone();
    level.pitch = 0.0;
    let (fx, _) = level.focal();
    let cx = W as f64 / 2.0;
    for x in [10.0, 30.0, 48.0, 70.0, 90.0] {
        let p = level.image_ray(x, H as f64 / 2.0).at(100.0);
        let (px, py, _) = new.project(p).unwrap();
        let want = cx + fx * (((x - cx) / fx).atan() - delta).tan();
        assert!((px - want).abs() < 1e-9, "{x}: {px} vs {want}");
        assert!((py - H as f64 / 2.0).abs() < 1e-9);
    }

    let (s, png) = call(&app, "GET", "/wireframe/0", None).await;
    assert_eq!(s, StatusCode::OK);
    let served = image::load_from_memory(&png).unwrap().to_rgba8();
    let t = terrain();
    assert_eq!(
        served,
        render_wireframe(&new, &t, &DepthMap::build(&new, &t))
    );
    assert_ne!(
        served,
        render_wireframe(&old, &t, &DepthMap::build(&old, &t))
    );
}

#[tokio::test]
async fn saved_parameters_reload_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let app = calib_router(state(dir.path()));
    let patch = json!({ "yaw": 0.123456789012345, "height": 31.7, "roll": -0.01 });
    let (s, b) = call(&app, "PUT", "/cameras/1", Some(patch)).await;
    assert_eq!(s, StatusCode::OK);
    let served = camera_from_json(&json_of(&b));

    let (s, b) = call(&app, "POST", "/save", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(json_of(&b)["saved"].as_array().unwrap().len(), 2);
    let loaded = CameraModel::load(&dir.path().join("camera_1.txt")).unwrap();
    assert_eq!(loaded, served);
    assert_eq!(loaded.yaw.to_bits(), 0.123456789012345f64.to_bits());
    assert_eq!(
        CameraModel::load(&dir.path().join("camera_0.txt")).unwrap(),
        camera(0, 0.0)
    );
}
