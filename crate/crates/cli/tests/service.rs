mod common;

use std::time::Instant;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use editlight::envmap::png;
use editlight::scenegeom::{detect_corners, render_layout};
use editlight::{CuboidGeom, Raster};
use editlight_cli::service::{router, EstimateView, PreviewSettings, Session, REVISION_HEADER};
use editlight_cli::Bundle;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use common::{bundle_for, disk};

/// 96 x 48 texture: one 15 degree step is exactly 4 columns.
fn app() -> Router {
    router(Session::new(
        bundle_for(&disk(20.0, 35.0, 10.0), 48),
        PreviewSettings::default(),
        None,
    ))
}

struct Reply {
    status: StatusCode,
    revision: Option<u64>,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap()
    }

    fn estimate(&self) -> EstimateView {
        serde_json::from_slice(&self.body).unwrap()
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>, revision: Option<u64>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(r) = revision {
        req = req.header(REVISION_HEADER, r.to_string());
    }
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let revision = resp
        .headers()
        .get(REVISION_HEADER)
        .map(|v| v.to_str().unwrap().parse().unwrap());
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply {
        status,
        revision,
        body,
    }
}

async fn patch_light(app: &Router, field: &str, value: Value, relative: bool) -> Reply {
    call(
        app,
        "PATCH",
        "/light",
        Some(json!({ "field": field, "value": value, "relative": relative })),
        None,
    )
    .await
}

fn direction(view: &EstimateView) -> [f64; 3] {
    view.light.direction
}

#[tokio::test]
async fn estimate_reports_revision_zero() {
    let app = app();
    let r = call(&app, "GET", "/estimate", None, None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.revision, Some(0));
    let v = r.estimate();
    assert_eq!(v.revision, 0);
    assert_eq!(v.cuboid.ceiling_height_m, 3.0);
}

#[tokio::test]
async fn relative_azimuth_edits_add_up() {
    let twice = app();
    patch_light(&twice, "azimuth_deg", json!(30.0), true).await;
    let a = patch_light(&twice, "azimuth_deg", json!(30.0), true).await;
    let once = app();
    let b = patch_light(&once, "azimuth_deg", json!(60.0), true).await;
    let (da, db) = (direction(&a.estimate()), direction(&b.estimate()));
    for k in 0..3 {
        assert!((da[k] - db[k]).abs() < 1e-12);
    }
    assert_eq!(a.revision, Some(2));
    assert_eq!(b.revision, Some(1));
}

#[tokio::test]
async fn absolute_edits_set_fields() {
    let app = app();
    let r = patch_light(&app, "elevation_deg", json!(90.0), false).await;
    assert_eq!(r.status, StatusCode::OK);
    assert!((direction(&r.estimate())[1] - 1.0).abs() < 1e-12);
    let r = patch_light(&app, "color_rgb", json!([1.0, 2.0, 3.0]), false).await;
    assert_eq!(r.estimate().light.color_rgb, [1.0, 2.0, 3.0]);
    let r = patch_light(&app, "distance_m", json!(10.0), false).await;
    assert_eq!(r.estimate().light.distance_m, 10.0);
}

#[tokio::test]
async fn out_of_range_edit_is_rejected_with_field() {
    let app = app();
    let r = patch_light(&app, "elevation_deg", json!(95.0), false).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.json()["field"], "elevation_deg");
    let r = patch_light(&app, "radius_m", json!(1000.0), false).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.json()["field"], "radius_m");
    let r = patch_light(&app, "ambient_rgb", json!(0.5), false).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let r = call(&app, "GET", "/estimate", None, None).await;
    assert_eq!(r.revision, Some(0));
}

#[tokio::test]
async fn stale_precondition_conflicts() {
    let app = app();
    let body = json!({ "field": "azimuth_deg", "value": 10.0 });
    let ok = call(&app, "PATCH", "/light", Some(body.clone()), Some(0)).await;
    assert_eq!(ok.status, StatusCode::OK);
    let stale = call(&app, "PATCH", "/light", Some(body), Some(0)).await;
    assert_eq!(stale.status, StatusCode::CONFLICT);
    let future = call(&app, "POST", "/render", None, Some(7)).await;
    assert_eq!(future.status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn read_your_writes() {
    let app = app();
    let before = call(&app, "GET", "/estimate", None, None).await.estimate();
    patch_light(&app, "radius_m", json!(2.0), false).await;
    let after = call(&app, "GET", "/estimate", None, None).await;
    assert_eq!(after.revision, Some(before.revision + 1));
    assert_eq!(after.estimate().light.radius_m, 2.0);
}

fn decode(bytes: &[u8]) -> Raster {
    png::decode(bytes).unwrap()
}

fn roll(r: &Raster, k: i64) -> Raster {
    let w = r.width() as i64;
    Raster::from_fn(r.width(), r.height(), |u, v| r.get((u as i64 - k).rem_euclid(w) as usize, v))
}

#[tokio::test]
async fn mask_rolls_with_azimuth() {
    let app = app();
    let mut prev = decode(&call(&app, "GET", "/mask", None, None).await.body);
    assert!(prev.pixels().iter().any(|p| p[0] > 0.5));
    for step in 1..=24 {
        let r = patch_light(&app, "azimuth_deg", json!(15.0), true).await;
        assert_eq!(r.status, StatusCode::OK);
        let reply = call(&app, "GET", "/mask", None, None).await;
        assert_eq!(reply.revision, Some(step));
        let mask = decode(&reply.body);
        assert_eq!(mask, roll(&prev, 4), "step {step}");
        prev = mask;
    }
}

#[tokio::test]
async fn texture_and_layout_are_pngs() {
    let app = app();
    for uri in ["/texture", "/layout", "/mask"] {
        let r = call(&app, "GET", uri, None, None).await;
        assert_eq!(r.status, StatusCode::OK);
        let img = decode(&r.body);
        assert_eq!((img.width(), img.height()), (96, 48), "{uri}");
    }
}

#[tokio::test]
async fn render_returns_png_at_current_revision() {
    let app = app();
    let t = Instant::now();
    let r = call(&app, "POST", "/render", Some(json!({ "width": 64, "spp": 4 })), None).await;
    assert_eq!(r.status, StatusCode::OK, "{}", String::from_utf8_lossy(&r.body));
    assert_eq!(r.revision, Some(0));
    assert_eq!(decode(&r.body).width(), 64);
    let cached = call(&app, "POST", "/render", Some(json!({ "width": 64, "spp": 4 })), None).await;
    assert_eq!(cached.body, r.body);
    println!("preview in {:.2?}", t.elapsed());

    patch_light(&app, "color_rgb", json!([0.0, 0.0, 0.0]), false).await;
    let dark = call(&app, "POST", "/render", Some(json!({ "width": 64, "spp": 4 })), Some(1)).await;
    assert_eq!(dark.revision, Some(1));
    let mean = |b: &[u8]| decode(b).mean_luminance();
    assert!(mean(&dark.body) < mean(&r.body));

    let bad = call(&app, "POST", "/render", Some(json!({ "spp": 0 })), None).await;
    assert_eq!(bad.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn layout_edit_rebuilds_cuboid() {
    let app = app();
    let room = CuboidGeom::from_dimensions(Default::default(), 4.0, 5.0, 0.3, 2.8).unwrap();
    let corners = detect_corners(&render_layout(&room, 96, 48).unwrap()).unwrap();
    let r = call(&app, "PUT", "/layout", Some(json!({ "corners": corners })), Some(0)).await;
    assert_eq!(r.status, StatusCode::OK, "{}", String::from_utf8_lossy(&r.body));
    assert_eq!(r.revision, Some(1));
    let v = r.estimate();
    assert!((v.cuboid.ceiling_height_m - 2.8).abs() < 0.3);
    let layout = decode(&call(&app, "GET", "/layout", None, None).await.body);
    let expected = render_layout(&CuboidGeom::try_from(v.cuboid).unwrap(), 96, 48).unwrap();
    assert_eq!(layout, expected.to_raster());

    let mut bad = corners.clone();
    bad.floor[0][1] = 5.0;
    let r = call(&app, "PUT", "/layout", Some(json!({ "corners": bad })), None).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn save_writes_a_readable_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("edited");
    let app = app();
    patch_light(&app, "azimuth_deg", json!(-45.0), false).await;
    let r = call(&app, "POST", "/save", Some(json!({ "dir": out })), None).await;
    assert_eq!(r.status, StatusCode::OK, "{}", String::from_utf8_lossy(&r.body));
    assert_eq!(r.revision, Some(1));
    let saved = Bundle::read(&out).unwrap();
    assert!((saved.estimate.light.azimuth().to_degrees() + 45.0).abs() < 1e-9);
    let none = call(&app, "POST", "/save", None, None).await;
    assert_eq!(none.status, StatusCode::UNPROCESSABLE_ENTITY);
}
