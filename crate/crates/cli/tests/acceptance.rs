//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the run exits non-zero if any criterion fails.

mod common;

use std::f64::consts::PI;
use std::fs;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use editlight::envmap::png;
use editlight::lightfit::{fit_panorama, strongest_light_ratio, FitConfig};
use editlight::metrics::{psnr_from_mse, rgb_angular, rmse, si_rmse, MetricReport};
use editlight::render::{
    render_combined, render_ibl, render_parametric, render_pass, Pass, RenderSettings, Scene, SceneKind,
};
use editlight::scenegeom::{backproject, detect_corners, render_layout, sphere_to_cuboid_texture};
use editlight::synthetic::DiskLight;
use editlight::{CuboidGeom, DVec2, DVec3, Direction, EquirectImage, ParametricLight, Raster};
use editlight_cli::commands::{cmd_composite, cmd_fit, cmd_render, CompositeArgs, FitArgs, RenderArgs, RenderMode};
use editlight_cli::service::{router, PreviewSettings, Session, REVISION_HEADER};
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use tower::ServiceExt;

use common::{bundle_for, disk, write_pano};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn roundtrip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = FitConfig::default();
    let eval = RenderSettings::square(64, 64, 99);
    let scene = Scene::grid3x3();
    let mut ok = 0;
    let mut misses = Vec::new();
    for i in 0..100 {
        let truth = DiskLight::random(&mut rng);
        let pano = truth.render(128).unwrap();
        let fit = fit_panorama(&pano, None, &cfg).unwrap();
        let dir = fit.light.direction().angle_to(&truth.direction).to_degrees();
        let size = fit.light.angular_radius() / truth.angular_radius - 1.0;
        let a = render_parametric(&scene, &fit.light, &eval).unwrap();
        let b = render_ibl(&scene, &pano, &eval).unwrap();
        let si = MetricReport::compare_normalized(a.raster(), b.raster()).unwrap().si_rmse;
        if dir < 5.0 && size.abs() < 0.2 && si < 0.05 {
            ok += 1;
        } else {
            misses.push(format!("#{i} dir {dir:.2} size {size:+.3} si {si:.4}"));
        }
    }
    outcome(ok >= 95, format!("{ok}/100 recovered (need 95); misses: [{}]", misses.join(", ")))
}

/// Disk and ambient scaled so the disk carries `rho` of the probe-scene
/// energy, measured on separate renders of each component.
fn split_panorama(rho: f64, settings: &RenderSettings) -> EquirectImage {
    let shape = DiskLight {
        direction: Direction::from_angles(40f64.to_radians(), 55f64.to_radians()),
        angular_radius: 8f64.to_radians(),
        radiance: [1.0; 3],
        ambient: [0.0; 3],
    };
    let scene = Scene::grid3x3();
    let lum = |img: &EquirectImage| render_ibl(&scene, img, settings).unwrap().raster().mean_luminance();
    let (radiance, ambient) = if rho >= 1.0 {
        (50.0, 0.0)
    } else {
        let amb = DiskLight { radiance: [0.0; 3], ambient: [0.2; 3], ..shape }.render(64).unwrap();
        (rho / (1.0 - rho) * lum(&amb) / lum(&shape.render(64).unwrap()), 0.2)
    };
    DiskLight { radiance: [radiance; 3], ambient: [ambient; 3], ..shape }.render(64).unwrap()
}

fn energy() -> Outcome {
    let oracle = RenderSettings::square(48, 256, 11);
    let settings = RenderSettings::square(48, 64, 2);
    let mut worst: f64 = 0.0;
    let mut got = Vec::new();
    for rho in [0.25, 0.5, 0.8, 1.0] {
        let r = strongest_light_ratio(&split_panorama(rho, &oracle), &settings).unwrap();
        worst = worst.max((r - rho).abs());
        got.push(format!("{rho}->{r:.3}"));
    }
    outcome(worst < 0.05, format!("max |ratio - rho| {worst:.4} (tol 0.05); {}", got.join(" ")))
}

fn mean_and_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn max_abs_diff(a: &Raster, b: &Raster) -> f64 {
    a.pixels()
        .iter()
        .zip(b.pixels())
        .flat_map(|(p, q)| (0..3).map(move |c| (p[c] - q[c]).abs() as f64))
        .fold(0.0, f64::max)
}

fn renderer() -> Outcome {
    let env = EquirectImage::filled(32, [1.0; 3], true).unwrap();
    let furnace = render_ibl(&Scene::plane_only(1.0), &env, &RenderSettings::square(32, 256, 7))
        .unwrap()
        .raster()
        .mean_luminance();
    let furnace_ok = (furnace - 1.0).abs() < 0.01;

    // Linearity: one render of the tripled emitters against 3x the mean of
    // independent base renders.
    let scene = Scene::grid3x3();
    let base = DiskLight {
        direction: Direction::from_angles((-30f64).to_radians(), 35f64.to_radians()),
        angular_radius: 6f64.to_radians(),
        radiance: [20.0; 3],
        ambient: [0.2; 3],
    };
    let tripled = DiskLight { radiance: [60.0; 3], ambient: [0.6; 3], ..base };
    let (pano, pano3) = (base.render(64).unwrap(), tripled.render(64).unwrap());
    let runs: Vec<f64> = (0..8)
        .map(|seed| render_ibl(&scene, &pano, &RenderSettings::square(24, 16, seed)).unwrap().raster().mean_luminance())
        .collect();
    let (m, sem) = mean_and_sem(&runs);
    let single = sem * (runs.len() as f64).sqrt();
    let bound = 3.0 * (9.0 * single * single + 9.0 * sem * sem).sqrt();
    let got = render_ibl(&scene, &pano3, &RenderSettings::square(24, 16, 100)).unwrap().raster().mean_luminance();
    let linear_ok = (got - 3.0 * m).abs() <= bound;

    // Degenerate combined renders.
    let s = RenderSettings::square(32, 16, 5);
    let room = CuboidGeom::from_dimensions(DVec2::ZERO, 6.0, 6.0, 0.0, 3.0).unwrap();
    let texture = sphere_to_cuboid_texture(&smooth_pano(64), &room, 128).unwrap();
    let black = sphere_to_cuboid_texture(&EquirectImage::filled(64, [0.0; 3], false).unwrap(), &room, 128).unwrap();
    let light = ParametricLight::new(
        Direction::from_angles(1.0, 0.7),
        3.0,
        0.3,
        [30.0, 25.0, 20.0],
        [0.0; 3],
    )
    .unwrap();
    let no_texture = max_abs_diff(
        render_combined(&scene, &light, &black, &s).unwrap().raster(),
        render_parametric(&scene, &light, &s).unwrap().raster(),
    );
    let pointless = light.set_size(0.0).unwrap();
    let no_light = max_abs_diff(
        render_combined(&scene, &pointless, &texture, &s).unwrap().raster(),
        render_pass(&scene, Pass::Texture(&texture), &s).unwrap().raster(),
    );
    let combined_ok = no_texture < 1e-5 && no_light < 1e-5;
    outcome(
        furnace_ok && linear_ok && combined_ok,
        format!(
            "furnace {furnace:.4} (tol 1%); linearity |{got:.4} - 3x{m:.4}| <= 3 sigma {bound:.4}: {linear_ok}; \
             black texture vs parametric {no_texture:.1e}, zero-size light vs texture {no_light:.1e} (tol 1e-5)"
        ),
    )
}

fn random_raster(rng: &mut ChaCha8Rng, n: usize, lo: f32) -> Raster {
    Raster::from_fn(n, 1, |_, _| [0, 1, 2].map(|_| rng.random_range(lo..2.0)))
}

fn metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut si_gap: f64 = 0.0;
    let mut angular_gap: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(4..32);
        let a = random_raster(&mut rng, n, 0.1);
        let b = random_raster(&mut rng, n, 0.0);
        // Brute force over alpha in [0, 20].
        let steps = 200_000;
        let grid = (0..=steps)
            .map(|i| rmse(&a.scaled([20.0 * i as f64 / steps as f64; 3]), &b).unwrap())
            .fold(f64::INFINITY, f64::min);
        si_gap = si_gap.max((grid - si_rmse(&a, &b).unwrap()).abs());

        let k: Vec<f32> = (0..n).map(|_| rng.random_range(0.1..10.0)).collect();
        let scaled = Raster::from_fn(n, 1, |u, _| a.get(u, 0).map(|x| x * k[u]));
        angular_gap = angular_gap.max((rgb_angular(&scaled, &b).unwrap() - rgb_angular(&a, &b).unwrap()).abs());
    }
    // Per-pixel powers of two keep the scaling exact in floating point.
    let a = random_raster(&mut rng, 16, 0.1);
    let b = random_raster(&mut rng, 16, 0.0);
    let pow2 = Raster::from_fn(16, 1, |u, _| a.get(u, 0).map(|x| x * (1u32 << (u % 8)) as f32));
    let exact = rgb_angular(&pow2, &b).unwrap() == rgb_angular(&a, &b).unwrap();
    let db = psnr_from_mse(0.01, 1.0);
    outcome(
        si_gap < 1e-6 && angular_gap < 1e-4 && exact && db == 20.0,
        format!(
            "si closed form vs alpha grid {si_gap:.1e} (tol 1e-6); angular under random scaling {angular_gap:.1e} deg (f32 rounding, tol 1e-4), \
             power-of-two scaling exact: {exact}; psnr(0.01) = {db} dB"
        ),
    )
}

fn smooth_pano(h: usize) -> EquirectImage {
    EquirectImage::from_directions(h, false, |d| {
        [
            (0.5 + 0.4 * (3.0 * d.x).sin() * d.y.cos()) as f32,
            (0.5 + 0.3 * d.y) as f32,
            (0.5 + 0.4 * (2.0 * d.z + d.x).cos()) as f32,
        ]
    })
    .unwrap()
}

fn geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (w, h) = (1024usize, 512usize);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..50 {
        let (width, depth) = (rng.random_range(3.0..8.0), rng.random_range(3.0..8.0));
        let yaw = rng.random_range(0.0..PI / 2.0);
        // Offset drawn in the room frame so the camera stays inside.
        let local = DVec2::new(rng.random_range(-0.3..0.3) * width, rng.random_range(-0.3..0.3) * depth);
        let center = DVec2::from_angle(yaw).rotate(local);
        let ceiling = rng.random_range(2.4..3.6);
        let room = CuboidGeom::from_dimensions(center, width, depth, yaw, ceiling).unwrap();
        let back = render_layout(&room, w, h)
            .and_then(|l| detect_corners(&l))
            .and_then(|c| backproject(&c, w, h));
        let Ok(back) = back else {
            failures += 1;
            continue;
        };
        let (a, b) = back.plan_dimensions();
        let (ea, eb) = room.plan_dimensions();
        let (a, b) = if (a - ea).abs() + (b - eb).abs() <= (a - eb).abs() + (b - ea).abs() {
            (a, b)
        } else {
            (b, a)
        };
        let err = [a / ea - 1.0, b / eb - 1.0, back.ceiling_height_m() / ceiling - 1.0]
            .iter()
            .fold(0.0f64, |m, e| m.max(e.abs()));
        worst = worst.max(err);
    }
    let pano = smooth_pano(128);
    let room = CuboidGeom::from_dimensions(DVec2::new(0.4, -0.3), 5.0, 4.0, 0.3, 2.9).unwrap();
    let tc = sphere_to_cuboid_texture(&pano, &room, 512).unwrap();
    let back = tc.reproject_from_point(DVec3::ZERO, 256, 128).unwrap();
    let mse = rmse(back.raster(), pano.raster()).unwrap().powi(2);
    let db = psnr_from_mse(mse, 1.0);
    outcome(
        failures == 0 && worst < 0.02 && db > 30.0,
        format!("50 rooms, {failures} undetected, worst relative error {worst:.4} (tol 0.02); reprojection {db:.1} dB (need > 30)"),
    )
}

fn compositing(dir: &std::path::Path) -> Outcome {
    let bundle = dir.join("composite-bundle");
    bundle_for(&disk(30.0, 40.0, 8.0), 32).write(&bundle).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let bg = Raster::from_fn(40, 30, |_, _| [0, 1, 2].map(|_| rng.random_range(0..=255u8) as f32 / 255.0));
    let bytes = png::encode_rgb(&bg).unwrap();
    let bg_path = dir.join("bg.png");
    fs::write(&bg_path, &bytes).unwrap();
    let out = dir.join("composite.png");
    let args = CompositeArgs {
        background: bg_path,
        bundle,
        scene: Scene::three_spheres().without_objects(),
        spp: 4,
        seed: 0,
        out: out.clone(),
    };
    cmd_composite(&args).unwrap();
    let same = fs::read(&out).unwrap() == bytes;
    outcome(same, format!("empty object set, background PNG byte-identical: {same}"))
}

fn determinism(dir: &std::path::Path) -> Outcome {
    let pano = write_pano(dir, "det.pfm", &disk(-60.0, 35.0, 9.0), 64);
    let render = RenderArgs {
        scene: SceneKind::Grid3x3,
        width: 48,
        height: 48,
        spp: 16,
        seed: 3,
        mode: RenderMode::Combined,
    };
    let run = |k: usize| {
        let out = dir.join(format!("det-{k}"));
        let config = FitConfig { seed: 17, ..FitConfig::default() };
        cmd_fit(&FitArgs { pano: pano.clone(), depth: None, layout: None, out: out.clone(), config }).unwrap();
        let pfm = dir.join(format!("det-{k}.pfm"));
        cmd_render(&out, &render, &pfm).unwrap();
        fs::read(pfm).unwrap()
    };
    let (a, b) = (run(0), run(1));
    outcome(a == b, format!("two fit + render runs, {} PFM bytes identical: {}", a.len(), a == b))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<serde_json::Value>) -> (StatusCode, Option<u64>, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
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
    (status, revision, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn editor_loop() -> Outcome {
    let app = router(Session::new(bundle_for(&disk(20.0, 35.0, 10.0), 48), PreviewSettings::default(), None));
    let patch = |step: f64| json!({ "field": "azimuth_deg", "value": step, "relative": true });
    let mut prev = png::decode(&call(&app, "GET", "/mask", None).await.2).unwrap();
    let mut rolled = true;
    let mut last = 0;
    for _ in 0..24 {
        let (status, rev, _) = call(&app, "PATCH", "/light", Some(patch(15.0))).await;
        rolled &= status == StatusCode::OK;
        last = rev.unwrap_or(0);
        let mask = png::decode(&call(&app, "GET", "/mask", None).await.2).unwrap();
        let w = prev.width() as i64;
        let expected = Raster::from_fn(prev.width(), prev.height(), |u, v| prev.get((u as i64 - 4).rem_euclid(w) as usize, v));
        rolled &= mask == expected;
        prev = mask;
    }
    // Slider scrub: a burst of small edits, then the preview.
    for _ in 0..10 {
        let (_, rev, _) = call(&app, "PATCH", "/light", Some(patch(1.5))).await;
        last = rev.unwrap_or(last);
    }
    let t = Instant::now();
    let (status, rev, _) = call(&app, "POST", "/render", Some(json!({}))).await;
    let latency = t.elapsed();
    let fresh = status == StatusCode::OK && rev == Some(last);
    outcome(
        rolled && fresh && latency < Duration::from_secs(1),
        format!(
            "masks rolled over 24 steps: {rolled}; preview {latency:.2?} at defaults (need < 1 s); \
             preview revision {rev:?} vs last PATCH {last}"
        ),
    )
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let runtime = tokio::runtime::Runtime::new().unwrap();
    let criteria: Vec<(&str, Box<dyn FnOnce() -> Outcome>)> = vec![
        ("fit-roundtrip", Box::new(roundtrip)),
        ("energy-split", Box::new(energy)),
        ("renderer-physics", Box::new(renderer)),
        ("metrics-oracles", Box::new(metrics)),
        ("geometry", Box::new(geometry)),
        ("composite-identity", Box::new(|| compositing(dir.path()))),
        ("determinism", Box::new(|| determinism(dir.path()))),
        ("editor-loop (secondary)", Box::new(|| runtime.block_on(editor_loop()))),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        let t = Instant::now();
        let o = check();
        println!(
            "{} {name}: {} [{:.1?}]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed()
        );
        if !o.pass {
            failed.push(name);
        }
    }
    drop(dir);
    if !failed.is_empty() {
        eprintln!("failed: {failed:?}");
        std::process::exit(1);
    }
}
