//! HTTP editing session over one light estimate.
//!
//! Every accepted mutation bumps the revision, which is echoed in the
//! `X-Estimate-Revision` header of every response. Clients may send the
//! same header as a precondition: mutations require it to match the
//! current revision and previews must not be older than it.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use editlight::envmap::png;
use editlight::lightmodel::light_mask;
use editlight::render::{render_combined, CancelToken, RenderSettings, Scene, SceneKind};
use editlight::scenegeom::{backproject, render_layout, CuboidManifest, Corners};
use editlight::{Error, LightManifest, ParametricLight};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bundle::{Bundle, LayoutSource, Provenance};
use crate::commands::display_png;

pub const REVISION_HEADER: &str = "x-estimate-revision";
const MAX_PREVIEW_WIDTH: usize = 4096;
const MAX_PREVIEW_SPP: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreviewSettings {
    pub scene: SceneKind,
    pub width: usize,
    pub spp: usize,
    pub seed: u64,
}

impl Default for PreviewSettings {
    fn default() -> Self {
        PreviewSettings {
            scene: SceneKind::Grid3x3,
            width: 256,
            spp: 16,
            seed: 0,
        }
    }
}

/// Mutable state behind the service.
pub struct Session {
    bundle: Bundle,
    revision: u64,
    preview: PreviewSettings,
    save_dir: Option<PathBuf>,
    cache: Option<((u64, PreviewSettings), Bytes)>,
    inflight: Vec<CancelToken>,
}

impl Session {
    pub fn new(bundle: Bundle, preview: PreviewSettings, save_dir: Option<PathBuf>) -> Self {
        Session {
            bundle,
            revision: 0,
            preview,
            save_dir,
            cache: None,
            inflight: Vec::new(),
        }
    }

    fn bump(&mut self) {
        self.revision += 1;
        self.cache = None;
        for token in self.inflight.drain(..) {
            token.cancel();
        }
    }
}

type Shared = Arc<Mutex<Session>>;

fn lock(state: &Shared) -> MutexGuard<'_, Session> {
    state.lock().unwrap_or_else(|e| e.into_inner())
}

pub fn router(session: Session) -> Router {
    Router::new()
        .route("/estimate", get(get_estimate))
        .route("/light", patch(patch_light))
        .route("/render", post(post_render))
        .route("/texture", get(get_texture))
        .route("/layout", get(get_layout).put(put_layout))
        .route("/mask", get(get_mask))
        .route("/save", post(post_save))
        .with_state(Arc::new(Mutex::new(session)))
}

pub async fn serve(addr: SocketAddr, session: Session) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(session)).await
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            field: None,
        }
    }

    fn unprocessable(field: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            message: message.into(),
            field: Some(field.to_string()),
        }
    }

    fn stale(current: u64, expected: u64) -> Self {
        ApiError::new(
            StatusCode::CONFLICT,
            format!("revision precondition {expected} does not match current revision {current}"),
        )
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = if e.is_input_error() {
            StatusCode::UNPROCESSABLE_ENTITY
        } else {
            StatusCode::INTERNAL_SERVER_ERROR
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<crate::error::CliError> for ApiError {
    fn from(e: crate::error::CliError) -> Self {
        match e {
            crate::error::CliError::Input(m) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, m),
            crate::error::CliError::Numerical(m) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, m),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        #[derive(Serialize)]
        struct Body {
            error: String,
            #[serde(skip_serializing_if = "Option::is_none")]
            field: Option<String>,
        }
        let body = Body {
            error: self.message,
            field: self.field,
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn requested_revision(headers: &HeaderMap) -> ApiResult<Option<u64>> {
    match headers.get(REVISION_HEADER) {
        None => Ok(None),
        Some(v) => v
            .to_str()
            .ok()
            .and_then(|s| s.trim().parse().ok())
            .map(Some)
            .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "malformed revision header")),
    }
}

fn with_revision(revision: u64, response: impl IntoResponse) -> Response {
    let mut r = response.into_response();
    r.headers_mut()
        .insert(REVISION_HEADER, HeaderValue::from(revision));
    r
}

fn png_response(revision: u64, bytes: impl Into<Bytes>) -> Response {
    with_revision(
        revision,
        ([(header::CONTENT_TYPE, "image/png")], bytes.into()),
    )
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimateView {
    pub revision: u64,
    pub light: LightManifest,
    pub cuboid: CuboidManifest,
    pub provenance: Provenance,
}

fn view(s: &Session) -> Response {
    let body = EstimateView {
        revision: s.revision,
        light: s.bundle.estimate.light.to_manifest(),
        cuboid: s.bundle.cuboid().to_manifest(),
        provenance: s.bundle.provenance.clone(),
    };
    with_revision(s.revision, Json(body))
}

async fn get_estimate(State(state): State<Shared>) -> Response {
    view(&lock(&state))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightField {
    AzimuthDeg,
    ElevationDeg,
    RadiusM,
    DistanceM,
    ColorRgb,
    AmbientRgb,
}

impl LightField {
    fn name(self) -> &'static str {
        match self {
            LightField::AzimuthDeg => "azimuth_deg",
            LightField::ElevationDeg => "elevation_deg",
            LightField::RadiusM => "radius_m",
            LightField::DistanceM => "distance_m",
            LightField::ColorRgb => "color_rgb",
            LightField::AmbientRgb => "ambient_rgb",
        }
    }
}

/// One field edit. With `relative` the value is added to the current one.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LightPatch {
    pub field: LightField,
    pub value: Value,
    #[serde(default)]
    pub relative: bool,
}

fn apply_patch(light: &ParametricLight, patch: &LightPatch) -> ApiResult<ParametricLight> {
    let name = patch.field.name();
    let scalar = || {
        patch
            .value
            .as_f64()
            .ok_or_else(|| ApiError::unprocessable(name, format!("{name} expects a number")))
    };
    let triple = || {
        serde_json::from_value::<[f64; 3]>(patch.value.clone())
            .map_err(|_| ApiError::unprocessable(name, format!("{name} expects three numbers")))
    };
    let rel = |current: f64, v: f64| if patch.relative { current + v } else { v };
    let rel3 = |current: [f64; 3], v: [f64; 3]| {
        if patch.relative {
            std::array::from_fn(|c| current[c] + v[c])
        } else {
            v
        }
    };
    let result = match patch.field {
        LightField::AzimuthDeg => {
            light.set_azimuth(rel(light.azimuth().to_degrees(), scalar()?).to_radians())
        }
        LightField::ElevationDeg => {
            light.set_elevation(rel(light.elevation().to_degrees(), scalar()?).to_radians())
        }
        LightField::RadiusM => light.set_size(rel(light.radius_m(), scalar()?)),
        LightField::DistanceM => light.set_distance(rel(light.distance_m(), scalar()?)),
        LightField::ColorRgb => light.set_color(rel3(light.color(), triple()?)),
        LightField::AmbientRgb => light.set_ambient(rel3(light.ambient(), triple()?)),
    };
    result.map_err(|e| ApiError::unprocessable(name, e.to_string()))
}

async fn patch_light(
    State(state): State<Shared>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let patch: LightPatch = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let expected = requested_revision(&headers)?;
    let mut s = lock(&state);
    if let Some(r) = expected {
        if r != s.revision {
            return Err(ApiError::stale(s.revision, r));
        }
    }
    let light = apply_patch(&s.bundle.estimate.light, &patch)?;
    s.bundle.estimate.light = light;
    s.bump();
    Ok(view(&s))
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RenderRequest {
    pub scene: Option<SceneKind>,
    pub spp: Option<usize>,
    pub width: Option<usize>,
}

async fn post_render(
    State(state): State<Shared>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let req: RenderRequest = if body.is_empty() {
        RenderRequest::default()
    } else {
        serde_json::from_slice(&body)
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?
    };
    let wanted = requested_revision(&headers)?;
    loop {
        let (key, bundle, token) = {
            let mut s = lock(&state);
            if let Some(r) = wanted {
                if r > s.revision {
                    return Err(ApiError::stale(s.revision, r));
                }
            }
            let settings = PreviewSettings {
                scene: req.scene.unwrap_or(s.preview.scene),
                width: req.width.unwrap_or(s.preview.width),
                spp: req.spp.unwrap_or(s.preview.spp),
                seed: s.preview.seed,
            };
            if !(1..=MAX_PREVIEW_WIDTH).contains(&settings.width) {
                return Err(ApiError::unprocessable("width", format!("width must be in 1..={MAX_PREVIEW_WIDTH}")));
            }
            if !(1..=MAX_PREVIEW_SPP).contains(&settings.spp) {
                return Err(ApiError::unprocessable("spp", format!("spp must be in 1..={MAX_PREVIEW_SPP}")));
            }
            let key = (s.revision, settings);
            if let Some((k, bytes)) = &s.cache {
                if *k == key {
                    return Ok(png_response(s.revision, bytes.clone()));
                }
            }
            let token = CancelToken::new();
            s.inflight.push(token.clone());
            (key, s.bundle.clone(), token)
        };
        let token_done = token.clone();
        let rendered = tokio::task::spawn_blocking(move || preview(&bundle, key.1, token))
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        lock(&state).inflight.retain(|t| !t.same(&token_done));
        match rendered {
            // A newer revision arrived mid-render: start over on it.
            Err(ApiError { status, .. }) if status == StatusCode::GONE => continue,
            Err(e) => return Err(e),
            Ok(bytes) => {
                let bytes = Bytes::from(bytes);
                let mut s = lock(&state);
                if s.revision == key.0 {
                    s.cache = Some((key, bytes.clone()));
                }
                return Ok(png_response(key.0, bytes));
            }
        }
    }
}

fn preview(bundle: &Bundle, p: PreviewSettings, token: CancelToken) -> ApiResult<Vec<u8>> {
    let light = &bundle.estimate.light;
    let scene = Scene::of_kind(p.scene);
    let settings = RenderSettings::square(p.width, p.spp, p.seed).with_cancel(token);
    let textured = bundle.textured(light)?;
    match render_combined(&scene, light, &textured, &settings) {
        Ok(img) => Ok(display_png(img.raster(), bundle.provenance.exposure_scale)?),
        Err(Error::Cancelled) => Err(ApiError::new(StatusCode::GONE, "superseded")),
        Err(e) => Err(e.into()),
    }
}

async fn get_texture(State(state): State<Shared>) -> ApiResult<Response> {
    let s = lock(&state);
    Ok(png_response(s.revision, s.bundle.estimate.texture.preview_png()?))
}

async fn get_layout(State(state): State<Shared>) -> ApiResult<Response> {
    let s = lock(&state);
    Ok(png_response(s.revision, s.bundle.estimate.layout.encode_png()?))
}

/// Footprint of the current light at the texture's resolution.
async fn get_mask(State(state): State<Shared>) -> ApiResult<Response> {
    let s = lock(&state);
    let t = &s.bundle.estimate.texture;
    let mask = light_mask(&s.bundle.estimate.light, t.width(), t.height());
    Ok(png_response(s.revision, png::encode_gray(mask.raster())?))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayoutEdit {
    pub corners: Corners,
}

async fn put_layout(
    State(state): State<Shared>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let edit: LayoutEdit = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let expected = requested_revision(&headers)?;
    let mut s = lock(&state);
    if let Some(r) = expected {
        if r != s.revision {
            return Err(ApiError::stale(s.revision, r));
        }
    }
    let (w, h) = (s.bundle.estimate.layout.width(), s.bundle.estimate.layout.height());
    let cuboid = backproject(&edit.corners, w, h)
        .map_err(|e| ApiError::unprocessable("corners", e.to_string()))?;
    let layout = render_layout(&cuboid, w, h)?;
    s.bundle.estimate.layout = layout;
    s.bundle.estimate.cuboid = Some(cuboid);
    s.bundle.provenance.layout = LayoutSource::Edited;
    s.bump();
    Ok(view(&s))
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SaveRequest {
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SaveResponse {
    pub revision: u64,
    pub dir: PathBuf,
}

async fn post_save(State(state): State<Shared>, body: Bytes) -> ApiResult<Response> {
    let req: SaveRequest = if body.is_empty() {
        SaveRequest::default()
    } else {
        serde_json::from_slice(&body)
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?
    };
    let (bundle, revision, dir) = {
        let s = lock(&state);
        let dir = req
            .dir
            .or_else(|| s.save_dir.clone())
            .ok_or_else(|| ApiError::unprocessable("dir", "no save directory configured"))?;
        (s.bundle.clone(), s.revision, dir)
    };
    let target = dir.clone();
    tokio::task::spawn_blocking(move || bundle.write(&target))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(with_revision(revision, Json(SaveResponse { revision, dir })))
}
