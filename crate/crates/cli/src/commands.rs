//! The batch commands: fit, render, validate, evaluate and composite.

use std::io::Write;
use std::path::{Path, PathBuf};

use editlight::envmap::{self, pfm, reexpose_percentile, tonemap_ldr, DEFAULT_GAMMA};
use editlight::lightfit::{fit_panorama, strongest_light_ratio, FitConfig, FitStatus};
use editlight::metrics::{normalize_exposure, summarize, MetricReport};
use editlight::render::{
    composite_differential, object_mask, render_combined, render_ibl, render_parametric, GroundPlane,
    RenderSettings, RenderedImage, Scene, SceneKind,
};
use editlight::scenegeom::{backproject, detect_corners, render_layout};
use editlight::{EquirectImage, LayoutMap, LightEstimate, Raster};
use serde::Serialize;

use crate::bundle::{default_cuboid, write_atomic, Bundle, LayoutSource, Provenance};
use crate::error::{CliError, CliResult, Context};

/// Texture exposure: this luminance percentile of the panorama maps to
/// `TEXTURE_LEVEL` before clipping to LDR.
pub const TEXTURE_PERCENTILE: f64 = 90.0;
pub const TEXTURE_LEVEL: f64 = 0.8;

/// The panorama re-exposed and clipped to `[0, 1]`, with the exposure
/// factor applied.
pub fn ldr_texture(hdr: &EquirectImage) -> CliResult<(EquirectImage, f64)> {
    let (exposed, scale) = reexpose_percentile(hdr, TEXTURE_PERCENTILE, TEXTURE_LEVEL)?;
    Ok((tonemap_ldr(&exposed, 1.0)?, scale))
}

#[derive(Clone, Debug)]
pub struct FitArgs {
    pub pano: PathBuf,
    pub depth: Option<PathBuf>,
    /// Layout edge map (PNG) at the panorama's resolution.
    pub layout: Option<PathBuf>,
    pub out: PathBuf,
    pub config: FitConfig,
}

/// Runs the extraction pipeline on one panorama and writes the bundle.
pub fn cmd_fit(args: &FitArgs) -> CliResult<Bundle> {
    let hdr = EquirectImage::load(&args.pano).context(args.pano.display())?;
    let depth = match &args.depth {
        Some(p) => Some(pfm::read(p).context(p.display())?),
        None => None,
    };
    let outcome = fit_panorama(&hdr, depth.as_ref(), &args.config)?;
    if outcome.report.status == FitStatus::Diverged {
        return Err(CliError::Numerical(format!(
            "fit diverged: loss {:.4e} -> {:.4e}",
            outcome.report.initial_loss,
            outcome.report.losses.last().copied().unwrap_or(f64::NAN)
        )));
    }
    let (texture, scale) = ldr_texture(&hdr)?;

    let (layout, cuboid, source) = match &args.layout {
        Some(p) => {
            let layout = LayoutMap::load(p).context(p.display())?;
            let corners = detect_corners(&layout).context(p.display())?;
            let cuboid = backproject(&corners, layout.width(), layout.height())?;
            (layout, cuboid, LayoutSource::Detected)
        }
        None => {
            let cuboid = default_cuboid();
            let layout = render_layout(&cuboid, hdr.width(), hdr.height())?;
            (layout, cuboid, LayoutSource::Default)
        }
    };
    let estimate = LightEstimate::new(outcome.light, texture, layout, Some(cuboid))?;
    let mut provenance = Provenance::new(scale, args.config.seed, source);
    provenance.source = args
        .pano
        .file_name()
        .map(|n| n.to_string_lossy().into_owned());
    provenance.fit = Some(args.config.clone());
    let bundle = Bundle {
        estimate,
        provenance,
        report: Some(outcome.report),
    };
    bundle.write(&args.out)?;
    Ok(bundle)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenderMode {
    /// Parametric light plus textured cuboid.
    Combined,
    /// Parametric light plus constant ambient.
    Parametric,
}

#[derive(Clone, Debug)]
pub struct RenderArgs {
    pub scene: SceneKind,
    pub width: usize,
    pub height: usize,
    pub spp: usize,
    pub seed: u64,
    pub mode: RenderMode,
}

pub fn render_bundle(bundle: &Bundle, args: &RenderArgs) -> CliResult<RenderedImage> {
    let scene = Scene::of_kind(args.scene);
    let settings = RenderSettings::new(args.width, args.height, args.spp, args.seed);
    let light = &bundle.estimate.light;
    Ok(match args.mode {
        RenderMode::Combined => render_combined(&scene, light, &bundle.textured(light)?, &settings)?,
        RenderMode::Parametric => render_parametric(&scene, light, &settings)?,
    })
}

/// Linear radiance to 8-bit display values at the bundle's exposure.
pub fn display_png(raster: &Raster, exposure: f64) -> CliResult<Vec<u8>> {
    let inv = 1.0 / DEFAULT_GAMMA;
    let shown = raster.map(|p| p.map(|x| ((x as f64 * exposure).clamp(0.0, 1.0).powf(inv)) as f32));
    Ok(envmap::png::encode_rgb(&shown)?)
}

/// Renders a bundle to `out`: PFM (linear) or PNG (exposed, gamma encoded),
/// chosen by extension.
pub fn cmd_render(bundle_dir: &Path, args: &RenderArgs, out: &Path) -> CliResult<RenderedImage> {
    let bundle = Bundle::read(bundle_dir)?;
    let image = render_bundle(&bundle, args)?;
    let bytes = match extension(out).as_str() {
        "pfm" => pfm::encode(image.raster()),
        "png" => display_png(image.raster(), bundle.provenance.exposure_scale)?,
        other => {
            return Err(CliError::input(format!(
                "{}: unsupported output format {other:?} (use .pfm or .png)",
                out.display()
            )))
        }
    };
    write_atomic(out, &bytes)?;
    Ok(image)
}

fn extension(path: &Path) -> String {
    path.extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default()
}

fn label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioRow {
    pub image: String,
    pub ratio: f64,
}

/// Strongest-light energy ratio of every panorama, plus quartile rows.
pub fn cmd_validate(panos: &[PathBuf], settings: &RenderSettings, out: impl Write) -> CliResult<Vec<RatioRow>> {
    let mut rows = Vec::with_capacity(panos.len());
    for p in panos {
        let hdr = EquirectImage::load(p).context(p.display())?;
        let ratio = strongest_light_ratio(&hdr, settings).context(p.display())?;
        rows.push(RatioRow {
            image: label(p),
            ratio,
        });
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["image", "ratio"])?;
    for r in &rows {
        w.serialize(r)?;
    }
    if !rows.is_empty() {
        let mut ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
        for (name, pct) in [("p25", 25.0), ("p50", 50.0), ("p75", 75.0)] {
            let value = envmap::percentile(&mut ratios, pct).expect("non-empty");
            w.serialize(RatioRow {
                image: name.into(),
                ratio: value,
            })?;
        }
    }
    w.flush()?;
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricSpace {
    /// Linear radiance after a shared exposure normalization.
    Linear,
    /// The normalized renders clipped and gamma encoded.
    Tonemapped,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRow {
    pub image: String,
    pub rmse: f64,
    pub si_rmse: f64,
    pub psnr_db: f64,
    pub rgb_angular_deg: f64,
}

impl MetricRow {
    fn new(image: String, r: MetricReport) -> Self {
        MetricRow {
            image,
            rmse: r.rmse,
            si_rmse: r.si_rmse,
            psnr_db: r.psnr_db,
            rgb_angular_deg: r.rgb_angular_deg,
        }
    }
}

/// Compares two renders of the probe scene, `estimate` against `reference`.
pub fn compare_renders(estimate: &Raster, reference: &Raster, space: MetricSpace) -> CliResult<MetricReport> {
    let (e, r) = normalize_exposure(estimate, reference)?;
    Ok(match space {
        MetricSpace::Linear => MetricReport::compare(&e, &r)?,
        MetricSpace::Tonemapped => {
            let inv = (1.0 / DEFAULT_GAMMA) as f32;
            let tm = |x: &Raster| x.map(|p| p.map(|v| v.clamp(0.0, 1.0).powf(inv)));
            MetricReport::compare(&tm(&e), &tm(&r))?
        }
    })
}

/// Pairs ground-truth panoramas with bundles in order and reports the
/// metrics of the combined render against the panorama-lit render.
pub fn cmd_evaluate(
    gt: &[PathBuf],
    bundles: &[PathBuf],
    scene: SceneKind,
    settings: &RenderSettings,
    space: MetricSpace,
    out: impl Write,
) -> CliResult<Vec<MetricRow>> {
    if gt.len() != bundles.len() {
        return Err(CliError::input(format!(
            "{} panoramas but {} bundles",
            gt.len(),
            bundles.len()
        )));
    }
    let probe = Scene::of_kind(scene);
    let args = RenderArgs {
        scene,
        width: settings.width,
        height: settings.height,
        spp: settings.spp,
        seed: settings.seed,
        mode: RenderMode::Combined,
    };
    let mut rows = Vec::with_capacity(gt.len());
    let mut reports = Vec::with_capacity(gt.len());
    for (p, b) in gt.iter().zip(bundles) {
        let hdr = EquirectImage::load(p).context(p.display())?;
        let bundle = Bundle::read(b)?;
        let reference = render_ibl(&probe, &hdr, settings)?;
        let estimate = render_bundle(&bundle, &args)?;
        let report = compare_renders(estimate.raster(), reference.raster(), space).context(p.display())?;
        reports.push(report);
        rows.push(MetricRow::new(label(p), report));
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["image", "rmse", "si_rmse", "psnr_db", "rgb_angular_deg"])?;
    for r in &rows {
        w.serialize(r)?;
    }
    if let Some(s) = summarize(&reports) {
        for (name, r) in [("p25", s.p25), ("p50", s.p50), ("p75", s.p75)] {
            w.serialize(MetricRow::new(name.into(), r))?;
        }
    }
    w.flush()?;
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct CompositeArgs {
    pub background: PathBuf,
    pub bundle: PathBuf,
    /// Inserted objects, camera and catching plane.
    pub scene: Scene,
    pub spp: usize,
    pub seed: u64,
    pub out: PathBuf,
}

/// Builds the composite scene from a probe kind or a JSON scene file, with
/// an optional replacement ground plane.
pub fn load_scene(spec: &str, plane: Option<GroundPlane>, no_plane: bool) -> CliResult<Scene> {
    let mut scene = match spec.parse::<SceneKind>() {
        Ok(kind) => Scene::of_kind(kind),
        Err(_) => crate::bundle::read_json(Path::new(spec))?,
    };
    if no_plane {
        scene.plane = None;
    } else if plane.is_some() {
        scene.plane = plane;
    }
    scene.validate()?;
    Ok(scene)
}

/// Differential-rendering insertion of the scene's objects into an 8-bit
/// background photograph lit by the bundle's estimate.
pub fn cmd_composite(args: &CompositeArgs) -> CliResult<Raster> {
    let bytes = std::fs::read(&args.background).context(args.background.display())?;
    let encoded = envmap::png::decode(&bytes).context(args.background.display())?;
    let background = encoded.map(|p| p.map(|x| x.powf(DEFAULT_GAMMA as f32)));
    let bundle = Bundle::read(&args.bundle)?;
    let light = &bundle.estimate.light;
    let textured = bundle.textured(light)?;
    let (w, h) = (background.width(), background.height());
    let settings = RenderSettings::new(w, h, args.spp, args.seed);
    let k = bundle.provenance.exposure_scale;
    let with_obj = render_combined(&args.scene, light, &textured, &settings)?;
    let without = render_combined(&args.scene.without_objects(), light, &textured, &settings)?;
    let mask = object_mask(&args.scene, w, h);
    let composite = composite_differential(
        &background,
        &with_obj.raster().scaled([k; 3]),
        &without.raster().scaled([k; 3]),
        &mask,
    )?;
    let inv = (1.0 / DEFAULT_GAMMA) as f32;
    let shown = composite.map(|p| p.map(|x| x.clamp(0.0, 1.0).powf(inv)));
    write_atomic(&args.out, &envmap::png::encode_rgb(&shown)?)?;
    Ok(composite)
}
