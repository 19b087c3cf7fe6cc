//! Extraction of the parametric light from an HDR panorama: light-region
//! detection, dominant-light selection, initialization, color/ambient
//! least squares, Adam refinement on the probe render, plus the texture
//! rescaling and energy-ratio helpers.

mod adam;
mod regions;

pub use adam::{refine_adam, AdamConfig, FitReport, FitStatus};
pub use regions::{
    detect_bright_ldr, detect_light_regions, LightRegion, DEFAULT_MAX_REGIONS, GROW_FRACTION,
    STOP_MEDIAN_FACTOR,
};

use serde::{Deserialize, Serialize};

use crate::envmap::EquirectImage;
use crate::error::{Error, Result};
use crate::lightmodel::ParametricLight;
use crate::raster::Raster;
use crate::render::{
    render_ibl, render_pass, Pass, RenderSettings, RenderedImage, Scene, SceneKind, SphereEmitter,
};

pub const DEFAULT_DISTANCE_M: f64 = 3.0;

/// Probe scene, render settings and the fixed renders a fit compares against.
#[derive(Clone, Debug)]
pub struct FitContext {
    pub scene: Scene,
    /// Settings of the light renders evaluated at every iteration.
    pub settings: RenderSettings,
    /// Probe scene lit by the source panorama.
    pub target: RenderedImage,
    /// Probe scene lit by a unit ambient sky, at the target's sample count.
    pub ambient: RenderedImage,
}

impl FitContext {
    /// Renders the target and ambient basis once at `reference_spp`.
    pub fn new(scene: Scene, hdr: &EquirectImage, settings: RenderSettings, reference_spp: usize) -> Result<Self> {
        let reference = RenderSettings {
            spp: reference_spp,
            ..settings.clone()
        };
        let target = render_ibl(&scene, hdr, &reference)?;
        Self::with_target(scene, target, settings)
    }

    pub fn with_target(scene: Scene, target: RenderedImage, settings: RenderSettings) -> Result<Self> {
        let reference = RenderSettings {
            spp: target.spp(),
            ..settings.clone()
        };
        let ambient = render_pass(&scene, Pass::Ambient, &reference)?;
        target.raster().same_shape(ambient.raster())?;
        Ok(FitContext {
            scene,
            settings,
            target,
            ambient,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColorFit {
    pub color: [f64; 3],
    pub ambient: [f64; 3],
    /// The normal equations were singular; `ambient` is the mean target and
    /// `color` is zero.
    pub degenerate: bool,
}

/// Per-channel two-variable nonnegative least squares of
/// `c * light + a * ambient` against `target`.
fn nnls2(x: &[f64], y: &[f64], t: &[f64]) -> Option<(f64, f64)> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let (xx, xy, yy, xt, yt) = (dot(x, x), dot(x, y), dot(y, y), dot(x, t), dot(y, t));
    let det = xx * yy - xy * xy;
    if !(xx > 0.0 && yy > 0.0) || det <= 1e-12 * xx * yy {
        return None;
    }
    let c = (xt * yy - yt * xy) / det;
    let a = (yt * xx - xt * xy) / det;
    if c >= 0.0 && a >= 0.0 {
        return Some((c, a));
    }
    // Optimum lies on a boundary: compare the two one-variable fits.
    let tt = dot(t, t);
    let only_c = (xt / xx).max(0.0);
    let only_a = (yt / yy).max(0.0);
    let res_c = tt - 2.0 * only_c * xt + only_c * only_c * xx;
    let res_a = tt - 2.0 * only_a * yt + only_a * only_a * yy;
    Some(if res_c < res_a { (only_c, 0.0) } else { (0.0, only_a) })
}

fn channel(r: &Raster, c: usize) -> Vec<f64> {
    r.pixels().iter().map(|p| p[c] as f64).collect()
}

/// Least-squares color and ambient for a fixed light geometry.
pub fn fit_color_ambient(ctx: &FitContext, emitter: SphereEmitter) -> Result<ColorFit> {
    let light = render_pass(&ctx.scene, Pass::Sphere(emitter), &ctx.settings)?;
    let mut color = [0.0; 3];
    let mut ambient = [0.0; 3];
    let mut degenerate = false;
    let target_means = ctx.target.raster().channel_means();
    for c in 0..3 {
        let x = channel(light.raster(), c);
        let y = channel(ctx.ambient.raster(), c);
        let t = channel(ctx.target.raster(), c);
        match nnls2(&x, &y, &t) {
            Some((cc, aa)) => {
                color[c] = cc;
                ambient[c] = aa;
            }
            None => {
                degenerate = true;
            }
        }
    }
    if degenerate {
        color = [0.0; 3];
        ambient = target_means;
    }
    Ok(ColorFit {
        color,
        ambient,
        degenerate,
    })
}

/// Initial light for a region: centroid direction, mean depth (or the
/// default distance), radius from the mean ellipse half-angle, then
/// color/ambient by least squares.
pub fn init_params(
    ctx: &FitContext,
    region: &LightRegion,
    depth: Option<&Raster>,
    default_distance_m: f64,
) -> Result<(ParametricLight, ColorFit)> {
    let distance = match depth {
        Some(d) => {
            let values: Vec<f64> = region
                .pixels
                .iter()
                .filter_map(|&[u, v]| {
                    (u < d.width() && v < d.height()).then(|| d.get(u, v)[0] as f64)
                })
                .filter(|x| x.is_finite() && *x > 0.0)
                .collect();
            if values.is_empty() {
                return Err(Error::invalid("depth map has no valid values inside the light region"));
            }
            values.iter().sum::<f64>() / values.len() as f64
        }
        None => default_distance_m,
    };
    let size = region.angular_size().clamp(0.1f64.to_radians(), 80f64.to_radians());
    let geometry = ParametricLight::from_angular_radius(
        region.centroid,
        distance,
        size,
        [0.0; 3],
        [0.0; 3],
    )?;
    let fit = fit_color_ambient(ctx, SphereEmitter::from(&geometry))?;
    let light = geometry.set_color(fit.color)?.set_ambient(fit.ambient)?;
    Ok((light, fit))
}

/// Region whose isolated render of the probe scene is brightest; ties go
/// to the earlier region.
pub fn select_dominant<'a>(
    regions: &'a [LightRegion],
    hdr: &EquirectImage,
    scene: &Scene,
    settings: &RenderSettings,
) -> Result<&'a LightRegion> {
    if regions.is_empty() {
        return Err(Error::Detection("no light regions to choose from".into()));
    }
    if regions.len() == 1 {
        return Ok(&regions[0]);
    }
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, r) in regions.iter().enumerate() {
        let lum = render_ibl(scene, &r.isolate(hdr), settings)?.raster().mean_luminance();
        if lum > best.0 {
            best = (lum, i);
        }
    }
    Ok(&regions[best.1])
}

/// Per-channel scale so the solid-angle-weighted mean equals `ambient`.
pub fn rescale_texture(texture: &EquirectImage, ambient: [f64; 3]) -> Result<EquirectImage> {
    let means = texture.weighted_channel_means();
    let mut factor = [1.0; 3];
    for c in 0..3 {
        if !(ambient[c] >= 0.0 && ambient[c].is_finite()) {
            return Err(Error::OutOfRange {
                field: "ambient_rgb",
                value: ambient[c],
                expected: "finite and >= 0",
            });
        }
        if means[c] > 0.0 {
            factor[c] = ambient[c] / means[c];
        } else if ambient[c] > 0.0 {
            return Err(Error::Numerical(format!(
                "texture channel {c} is black but the ambient target is {}",
                ambient[c]
            )));
        }
    }
    Ok(texture.scaled(factor))
}

/// Mean probe luminance under `region` alone divided by that under the
/// whole panorama.
pub fn region_light_ratio(
    hdr: &EquirectImage,
    region: &LightRegion,
    scene: &Scene,
    settings: &RenderSettings,
) -> Result<f64> {
    let full = render_ibl(scene, hdr, settings)?.raster().mean_luminance();
    if !(full > 0.0) {
        return Err(Error::Numerical("probe render under the full panorama is black".into()));
    }
    let part = render_ibl(scene, &region.isolate(hdr), settings)?.raster().mean_luminance();
    Ok(part / full)
}

/// Share of the probe-scene energy contributed by the single strongest
/// light of the panorama (0 when no light region is found).
pub fn strongest_light_ratio(hdr: &EquirectImage, settings: &RenderSettings) -> Result<f64> {
    let scene = Scene::grid3x3();
    let regions = detect_light_regions(hdr, DEFAULT_MAX_REGIONS);
    if regions.is_empty() {
        let full = render_ibl(&scene, hdr, settings)?.raster().mean_luminance();
        if !(full > 0.0) {
            return Err(Error::Numerical("probe render under the full panorama is black".into()));
        }
        return Ok(0.0);
    }
    let dominant = select_dominant(&regions, hdr, &scene, settings)?;
    region_light_ratio(hdr, dominant, &scene, settings)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub scene: SceneKind,
    /// Side of the square probe render used during fitting.
    pub resolution: usize,
    pub spp: usize,
    /// Samples per pixel of the fixed target and ambient renders.
    pub reference_spp: usize,
    pub seed: u64,
    pub n_lights: usize,
    pub default_distance_m: f64,
    pub adam: AdamConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            scene: SceneKind::Grid3x3,
            resolution: 32,
            spp: 16,
            reference_spp: 256,
            seed: 0,
            n_lights: DEFAULT_MAX_REGIONS,
            default_distance_m: DEFAULT_DISTANCE_M,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub light: ParametricLight,
    pub region: LightRegion,
    pub report: FitReport,
}

/// Full extraction: detect, select, initialize, refine, energy ratio.
pub fn fit_panorama(hdr: &EquirectImage, depth: Option<&Raster>, config: &FitConfig) -> Result<FitOutcome> {
    if config.n_lights == 0 {
        return Err(Error::OutOfRange {
            field: "n_lights",
            value: 0.0,
            expected: ">= 1",
        });
    }
    if let Some(d) = depth {
        if d.width() != hdr.width() || d.height() != hdr.height() {
            return Err(Error::ResolutionMismatch(d.width(), d.height(), hdr.width(), hdr.height()));
        }
    }
    let scene = Scene::of_kind(config.scene);
    let settings = RenderSettings::square(config.resolution, config.spp, config.seed);
    let ctx = FitContext::new(scene, hdr, settings, config.reference_spp)?;
    let regions = detect_light_regions(hdr, config.n_lights);
    let region = if config.n_lights == 1 {
        regions
            .first()
            .ok_or_else(|| Error::Detection("no light source found in the panorama".into()))?
    } else {
        select_dominant(&regions, hdr, &ctx.scene, &ctx.settings)
            .map_err(|_| Error::Detection("no light source found in the panorama".into()))?
    };
    let (p0, color_fit) = init_params(&ctx, region, depth, config.default_distance_m)?;
    let mut report = refine_adam(&ctx, &p0, &config.adam)?;
    report.color_fit_degenerate = color_fit.degenerate;
    let full = ctx.target.raster().mean_luminance();
    if full > 0.0 {
        let reference = RenderSettings {
            spp: config.reference_spp,
            ..ctx.settings.clone()
        };
        let part = render_ibl(&ctx.scene, &region.isolate(hdr), &reference)?
            .raster()
            .mean_luminance();
        report.energy_ratio = Some(part / full);
    }
    let light = ParametricLight::try_from(report.refined.clone())?;
    Ok(FitOutcome {
        light,
        region: region.clone(),
        report,
    })
}
