//! Direct-lighting renderer for the probe scenes.
//!
//! Every pass renders one emitter at unit scale (environment, spherical
//! light, constant ambient sky, textured cuboid) so that a parametric
//! render is an exact linear combination of per-emitter images. Each pixel
//! of each pass draws from its own generator seeded by (seed, pass, pixel),
//! which makes images independent of thread scheduling.

mod integrator;
mod sampling;
mod scene;

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use glam::DVec3;

use crate::envmap::{pfm, png, EquirectImage};
use crate::error::{Error, Result};
use crate::lightmodel::ParametricLight;
use crate::raster::Raster;
use crate::scenegeom::TexturedCuboid;

pub use sampling::EnvSampler;
pub(crate) use sampling::basis as tangent_basis;
pub use scene::{Camera, GroundPlane, Material, Scene, SceneKind, Sphere, PROBE_ALBEDO};

/// Shared flag that aborts a render between rows.
#[derive(Clone, Debug, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::Relaxed);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::Relaxed)
    }

    /// True when both handles control the same flag.
    pub fn same(&self, other: &CancelToken) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

#[derive(Clone, Debug)]
pub struct RenderSettings {
    pub width: usize,
    pub height: usize,
    pub spp: usize,
    pub seed: u64,
    pub cancel: Option<CancelToken>,
}

impl RenderSettings {
    pub fn new(width: usize, height: usize, spp: usize, seed: u64) -> Self {
        RenderSettings {
            width,
            height,
            spp,
            seed,
            cancel: None,
        }
    }

    pub fn square(size: usize, spp: usize, seed: u64) -> Self {
        Self::new(size, size, spp, seed)
    }

    pub fn with_cancel(mut self, token: CancelToken) -> Self {
        self.cancel = Some(token);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("render size must be positive"));
        }
        if self.spp == 0 {
            return Err(Error::OutOfRange {
                field: "spp",
                value: 0.0,
                expected: ">= 1",
            });
        }
        Ok(())
    }
}

/// Linear RGB radiance image with the sampling parameters that made it.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedImage {
    raster: Raster,
    spp: usize,
    seed: u64,
}

impl RenderedImage {
    pub fn new(raster: Raster, spp: usize, seed: u64) -> Self {
        RenderedImage { raster, spp, seed }
    }

    pub fn raster(&self) -> &Raster {
        &self.raster
    }

    pub fn into_raster(self) -> Raster {
        self.raster
    }

    pub fn width(&self) -> usize {
        self.raster.width()
    }

    pub fn height(&self) -> usize {
        self.raster.height()
    }

    pub fn spp(&self) -> usize {
        self.spp
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn write_pfm(&self, path: impl AsRef<Path>) -> Result<()> {
        pfm::write(path, &self.raster)
    }

    /// Gamma-encoded 8-bit preview; radiance is clipped at 1.
    pub fn encode_png(&self, gamma: f64) -> Result<Vec<u8>> {
        png::encode_rgb(&crate::envmap::tonemap_raster(&self.raster, gamma)?)
    }
}

/// Spherical emitter of unit radiance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereEmitter {
    pub center: DVec3,
    pub radius: f64,
}

impl From<&ParametricLight> for SphereEmitter {
    fn from(light: &ParametricLight) -> Self {
        SphereEmitter {
            center: light.position(),
            radius: light.radius_m(),
        }
    }
}

/// One lighting pass. Sphere and ambient passes emit unit radiance.
#[derive(Clone, Copy, Debug)]
pub enum Pass<'a> {
    Environment(&'a EnvSampler),
    Sphere(SphereEmitter),
    Ambient,
    Texture(&'a TexturedCuboid),
}

impl Pass<'_> {
    fn stream(&self) -> u64 {
        match self {
            Pass::Sphere(_) => 1,
            Pass::Ambient => 2,
            Pass::Texture(_) => 3,
            Pass::Environment(_) => 4,
        }
    }
}

pub fn render_pass(scene: &Scene, pass: Pass<'_>, settings: &RenderSettings) -> Result<RenderedImage> {
    settings.validate()?;
    scene.validate()?;
    let raster = integrator::render(scene, pass, settings)?;
    Ok(RenderedImage::new(raster, settings.spp, settings.seed))
}

/// Ground-truth render lit by an HDR environment map.
pub fn render_ibl(scene: &Scene, env: &EquirectImage, settings: &RenderSettings) -> Result<RenderedImage> {
    render_pass(scene, Pass::Environment(&EnvSampler::new(env)), settings)
}

/// Unit-radiance images of the spherical emitter and of the ambient sky.
#[derive(Clone, Debug)]
pub struct ParametricBasis {
    pub light: RenderedImage,
    pub ambient: RenderedImage,
}

impl ParametricBasis {
    pub fn render(scene: &Scene, emitter: SphereEmitter, settings: &RenderSettings) -> Result<Self> {
        Ok(ParametricBasis {
            light: render_pass(scene, Pass::Sphere(emitter), settings)?,
            ambient: render_pass(scene, Pass::Ambient, settings)?,
        })
    }

    /// `color * light + ambient * sky`, per channel.
    pub fn combine(&self, color: [f64; 3], ambient: [f64; 3]) -> RenderedImage {
        let raster = weighted_sum(&[
            (self.light.raster(), color),
            (self.ambient.raster(), ambient),
        ]);
        RenderedImage::new(raster, self.light.spp, self.light.seed)
    }
}

fn weighted_sum(terms: &[(&Raster, [f64; 3])]) -> Raster {
    let (w, h) = (terms[0].0.width(), terms[0].0.height());
    let mut out = vec![[0.0f32; 3]; w * h];
    for (i, px) in out.iter_mut().enumerate() {
        let mut acc = [0.0f64; 3];
        for (r, k) in terms {
            let p = r.pixels()[i];
            for c in 0..3 {
                acc[c] += p[c] as f64 * k[c];
            }
        }
        *px = acc.map(|x| x as f32);
    }
    Raster::new(w, h, out).expect("matching shapes")
}

/// Spherical emitter of radiance `c` plus a constant sky of radiance `a`.
pub fn render_parametric(
    scene: &Scene,
    light: &ParametricLight,
    settings: &RenderSettings,
) -> Result<RenderedImage> {
    let basis = ParametricBasis::render(scene, SphereEmitter::from(light), settings)?;
    Ok(basis.combine(light.color(), light.ambient()))
}

/// Two-pass render: the spherical emitter, then the textured cuboid with
/// the light's cone blacked out so the light is not counted twice. The
/// texture is expected to be rescaled to the fitted ambient already.
pub fn render_combined(
    scene: &Scene,
    light: &ParametricLight,
    textured: &TexturedCuboid,
    settings: &RenderSettings,
) -> Result<RenderedImage> {
    let emitter = render_pass(scene, Pass::Sphere(SphereEmitter::from(light)), settings)?;
    let masked = textured.zero_cone(light.direction().vec(), light.angular_radius());
    let texture = render_pass(scene, Pass::Texture(&masked), settings)?;
    let raster = weighted_sum(&[
        (emitter.raster(), light.color()),
        (texture.raster(), [1.0; 3]),
    ]);
    Ok(RenderedImage::new(raster, settings.spp, settings.seed))
}

/// Pixels whose primary ray hits one of the scene's spheres.
pub fn object_mask(scene: &Scene, width: usize, height: usize) -> Vec<bool> {
    integrator::object_mask(scene, width, height)
}

/// Differential compositing: object pixels come from `with_obj`; elsewhere
/// the background receives the change the objects cause on the local scene
/// (shadows), clipped at zero.
pub fn composite_differential(
    background: &Raster,
    with_obj: &Raster,
    without_obj: &Raster,
    mask: &[bool],
) -> Result<Raster> {
    background.same_shape(with_obj)?;
    background.same_shape(without_obj)?;
    if mask.len() != background.pixels().len() {
        return Err(Error::ResolutionMismatch(
            background.width(),
            background.height(),
            mask.len(),
            1,
        ));
    }
    let pixels = background
        .pixels()
        .iter()
        .zip(with_obj.pixels())
        .zip(without_obj.pixels())
        .zip(mask)
        .map(|(((&bg, &with), &without), &m)| {
            if m {
                with
            } else {
                std::array::from_fn(|c| (bg[c] + (with[c] - without[c])).max(0.0))
            }
        })
        .collect();
    Raster::new(background.width(), background.height(), pixels)
}

pub use integrator::MAX_BOUNCES;
