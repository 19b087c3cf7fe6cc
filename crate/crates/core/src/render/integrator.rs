use std::f64::consts::FRAC_1_PI;

use glam::DVec3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::sampling::{
    cosine_hemisphere, latin_square, phong_lobe, pixel_rng, uniform_cone, EnvSampler,
};
use super::scene::{intersect_sphere, Hit, Material, Ray, Scene, Surface};
use super::{Pass, RenderSettings, SphereEmitter};
use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::scenegeom::TexturedCuboid;

/// Specular bounces followed before a path is dropped.
pub const MAX_BOUNCES: usize = 2;

const SHADOW_OFFSET: f64 = 1e-6;
/// Inward offset so floor points land strictly inside the room box.
const TEXTURE_OFFSET: f64 = 1e-4;

type Rgb64 = [f64; 3];

#[inline]
fn add(acc: &mut Rgb64, x: Rgb64) {
    for c in 0..3 {
        acc[c] += x[c];
    }
}

#[inline]
fn scale(x: Rgb64, k: f64) -> Rgb64 {
    x.map(|v| v * k)
}

pub(super) fn render(scene: &Scene, pass: Pass<'_>, settings: &RenderSettings) -> Result<Raster> {
    let (w, h) = (settings.width, settings.height);
    let mut pixels = vec![[0.0f32; 3]; w * h];
    let black = matches!(pass, Pass::Environment(s) if s.is_black());
    if !black {
        pixels
            .par_chunks_mut(w)
            .enumerate()
            .try_for_each(|(v, row)| {
                if settings.cancel.as_ref().is_some_and(|c| c.is_cancelled()) {
                    return Err(Error::Cancelled);
                }
                for (u, px) in row.iter_mut().enumerate() {
                    *px = render_pixel(scene, pass, settings, u, v).map(|x| x as f32);
                }
                Ok(())
            })?;
    }
    if settings.cancel.as_ref().is_some_and(|c| c.is_cancelled()) {
        return Err(Error::Cancelled);
    }
    Raster::new(w, h, pixels)
}

pub(super) fn object_mask(scene: &Scene, width: usize, height: usize) -> Vec<bool> {
    (0..width * height)
        .map(|i| {
            let ray = scene.primary_ray(i % width, i / width, width, height);
            scene
                .intersect(&ray)
                .is_some_and(|hit| matches!(hit.surface, Surface::Sphere(_)))
        })
        .collect()
}

fn render_pixel(scene: &Scene, pass: Pass<'_>, settings: &RenderSettings, u: usize, v: usize) -> Rgb64 {
    let (w, h) = (settings.width, settings.height);
    let ray = scene.primary_ray(u, v, w, h);
    let Some(hit) = scene.intersect(&ray) else {
        return escaped(pass, &ray, true);
    };
    let mut rng = pixel_rng(settings.seed, pass.stream(), (v * w + u) as u64);
    let spp = settings.spp;

    if let (Pass::Sphere(emitter), Material::Diffuse { albedo }) = (pass, hit.material) {
        match plan_sphere(scene, &emitter, &hit) {
            SpherePlan::Exact(value) => return [albedo * value; 3],
            SpherePlan::Sampled { occluders, plane } => {
                let mut sum = 0.0;
                for s in latin_square(spp, &mut rng) {
                    sum += sphere_sample(scene, &emitter, &hit, s, Some((&occluders, plane)));
                }
                return [albedo * sum / spp as f64; 3];
            }
        }
    }

    let mut sum = [0.0; 3];
    for s in latin_square(spp, &mut rng) {
        add(&mut sum, shade(scene, pass, &hit, ray.dir, s, &mut rng, 0));
    }
    scale(sum, 1.0 / spp as f64)
}

/// Radiance of the pass's emitter along a ray that left the scene.
fn escaped(pass: Pass<'_>, ray: &Ray, primary: bool) -> Rgb64 {
    match pass {
        Pass::Environment(sampler) => sampler.radiance(ray.dir),
        Pass::Ambient => [1.0; 3],
        Pass::Texture(tc) => tc.radiance(ray.origin, ray.dir),
        Pass::Sphere(e) => {
            // The emitter is invisible to camera rays so that it cannot hide
            // the probe objects in top-down views.
            if !primary && intersect_sphere(e.center, e.radius, ray).is_some() {
                [1.0; 3]
            } else {
                [0.0; 3]
            }
        }
    }
}

fn reflect(d: DVec3, n: DVec3) -> DVec3 {
    d - n * (2.0 * d.dot(n))
}

fn shade(
    scene: &Scene,
    pass: Pass<'_>,
    hit: &Hit,
    incoming: DVec3,
    s: [f64; 2],
    rng: &mut ChaCha8Rng,
    depth: usize,
) -> Rgb64 {
    match hit.material {
        Material::Diffuse { albedo } => scale(direct(scene, pass, hit, s), albedo),
        Material::Mirror { tint } => {
            if depth >= MAX_BOUNCES {
                return [0.0; 3];
            }
            let dir = reflect(incoming, hit.normal);
            scale(trace(scene, pass, hit.point, hit.normal, dir, rng, depth + 1), tint)
        }
        Material::Glossy { albedo, exponent } => {
            if depth >= MAX_BOUNCES {
                return [0.0; 3];
            }
            let dir = phong_lobe(reflect(incoming, hit.normal), exponent, s);
            if dir.dot(hit.normal) <= 0.0 {
                return [0.0; 3];
            }
            scale(trace(scene, pass, hit.point, hit.normal, dir, rng, depth + 1), albedo)
        }
    }
}

fn trace(
    scene: &Scene,
    pass: Pass<'_>,
    from: DVec3,
    normal: DVec3,
    dir: DVec3,
    rng: &mut ChaCha8Rng,
    depth: usize,
) -> Rgb64 {
    let ray = Ray {
        origin: from + normal * SHADOW_OFFSET,
        dir,
    };
    let hit = scene.intersect(&ray);
    if let Pass::Sphere(e) = pass {
        if let Some(t) = intersect_sphere(e.center, e.radius, &ray) {
            if hit.map_or(true, |h| t < h.t) {
                return [1.0; 3];
            }
        }
        if hit.is_none() {
            return [0.0; 3];
        }
    }
    match hit {
        Some(h) => {
            let s = [rng.random(), rng.random()];
            shade(scene, pass, &h, dir, s, rng, depth)
        }
        None => escaped(pass, &ray, false),
    }
}

/// One-sample estimate of `(1/pi) * integral of L_in * cos` at a diffuse
/// point.
fn direct(scene: &Scene, pass: Pass<'_>, hit: &Hit, s: [f64; 2]) -> Rgb64 {
    let n = hit.normal;
    let origin = hit.point + n * SHADOW_OFFSET;
    match pass {
        Pass::Environment(sampler) => env_sample(scene, sampler, origin, n, s),
        Pass::Sphere(e) => [sphere_sample(scene, &e, hit, s, None); 3],
        Pass::Ambient => {
            let dir = cosine_hemisphere(n, s);
            if scene.occluded(&Ray { origin, dir }, f64::INFINITY) {
                [0.0; 3]
            } else {
                [1.0; 3]
            }
        }
        Pass::Texture(tc) => texture_sample(scene, tc, hit, s),
    }
}

/// Environment lighting: the constant floor by cosine sampling, the rest
/// in proportion to residual luminance times solid angle.
fn env_sample(scene: &Scene, sampler: &EnvSampler, origin: DVec3, n: DVec3, s: [f64; 2]) -> Rgb64 {
    let mut out = [0.0; 3];
    let floor = sampler.floor();
    if floor != [0.0; 3] {
        let dir = cosine_hemisphere(n, s);
        if !scene.occluded(&Ray { origin, dir }, f64::INFINITY) {
            out = floor;
        }
    }
    if !sampler.has_residual() {
        return out;
    }
    let dir = sampler.sample(s).dir;
    let cos = dir.dot(n);
    if cos <= 0.0 || scene.occluded(&Ray { origin, dir }, f64::INFINITY) {
        return out;
    }
    let residual = sampler.residual(sampler.radiance(dir));
    let pdf = sampler.pdf(residual);
    if pdf > 0.0 {
        add(&mut out, scale(residual, cos * FRAC_1_PI / pdf));
    }
    out
}

fn texture_sample(scene: &Scene, tc: &TexturedCuboid, hit: &Hit, s: [f64; 2]) -> Rgb64 {
    let n = hit.normal;
    let dir = cosine_hemisphere(n, s);
    let origin = hit.point + n * SHADOW_OFFSET;
    if scene.occluded(&Ray { origin, dir }, f64::INFINITY) {
        return [0.0; 3];
    }
    tc.radiance(hit.point + n * TEXTURE_OFFSET, dir)
}

enum SpherePlan {
    /// Closed form `sin^2(alpha) cos(theta)`: nothing can block the emitter
    /// and it sits wholly above the local horizon.
    Exact(f64),
    /// Occluders whose angular extent overlaps the emitter's cone.
    Sampled { occluders: Vec<usize>, plane: bool },
}

fn plan_sphere(scene: &Scene, e: &SphereEmitter, hit: &Hit) -> SpherePlan {
    let to_light = e.center - hit.point;
    let dist = to_light.length();
    if e.radius <= 0.0 {
        return SpherePlan::Exact(0.0);
    }
    if dist <= e.radius {
        return SpherePlan::Exact(1.0);
    }
    let axis = to_light / dist;
    let sin_a = e.radius / dist;
    let alpha = sin_a.asin();
    let cos_c = axis.dot(hit.normal);
    if cos_c <= -sin_a {
        return SpherePlan::Exact(0.0);
    }
    let own = match hit.surface {
        Surface::Sphere(i) => Some(i),
        Surface::Plane => None,
    };
    let mut occluders = Vec::new();
    for (j, sp) in scene.spheres.iter().enumerate() {
        if Some(j) == own {
            continue;
        }
        let to_c = DVec3::from(sp.center) - hit.point;
        let l = to_c.length();
        if l - sp.radius >= dist {
            continue;
        }
        if l <= sp.radius {
            occluders.push(j);
            continue;
        }
        let beta = (sp.radius / l).asin();
        let gamma = crate::envmap::angle_between(axis, to_c);
        if gamma < alpha + beta {
            occluders.push(j);
        }
    }
    let plane = own.is_some()
        && scene
            .plane
            .is_some_and(|p| e.center.y - e.radius <= p.y + SHADOW_OFFSET);
    if cos_c >= sin_a && occluders.is_empty() && !plane {
        SpherePlan::Exact(sin_a * sin_a * cos_c)
    } else {
        SpherePlan::Sampled { occluders, plane }
    }
}

/// Solid-angle sampling of the emitter's cone. With `restrict`, shadow rays
/// only test the listed spheres (and the plane when flagged).
fn sphere_sample(
    scene: &Scene,
    e: &SphereEmitter,
    hit: &Hit,
    s: [f64; 2],
    restrict: Option<(&[usize], bool)>,
) -> f64 {
    let to_light = e.center - hit.point;
    let dist2 = to_light.length_squared();
    let r2 = e.radius * e.radius;
    if e.radius <= 0.0 {
        return 0.0;
    }
    if dist2 <= r2 {
        return 1.0;
    }
    let dist = dist2.sqrt();
    let axis = to_light / dist;
    let sin2 = r2 / dist2;
    let one_minus_cos_max = sin2 / (1.0 + (1.0 - sin2).sqrt());
    let dir = uniform_cone(axis, one_minus_cos_max, s);
    let cos = dir.dot(hit.normal);
    if cos <= 0.0 {
        return 0.0;
    }
    let ray = Ray {
        origin: hit.point + hit.normal * SHADOW_OFFSET,
        dir,
    };
    let t_light = intersect_sphere(e.center, e.radius, &ray).unwrap_or(dist);
    let blocked = match restrict {
        None => scene.occluded(&ray, t_light),
        Some((list, plane)) => {
            list.iter().any(|&j| {
                let sp = &scene.spheres[j];
                intersect_sphere(DVec3::from(sp.center), sp.radius, &ray).is_some_and(|t| t < t_light)
            }) || (plane
                && scene.plane.is_some_and(|p| {
                    let t = (p.y - ray.origin.y) / ray.dir.y;
                    ray.dir.y != 0.0 && t > super::scene::RAY_EPS && t < t_light
                }))
        }
    };
    if blocked {
        0.0
    } else {
        // cos * cone solid angle / pi
        2.0 * cos * one_minus_cos_max
    }
}
