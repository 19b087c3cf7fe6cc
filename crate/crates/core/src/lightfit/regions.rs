use std::collections::VecDeque;

use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::envmap::{percentile, Direction, EquirectImage};
use crate::error::{Error, Result};
use crate::raster::luminance;

/// Connected set of bright panorama pixels treated as one light source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightRegion {
    /// Member pixels as `[u, v]`.
    pub pixels: Vec<[usize; 2]>,
    pub centroid: Direction,
    /// Solid-angle-weighted mean radiance.
    pub mean_radiance: [f64; 3],
    /// Major and minor half-angles (radians) of the fitted ellipse.
    pub axes: [f64; 2],
}

impl LightRegion {
    /// Builds the region statistics for an arbitrary non-empty pixel set.
    pub fn from_pixels(img: &EquirectImage, pixels: Vec<[usize; 2]>) -> Result<Self> {
        if pixels.is_empty() {
            return Err(Error::Detection("empty light region".into()));
        }
        let mut sum_dir = DVec3::ZERO;
        let mut sum_rad = [0.0; 3];
        let mut total = 0.0;
        for &[u, v] in &pixels {
            let omega = img.solid_angle(v);
            sum_dir += img.direction(u, v) * omega;
            let p = img.get(u, v);
            for c in 0..3 {
                sum_rad[c] += p[c] as f64 * omega;
            }
            total += omega;
        }
        let centroid = Direction::from_vec(sum_dir).or_else(|_| {
            let [u, v] = pixels[0];
            Direction::from_vec(img.direction(u, v))
        })?;
        let axes = ellipse_axes(img, &pixels, centroid.vec());
        Ok(LightRegion {
            pixels,
            centroid,
            mean_radiance: sum_rad.map(|s| s / total),
            axes,
        })
    }

    /// Mean of the ellipse half-angles, the light's angular radius.
    pub fn angular_size(&self) -> f64 {
        0.5 * (self.axes[0] + self.axes[1])
    }

    pub fn solid_angle(&self, img: &EquirectImage) -> f64 {
        self.pixels.iter().map(|&[_, v]| img.solid_angle(v)).sum()
    }

    pub fn mask(&self, width: usize, height: usize) -> Vec<bool> {
        let mut m = vec![false; width * height];
        for &[u, v] in &self.pixels {
            m[v * width + u] = true;
        }
        m
    }

    /// Copy of `img` that keeps only this region's pixels.
    pub fn isolate(&self, img: &EquirectImage) -> EquirectImage {
        let m = self.mask(img.width(), img.height());
        img.masked(|u, v| m[v * img.width() + u])
    }
}

/// Mean squared angular distance from the center of a uniformly weighted
/// spherical cap of half-angle `a`.
fn cap_second_moment(a: f64) -> f64 {
    let (s, c) = a.sin_cos();
    if a < 1e-3 {
        return a * a / 2.0;
    }
    (-a * a * c + 2.0 * a * s + 2.0 * c - 2.0) / (1.0 - c)
}

/// Half-angle whose cap has per-axis variance `lambda` (half the second
/// moment, since the projection is isotropic).
fn cap_half_angle(lambda: f64) -> f64 {
    let target = 2.0 * lambda.max(0.0);
    let (mut lo, mut hi) = (0.0f64, std::f64::consts::PI);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if cap_second_moment(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Weighted PCA of member directions in an azimuthal-equidistant projection
/// centered on `center`; each principal variance is converted back to the
/// half-angle of a cap with the same spread.
fn ellipse_axes(img: &EquirectImage, pixels: &[[usize; 2]], center: DVec3) -> [f64; 2] {
    let (e1, e2) = crate::render::tangent_basis(center);
    let (mut sxx, mut sxy, mut syy, mut total) = (0.0, 0.0, 0.0, 0.0);
    for &[u, v] in pixels {
        let d = img.direction(u, v);
        let omega = img.solid_angle(v);
        let (x, y) = (d.dot(e1), d.dot(e2));
        let r = x.hypot(y);
        let psi = r.atan2(d.dot(center));
        let (px, py) = if r > 0.0 { (psi * x / r, psi * y / r) } else { (0.0, 0.0) };
        sxx += omega * px * px;
        sxy += omega * px * py;
        syy += omega * py * py;
        total += omega;
    }
    let (a, b, c) = (sxx / total, sxy / total, syy / total);
    let mid = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    [cap_half_angle(mid + rad), cap_half_angle(mid - rad)]
}

fn neighbors(u: usize, v: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    (-1i64..=1)
        .flat_map(|dv| (-1i64..=1).map(move |du| (du, dv)))
        .filter(|&(du, dv)| du != 0 || dv != 0)
        .filter_map(move |(du, dv)| {
            let vv = v as i64 + dv;
            if vv < 0 || vv >= h as i64 {
                return None;
            }
            Some(((u as i64 + du).rem_euclid(w as i64) as usize, vv as usize))
        })
}

/// Breadth-first 8-connected flood fill with horizontal wrap.
fn flood(
    seed: (usize, usize),
    w: usize,
    h: usize,
    visited: &mut [bool],
    accept: impl Fn(usize, usize) -> bool,
) -> Vec<[usize; 2]> {
    let mut out = Vec::new();
    let mut queue = VecDeque::from([seed]);
    visited[seed.1 * w + seed.0] = true;
    while let Some((u, v)) = queue.pop_front() {
        out.push([u, v]);
        for (nu, nv) in neighbors(u, v, w, h) {
            let i = nv * w + nu;
            if !visited[i] && accept(nu, nv) {
                visited[i] = true;
                queue.push_back((nu, nv));
            }
        }
    }
    out
}

pub const DEFAULT_MAX_REGIONS: usize = 5;
/// Neighbors join a region when at least this fraction of the seed's
/// luminance.
pub const GROW_FRACTION: f64 = 0.5;
/// Detection stops once the brightest remaining pixel is below this multiple
/// of the median luminance.
pub const STOP_MEDIAN_FACTOR: f64 = 5.0;

/// Region growing from the brightest remaining pixel, up to `n` regions.
pub fn detect_light_regions(hdr: &EquirectImage, n: usize) -> Vec<LightRegion> {
    let (w, h) = (hdr.width(), hdr.height());
    let lum: Vec<f64> = hdr.raster().pixels().iter().map(|&p| luminance(p)).collect();
    let median = percentile(&mut lum.clone(), 50.0).unwrap_or(0.0);
    let mut taken = vec![false; w * h];
    let mut order: Vec<usize> = (0..w * h).collect();
    order.sort_by(|&a, &b| lum[b].total_cmp(&lum[a]).then(a.cmp(&b)));
    let mut next = 0;
    let mut regions = Vec::new();
    while regions.len() < n {
        while next < order.len() && taken[order[next]] {
            next += 1;
        }
        let Some(&seed) = order.get(next) else { break };
        let seed_lum = lum[seed];
        if !(seed_lum > 0.0) || seed_lum < STOP_MEDIAN_FACTOR * median {
            break;
        }
        let threshold = GROW_FRACTION * seed_lum;
        let pixels = flood((seed % w, seed / w), w, h, &mut taken, |u, v| {
            lum[v * w + u] >= threshold
        });
        regions.push(LightRegion::from_pixels(hdr, pixels).expect("seed is a member"));
    }
    regions
}

/// Largest 8-connected component in the upper half whose luminance exceeds
/// the 98th percentile of the upper half.
pub fn detect_bright_ldr(pano: &EquirectImage) -> Result<LightRegion> {
    let (w, h) = (pano.width(), pano.height());
    let upper = h / 2;
    let lum = |u: usize, v: usize| luminance(pano.get(u, v));
    let mut values: Vec<f64> = (0..upper)
        .flat_map(|v| (0..w).map(move |u| (u, v)))
        .map(|(u, v)| lum(u, v))
        .collect();
    let threshold = percentile(&mut values, 98.0)
        .ok_or_else(|| Error::Detection("panorama has no upper half".into()))?;
    let mut visited = vec![false; w * h];
    let mut best: Option<Vec<[usize; 2]>> = None;
    for v in 0..upper {
        for u in 0..w {
            if visited[v * w + u] || lum(u, v) <= threshold {
                continue;
            }
            let comp = flood((u, v), w, h, &mut visited, |uu, vv| {
                vv < upper && lum(uu, vv) > threshold
            });
            if best.as_ref().map_or(true, |b| comp.len() > b.len()) {
                best = Some(comp);
            }
        }
    }
    let pixels = best.ok_or_else(|| {
        Error::Detection("no pixel in the upper half exceeds the 98th percentile".into())
    })?;
    LightRegion::from_pixels(pano, pixels)
}
