use std::f64::consts::{PI, TAU};

use glam::DVec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envmap::{row_bounds, EquirectImage};
use crate::raster::luminance;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent generator for one pixel of one lighting pass, so results do
/// not depend on scheduling.
pub(crate) fn pixel_rng(seed: u64, stream: u64, pixel: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(seed ^ stream.rotate_left(48)) ^ pixel))
}

/// `n` stratified 2D points in the unit square: one per row stratum, with
/// columns shuffled (a Latin hypercube).
pub(crate) fn latin_square(n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let mut cols: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        cols.swap(i, j);
    }
    let inv = 1.0 / n as f64;
    (0..n)
        .map(|i| {
            [
                (i as f64 + rng.random::<f64>()) * inv,
                (cols[i] as f64 + rng.random::<f64>()) * inv,
            ]
        })
        .collect()
}

/// Orthonormal basis with `w` as third axis.
pub(crate) fn basis(w: DVec3) -> (DVec3, DVec3) {
    let a = if w.x.abs() > 0.9 { DVec3::Y } else { DVec3::X };
    let u = w.cross(a).normalize();
    (u, w.cross(u))
}

pub(crate) fn cosine_hemisphere(n: DVec3, s: [f64; 2]) -> DVec3 {
    let (u, v) = basis(n);
    let r = s[0].sqrt();
    let phi = TAU * s[1];
    let z = (1.0 - s[0]).max(0.0).sqrt();
    u * (r * phi.cos()) + v * (r * phi.sin()) + n * z
}

/// Uniform direction within the cone of half-angle with cosine `cos_max`.
pub(crate) fn uniform_cone(axis: DVec3, one_minus_cos_max: f64, s: [f64; 2]) -> DVec3 {
    let (u, v) = basis(axis);
    let one_minus_cos = s[0] * one_minus_cos_max;
    let cos = 1.0 - one_minus_cos;
    let sin = (one_minus_cos * (2.0 - one_minus_cos)).max(0.0).sqrt();
    let phi = TAU * s[1];
    u * (sin * phi.cos()) + v * (sin * phi.sin()) + axis * cos
}

/// Phong lobe of exponent `e` around `axis`, sampled proportionally to
/// `cos^e`.
pub(crate) fn phong_lobe(axis: DVec3, exponent: f64, s: [f64; 2]) -> DVec3 {
    let (u, v) = basis(axis);
    let cos = s[0].powf(1.0 / (exponent + 1.0));
    let sin = (1.0 - cos * cos).max(0.0).sqrt();
    let phi = TAU * s[1];
    u * (sin * phi.cos()) + v * (sin * phi.sin()) + axis * cos
}

fn mean3(x: [f64; 3]) -> f64 {
    (x[0] + x[1] + x[2]) / 3.0
}

/// Splits an environment into a constant floor (the per-channel minimum)
/// and a non-negative residual. The residual is importance sampled in
/// proportion to luminance times solid angle: a row is drawn from the
/// marginal, then a column from that row, each by continuous inversion so
/// stratified inputs stay stratified on the sphere.
#[derive(Clone, Debug)]
pub struct EnvSampler {
    env: EquirectImage,
    floor: [f64; 3],
    /// Cumulative row weights.
    rows: Vec<f64>,
    /// Cumulative weights within each row, row-major.
    cols: Vec<f64>,
    total: f64,
}

pub(crate) struct EnvSample {
    pub dir: DVec3,
}

/// Index of the bin containing `target` in a cumulative table, and the
/// position within that bin in [0, 1].
fn invert(cdf: &[f64], target: f64) -> (usize, f64) {
    let i = cdf.partition_point(|&c| c <= target).min(cdf.len() - 1);
    let before = if i == 0 { 0.0 } else { cdf[i - 1] };
    let width = cdf[i] - before;
    let f = if width > 0.0 {
        ((target - before) / width).clamp(0.0, 1.0)
    } else {
        0.5
    };
    (i, f)
}

impl EnvSampler {
    pub fn new(env: &EquirectImage) -> EnvSampler {
        let (w, h) = (env.width(), env.height());
        let mut floor = [f64::INFINITY; 3];
        for p in env.raster().pixels() {
            for c in 0..3 {
                floor[c] = floor[c].min(p[c] as f64);
            }
        }
        let floor = floor.map(|f| if f.is_finite() { f.max(0.0) } else { 0.0 });
        let floor_lum = mean3(floor);
        let mut rows = Vec::with_capacity(h);
        let mut cols = Vec::with_capacity(w * h);
        let mut total = 0.0;
        for v in 0..h {
            let omega = env.solid_angle(v);
            let mut acc = 0.0;
            for u in 0..w {
                acc += (luminance(env.get(u, v)) - floor_lum).max(0.0) * omega;
                cols.push(acc);
            }
            total += acc;
            rows.push(total);
        }
        EnvSampler {
            env: env.clone(),
            floor,
            rows,
            cols,
            total,
        }
    }

    pub fn env(&self) -> &EquirectImage {
        &self.env
    }

    pub fn is_black(&self) -> bool {
        !(self.total > 0.0) && self.floor == [0.0; 3]
    }

    /// Radiance present in every direction.
    pub(crate) fn floor(&self) -> [f64; 3] {
        self.floor
    }

    /// Whether anything remains above the floor to importance sample.
    pub(crate) fn has_residual(&self) -> bool {
        self.total > 0.0
    }

    /// Maps a point of the unit square to a direction. Zero-weight pixels
    /// are never selected.
    pub(crate) fn sample(&self, s: [f64; 2]) -> EnvSample {
        let (w, h) = (self.env.width(), self.env.height());
        let (v, fv) = invert(&self.rows, s[0] * self.total);
        let row = &self.cols[v * w..(v + 1) * w];
        let (u, fu) = invert(row, s[1] * row[w - 1]);
        let (top, bottom) = row_bounds(v, h);
        let theta = TAU * (u as f64 + fu) / w as f64 - PI;
        let sin_phi = top.sin() - fv * (top.sin() - bottom.sin());
        let cos_phi = (1.0 - sin_phi * sin_phi).max(0.0).sqrt();
        EnvSample {
            dir: DVec3::new(cos_phi * theta.sin(), sin_phi, -cos_phi * theta.cos()),
        }
    }

    /// Density per steradian of `sample` for a direction whose pixel has
    /// the given residual radiance.
    pub(crate) fn pdf(&self, residual: [f64; 3]) -> f64 {
        if self.has_residual() {
            mean3(residual) / self.total
        } else {
            0.0
        }
    }

    pub(crate) fn residual(&self, radiance: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|c| (radiance[c] - self.floor[c]).max(0.0))
    }

    /// Nearest-pixel radiance, matching what `sample` integrates.
    pub(crate) fn radiance(&self, dir: DVec3) -> [f64; 3] {
        self.env.lookup_nearest(dir).map(|c| c as f64)
    }
}
