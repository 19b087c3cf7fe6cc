//! Equirectangular (latitude-longitude) environment maps.
//!
//! Conventions: y is up, longitude 0 looks down -z, column 0 starts at
//! longitude -pi and pixel centers sit at half-integer offsets. Continuous
//! pixel coordinates put the center of pixel `(u, v)` at `(u, v)`.

mod direction;
mod exposure;
pub mod hdr;
pub mod pfm;
pub mod png;
mod projection;

pub(crate) use direction::angle_between;
pub use direction::Direction;
pub use exposure::{percentile, reexpose_percentile, tonemap_ldr, DEFAULT_GAMMA};
pub(crate) use exposure::tonemap_raster;
pub use projection::{
    direction_at, direction_to_pixel, pixel_to_direction, row_bounds, solid_angle_of_row,
};

use std::path::Path;

use glam::DVec3;

use crate::error::{Error, Result};
use crate::raster::{Raster, Rgb};

/// Linear-radiance spherical image with `width == 2 * height`.
#[derive(Clone, Debug, PartialEq)]
pub struct EquirectImage {
    raster: Raster,
    is_hdr: bool,
}

impl EquirectImage {
    pub fn new(raster: Raster, is_hdr: bool) -> Result<Self> {
        if raster.width() != 2 * raster.height() {
            return Err(Error::invalid(format!(
                "equirectangular image must be 2H x H, got {}x{}",
                raster.width(),
                raster.height()
            )));
        }
        if !raster.all_finite_non_negative() {
            return Err(Error::invalid(
                "equirectangular pixels must be finite and non-negative",
            ));
        }
        Ok(EquirectImage { raster, is_hdr })
    }

    pub fn filled(height: usize, value: Rgb, is_hdr: bool) -> Result<Self> {
        Self::new(Raster::filled(2 * height, height, value), is_hdr)
    }

    /// Builds an image by evaluating `f` at every pixel-center direction.
    pub fn from_directions(
        height: usize,
        is_hdr: bool,
        mut f: impl FnMut(DVec3) -> Rgb,
    ) -> Result<Self> {
        let width = 2 * height;
        let raster = Raster::from_fn(width, height, |u, v| {
            f(direction_at(u as f64, v as f64, width, height))
        });
        Self::new(raster, is_hdr)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.raster.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.raster.height()
    }

    #[inline]
    pub fn is_hdr(&self) -> bool {
        self.is_hdr
    }

    #[inline]
    pub fn raster(&self) -> &Raster {
        &self.raster
    }

    pub fn into_raster(self) -> Raster {
        self.raster
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Rgb {
        self.raster.get(u, v)
    }

    /// Unit direction through the center of pixel `(u, v)`.
    #[inline]
    pub fn direction(&self, u: usize, v: usize) -> DVec3 {
        direction_at(u as f64, v as f64, self.width(), self.height())
    }

    pub fn solid_angle(&self, v: usize) -> f64 {
        solid_angle_of_row(v, self.width(), self.height()).expect("row in range")
    }

    /// Bilinear lookup at continuous pixel coordinates; wraps horizontally,
    /// clamps vertically.
    pub fn sample_bilinear(&self, u: f64, v: f64) -> [f64; 3] {
        let w = self.width() as i64;
        let h = self.height() as i64;
        let v = v.clamp(0.0, (h - 1) as f64);
        let u0 = u.floor();
        let v0 = v.floor();
        let fu = u - u0;
        let fv = v - v0;
        let u0 = u0 as i64;
        let v0 = v0 as i64;
        let v1 = (v0 + 1).min(h - 1);
        let wrap = |x: i64| x.rem_euclid(w) as usize;
        let p00 = self.get(wrap(u0), v0 as usize);
        let p10 = self.get(wrap(u0 + 1), v0 as usize);
        let p01 = self.get(wrap(u0), v1 as usize);
        let p11 = self.get(wrap(u0 + 1), v1 as usize);
        let mut out = [0.0; 3];
        for c in 0..3 {
            let top = p00[c] as f64 * (1.0 - fu) + p10[c] as f64 * fu;
            let bottom = p01[c] as f64 * (1.0 - fu) + p11[c] as f64 * fu;
            out[c] = top * (1.0 - fv) + bottom * fv;
        }
        out
    }

    /// Bilinear radiance along a (not necessarily normalized) direction.
    pub fn lookup(&self, dir: DVec3) -> [f64; 3] {
        let (u, v) = projection::continuous_pixel(dir, self.width(), self.height());
        self.sample_bilinear(u, v)
    }

    /// Nearest-pixel radiance along a direction.
    pub fn lookup_nearest(&self, dir: DVec3) -> Rgb {
        let (u, v) = projection::continuous_pixel(dir, self.width(), self.height());
        let w = self.width() as i64;
        let ui = (u.round() as i64).rem_euclid(w) as usize;
        let vi = (v.round().max(0.0) as usize).min(self.height() - 1);
        self.get(ui, vi)
    }

    /// Solid-angle-weighted mean per channel.
    pub fn weighted_channel_means(&self) -> [f64; 3] {
        let mut acc = [0.0; 3];
        for v in 0..self.height() {
            let omega = self.solid_angle(v);
            for u in 0..self.width() {
                let p = self.get(u, v);
                for c in 0..3 {
                    acc[c] += p[c] as f64 * omega;
                }
            }
        }
        acc.map(|a| a / (4.0 * std::f64::consts::PI))
    }

    pub fn scaled(&self, factor: [f64; 3]) -> EquirectImage {
        EquirectImage {
            raster: self.raster.scaled(factor),
            is_hdr: self.is_hdr,
        }
    }

    /// Copy with every pixel where `keep` is false set to black.
    pub fn masked(&self, mut keep: impl FnMut(usize, usize) -> bool) -> EquirectImage {
        let w = self.width();
        let raster = Raster::from_fn(w, self.height(), |u, v| {
            if keep(u, v) {
                self.get(u, v)
            } else {
                [0.0; 3]
            }
        });
        EquirectImage {
            raster,
            is_hdr: self.is_hdr,
        }
    }

    /// Shifts columns right by `k` with wrap-around (an azimuth rotation).
    pub fn roll_columns(&self, k: i64) -> EquirectImage {
        let w = self.width() as i64;
        let raster = Raster::from_fn(self.width(), self.height(), |u, v| {
            self.get((u as i64 - k).rem_euclid(w) as usize, v)
        });
        EquirectImage {
            raster,
            is_hdr: self.is_hdr,
        }
    }

    /// Loads a PFM or Radiance-HDR file, chosen by magic bytes.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path.as_ref())?;
        let raster = if bytes.starts_with(b"#?") {
            hdr::decode(&bytes)?
        } else {
            pfm::decode(&bytes)?
        };
        Self::new(raster, true)
    }
}

/// Continuous pixel coordinates of a non-zero point or direction.
#[inline]
pub fn projection_pixel(p: DVec3, width: usize, height: usize) -> (f64, f64) {
    projection::continuous_pixel(p, width, height)
}

impl EquirectImage {
    /// Gamma-encoded 8-bit PNG of the image, clipped at 1.
    pub fn preview_png(&self) -> Result<Vec<u8>> {
        png::encode_rgb(&exposure::tonemap_raster(&self.raster, DEFAULT_GAMMA)?)
    }
}
