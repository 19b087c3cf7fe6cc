use std::f64::consts::{FRAC_PI_2, PI, TAU};

use glam::DVec3;

use super::Direction;
use crate::error::{Error, Result};

/// Direction through the center of pixel `(u, v)`.
pub fn pixel_to_direction(u: usize, v: usize, width: usize, height: usize) -> Result<Direction> {
    if u >= width || v >= height {
        return Err(Error::invalid(format!(
            "pixel ({u}, {v}) outside {width}x{height}"
        )));
    }
    Ok(Direction::from_vec(direction_at(u as f64, v as f64, width, height))
        .expect("unit by construction"))
}

/// Direction at continuous pixel coordinates (pixel centers at integers).
#[inline]
pub fn direction_at(u: f64, v: f64, width: usize, height: usize) -> DVec3 {
    let lon = TAU * (u + 0.5) / width as f64 - PI;
    let lat = FRAC_PI_2 - PI * (v + 0.5) / height as f64;
    let (sin_lat, cos_lat) = lat.sin_cos();
    let (sin_lon, cos_lon) = lon.sin_cos();
    DVec3::new(cos_lat * sin_lon, sin_lat, -cos_lat * cos_lon)
}

/// Continuous pixel coordinates of `d`; `u` wraps into `[-0.5, width - 0.5)`.
pub fn direction_to_pixel(d: DVec3, width: usize, height: usize) -> Result<(f64, f64)> {
    if !(d.length() > 0.0) || !d.is_finite() {
        return Err(Error::invalid("zero or non-finite direction"));
    }
    Ok(continuous_pixel(d, width, height))
}

#[inline]
pub(crate) fn continuous_pixel(d: DVec3, width: usize, height: usize) -> (f64, f64) {
    let horiz = d.x.hypot(d.z);
    let lon = if horiz < 1e-15 { 0.0 } else { d.x.atan2(-d.z) };
    let lat = d.y.atan2(horiz);
    let w = width as f64;
    let mut u = (lon + PI) * w / TAU - 0.5;
    if u >= w - 0.5 {
        u -= w;
    } else if u < -0.5 {
        u += w;
    }
    let v = (FRAC_PI_2 - lat) * height as f64 / PI - 0.5;
    (u, v)
}

/// Latitudes `(top, bottom)` bounding row `v`.
#[inline]
pub fn row_bounds(v: usize, height: usize) -> (f64, f64) {
    let h = height as f64;
    (
        FRAC_PI_2 - PI * v as f64 / h,
        FRAC_PI_2 - PI * (v + 1) as f64 / h,
    )
}

/// Solid angle of one pixel in row `v` (constant along the row).
pub fn solid_angle_of_row(v: usize, width: usize, height: usize) -> Result<f64> {
    if v >= height || width == 0 {
        return Err(Error::invalid(format!("row {v} outside image of height {height}")));
    }
    let (top, bottom) = row_bounds(v, height);
    Ok(TAU / width as f64 * (top.sin() - bottom.sin()))
}
