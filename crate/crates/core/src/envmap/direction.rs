use glam::DVec3;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Unit vector in the camera frame (y up, -z forward at zero longitude).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Direction(DVec3);

impl Direction {
    pub const FORWARD: Direction = Direction(DVec3::NEG_Z);
    pub const UP: Direction = Direction(DVec3::Y);

    /// Normalizes `(x, y, z)`; rejects zero and non-finite vectors.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::from_vec(DVec3::new(x, y, z))
    }

    pub fn from_vec(v: DVec3) -> Result<Self> {
        let len = v.length();
        if !len.is_finite() || len < 1e-300 {
            return Err(Error::invalid(format!("direction {v:?} cannot be normalized")));
        }
        Ok(Direction(v / len))
    }

    /// Azimuth is clockwise from -z seen from +y; elevation is positive upward.
    pub fn from_angles(azimuth: f64, elevation: f64) -> Self {
        let (sin_el, cos_el) = elevation.sin_cos();
        let (sin_az, cos_az) = azimuth.sin_cos();
        Direction(DVec3::new(cos_el * sin_az, sin_el, -cos_el * cos_az))
    }

    #[inline]
    pub fn vec(&self) -> DVec3 {
        self.0
    }

    /// In `(-pi, pi]`; zero at the poles.
    pub fn azimuth(&self) -> f64 {
        let v = self.0;
        if v.x.hypot(v.z) < 1e-15 {
            0.0
        } else {
            v.x.atan2(-v.z)
        }
    }

    pub fn elevation(&self) -> f64 {
        self.0.y.clamp(-1.0, 1.0).asin()
    }

    /// Angle between two directions, numerically stable near 0 and pi.
    pub fn angle_to(&self, other: &Direction) -> f64 {
        angle_between(self.0, other.0)
    }
}

pub(crate) fn angle_between(a: DVec3, b: DVec3) -> f64 {
    a.cross(b).length().atan2(a.dot(b))
}

impl Serialize for Direction {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        [self.0.x, self.0.y, self.0.z].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Direction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let [x, y, z] = <[f64; 3]>::deserialize(deserializer)?;
        Direction::new(x, y, z).map_err(serde::de::Error::custom)
    }
}
