//! Synthetic single-light panoramas with known parameters, for tests,
//! benchmarks and validation runs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envmap::{Direction, EquirectImage};
use crate::error::Result;

/// A uniform disk light on a constant ambient background.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiskLight {
    pub direction: Direction,
    /// Half-angle of the disk in radians.
    pub angular_radius: f64,
    pub radiance: [f64; 3],
    pub ambient: [f64; 3],
}

impl DiskLight {
    /// Draws azimuth in [-pi, pi), elevation in [10, 70] degrees, angular
    /// radius in [4, 25] degrees, gray radiance in [5, 100] and gray
    /// ambient in [0.05, 0.5].
    pub fn random(rng: &mut impl Rng) -> DiskLight {
        use std::f64::consts::PI;
        let az = rng.random_range(-PI..PI);
        let el = rng.random_range(10.0f64..=70.0).to_radians();
        let radius = rng.random_range(4.0f64..=25.0).to_radians();
        let radiance = rng.random_range(5.0..=100.0);
        let ambient = rng.random_range(0.05..=0.5);
        DiskLight {
            direction: Direction::from_angles(az, el),
            angular_radius: radius,
            radiance: [radiance; 3],
            ambient: [ambient; 3],
        }
    }

    /// Pixels whose center lies inside the disk take the disk radiance (not
    /// added to the ambient), every other pixel the ambient.
    pub fn render(&self, height: usize) -> Result<EquirectImage> {
        let c = self.direction.vec();
        let cos_r = self.angular_radius.cos();
        EquirectImage::from_directions(height, true, |d| {
            let p = if d.dot(c) >= cos_r { self.radiance } else { self.ambient };
            p.map(|x| x as f32)
        })
    }
}
