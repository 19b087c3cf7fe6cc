//! The single parametric light and the full light estimate bundle.
//!
//! A light is a sphere of radius `radius_m` whose center sits `distance_m`
//! from the camera along `direction`, emitting radiance `color` over its
//! surface, plus a constant ambient environment of radiance `ambient`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::envmap::{direction_at, Direction, EquirectImage};
use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::scenegeom::{CuboidGeom, LayoutMap};

/// On-disk / on-wire form of a light.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightManifest {
    pub direction: [f64; 3],
    pub distance_m: f64,
    pub radius_m: f64,
    pub color_rgb: [f64; 3],
    pub ambient_rgb: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LightManifest", into = "LightManifest")]
pub struct ParametricLight {
    direction: Direction,
    distance_m: f64,
    radius_m: f64,
    color: [f64; 3],
    ambient: [f64; 3],
}

fn check_rgb(field: &'static str, rgb: [f64; 3]) -> Result<()> {
    for c in rgb {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::OutOfRange {
                field,
                value: c,
                expected: "finite and >= 0",
            });
        }
    }
    Ok(())
}

fn check_size(radius_m: f64, distance_m: f64) -> Result<()> {
    if !(distance_m.is_finite() && distance_m > 0.0) {
        return Err(Error::OutOfRange {
            field: "distance_m",
            value: distance_m,
            expected: "> 0",
        });
    }
    if !(radius_m.is_finite() && radius_m >= 0.0 && radius_m < distance_m) {
        return Err(Error::OutOfRange {
            field: "radius_m",
            value: radius_m,
            expected: "in [0, distance_m)",
        });
    }
    Ok(())
}

impl ParametricLight {
    pub fn new(
        direction: Direction,
        distance_m: f64,
        radius_m: f64,
        color: [f64; 3],
        ambient: [f64; 3],
    ) -> Result<Self> {
        check_size(radius_m, distance_m)?;
        check_rgb("color_rgb", color)?;
        check_rgb("ambient_rgb", ambient)?;
        Ok(ParametricLight {
            direction,
            distance_m,
            radius_m,
            color,
            ambient,
        })
    }

    /// Builds a light from its angular footprint instead of its metric radius.
    pub fn from_angular_radius(
        direction: Direction,
        distance_m: f64,
        angular_radius: f64,
        color: [f64; 3],
        ambient: [f64; 3],
    ) -> Result<Self> {
        if !(0.0..FRAC_PI_2).contains(&angular_radius) {
            return Err(Error::OutOfRange {
                field: "angular_radius",
                value: angular_radius,
                expected: "[0, pi/2)",
            });
        }
        Self::new(
            direction,
            distance_m,
            distance_m * angular_radius.sin(),
            color,
            ambient,
        )
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }
    pub fn distance_m(&self) -> f64 {
        self.distance_m
    }
    pub fn radius_m(&self) -> f64 {
        self.radius_m
    }
    pub fn color(&self) -> [f64; 3] {
        self.color
    }
    pub fn ambient(&self) -> [f64; 3] {
        self.ambient
    }
    pub fn azimuth(&self) -> f64 {
        self.direction.azimuth()
    }
    pub fn elevation(&self) -> f64 {
        self.direction.elevation()
    }

    /// Half-angle subtended by the light sphere at the camera.
    pub fn angular_radius(&self) -> f64 {
        angular_radius(self.radius_m, self.distance_m).expect("validated on construction")
    }

    /// Center of the emitting sphere in the camera frame.
    pub fn position(&self) -> glam::DVec3 {
        self.direction.vec() * self.distance_m
    }

    pub fn set_azimuth(&self, azimuth: f64) -> Result<Self> {
        if !azimuth.is_finite() {
            return Err(Error::OutOfRange {
                field: "azimuth",
                value: azimuth,
                expected: "finite",
            });
        }
        Ok(ParametricLight {
            direction: direction_from(azimuth, self.elevation()),
            ..self.clone()
        })
    }

    pub fn set_elevation(&self, elevation: f64) -> Result<Self> {
        if !(elevation.abs() <= FRAC_PI_2) {
            return Err(Error::OutOfRange {
                field: "elevation",
                value: elevation.to_degrees(),
                expected: "[-90, 90] degrees",
            });
        }
        Ok(ParametricLight {
            direction: direction_from(self.azimuth(), elevation),
            ..self.clone()
        })
    }

    pub fn set_direction(&self, direction: Direction) -> Self {
        ParametricLight {
            direction,
            ..self.clone()
        }
    }

    /// Sets the metric radius; must stay below the distance.
    pub fn set_size(&self, radius_m: f64) -> Result<Self> {
        check_size(radius_m, self.distance_m)?;
        Ok(ParametricLight {
            radius_m,
            ..self.clone()
        })
    }

    pub fn set_distance(&self, distance_m: f64) -> Result<Self> {
        check_size(self.radius_m, distance_m).map_err(|e| match e {
            Error::OutOfRange { field: "radius_m", .. } => Error::OutOfRange {
                field: "distance_m",
                value: distance_m,
                expected: "> radius_m",
            },
            e => e,
        })?;
        Ok(ParametricLight {
            distance_m,
            ..self.clone()
        })
    }

    pub fn set_color(&self, color: [f64; 3]) -> Result<Self> {
        check_rgb("color_rgb", color)?;
        Ok(ParametricLight {
            color,
            ..self.clone()
        })
    }

    pub fn set_ambient(&self, ambient: [f64; 3]) -> Result<Self> {
        check_rgb("ambient_rgb", ambient)?;
        Ok(ParametricLight {
            ambient,
            ..self.clone()
        })
    }

    pub fn to_manifest(&self) -> LightManifest {
        let d = self.direction.vec();
        LightManifest {
            direction: [d.x, d.y, d.z],
            distance_m: self.distance_m,
            radius_m: self.radius_m,
            color_rgb: self.color,
            ambient_rgb: self.ambient,
        }
    }
}

fn direction_from(azimuth: f64, elevation: f64) -> Direction {
    if elevation == FRAC_PI_2 {
        Direction::UP
    } else if elevation == -FRAC_PI_2 {
        Direction::from_vec(glam::DVec3::NEG_Y).expect("unit")
    } else {
        Direction::from_angles(azimuth, elevation)
    }
}

impl TryFrom<LightManifest> for ParametricLight {
    type Error = Error;

    fn try_from(m: LightManifest) -> Result<Self> {
        let [x, y, z] = m.direction;
        ParametricLight::new(
            Direction::new(x, y, z)?,
            m.distance_m,
            m.radius_m,
            m.color_rgb,
            m.ambient_rgb,
        )
    }
}

impl From<ParametricLight> for LightManifest {
    fn from(p: ParametricLight) -> Self {
        p.to_manifest()
    }
}

/// `asin(radius / distance)`.
pub fn angular_radius(radius_m: f64, distance_m: f64) -> Result<f64> {
    let ratio = radius_m / distance_m;
    if !(ratio.is_finite() && (0.0..1.0).contains(&ratio)) {
        return Err(Error::OutOfRange {
            field: "radius_m / distance_m",
            value: ratio,
            expected: "[0, 1)",
        });
    }
    Ok(ratio.asin())
}

/// Binary equirectangular footprint of the light: 1 where the pixel center
/// lies within the light's angular radius.
pub fn light_mask(light: &ParametricLight, width: usize, height: usize) -> EquirectImage {
    let center = light.direction().vec();
    let radius = light.angular_radius();
    let raster = Raster::from_fn(width, height, |u, v| {
        let d = direction_at(u as f64, v as f64, width, height);
        let angle = d.cross(center).length().atan2(d.dot(center));
        if angle <= radius {
            [1.0; 3]
        } else {
            [0.0; 3]
        }
    });
    EquirectImage::new(raster, false).expect("width = 2 * height")
}

/// The complete editable estimate: HDR light plus LDR textured cuboid.
#[derive(Clone, Debug)]
pub struct LightEstimate {
    pub light: ParametricLight,
    pub texture: EquirectImage,
    pub layout: LayoutMap,
    pub cuboid: Option<CuboidGeom>,
}

impl LightEstimate {
    pub fn new(
        light: ParametricLight,
        texture: EquirectImage,
        layout: LayoutMap,
        cuboid: Option<CuboidGeom>,
    ) -> Result<Self> {
        if texture.width() != layout.width() || texture.height() != layout.height() {
            return Err(Error::ResolutionMismatch(
                texture.width(),
                texture.height(),
                layout.width(),
                layout.height(),
            ));
        }
        Ok(LightEstimate {
            light,
            texture,
            layout,
            cuboid,
        })
    }
}
