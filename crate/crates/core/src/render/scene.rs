use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenegeom::CAMERA_HEIGHT_M;

pub const PROBE_ALBEDO: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Material {
    Diffuse { albedo: f64 },
    Mirror { tint: f64 },
    /// Phong lobe around the mirror direction.
    Glossy { albedo: f64, exponent: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: [f64; 3],
    pub radius: f64,
    pub material: Material,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Camera {
    /// Looks straight down, covering `[-half_extent, half_extent]^2` around
    /// `center` in the x/z plane; image up is -z.
    TopDown { center: [f64; 2], half_extent: f64 },
    Perspective {
        position: [f64; 3],
        look_at: [f64; 3],
        vertical_fov_deg: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    #[serde(alias = "grid3x3")]
    Grid3x3,
    #[serde(alias = "three_spheres")]
    ThreeSpheres,
}

impl std::str::FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid3x3" => Ok(SceneKind::Grid3x3),
            "three-spheres" | "three_spheres" => Ok(SceneKind::ThreeSpheres),
            other => Err(Error::invalid(format!("unknown scene kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for SceneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SceneKind::Grid3x3 => "grid3x3",
            SceneKind::ThreeSpheres => "three-spheres",
        })
    }
}

/// Ground plane `y = plane.y` plus spheres, seen through one camera.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundPlane {
    pub y: f64,
    pub albedo: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub camera: Camera,
    pub plane: Option<GroundPlane>,
    pub spheres: Vec<Sphere>,
}

impl Scene {
    /// Nine diffuse spheres (radius 0.4 m, pitch 1.2 m) resting on the floor
    /// under the camera, seen from above.
    pub fn grid3x3() -> Scene {
        let floor = -CAMERA_HEIGHT_M;
        let mut spheres = Vec::with_capacity(9);
        for j in -1..=1 {
            for i in -1..=1 {
                spheres.push(Sphere {
                    center: [1.2 * i as f64, floor + 0.4, 1.2 * j as f64],
                    radius: 0.4,
                    material: Material::Diffuse {
                        albedo: PROBE_ALBEDO,
                    },
                });
            }
        }
        Scene {
            camera: Camera::TopDown {
                center: [0.0, 0.0],
                half_extent: 1.8,
            },
            plane: Some(GroundPlane {
                y: floor,
                albedo: PROBE_ALBEDO,
            }),
            spheres,
        }
    }

    /// Diffuse, mirror and glossy spheres in a row on the floor.
    pub fn three_spheres() -> Scene {
        let floor = -CAMERA_HEIGHT_M;
        let materials = [
            Material::Diffuse {
                albedo: PROBE_ALBEDO,
            },
            Material::Mirror { tint: 0.9 },
            Material::Glossy {
                albedo: PROBE_ALBEDO,
                exponent: 64.0,
            },
        ];
        let spheres = materials
            .iter()
            .enumerate()
            .map(|(i, &material)| Sphere {
                center: [(i as f64 - 1.0) * 1.0, floor + 0.4, 0.0],
                radius: 0.4,
                material,
            })
            .collect();
        Scene {
            camera: Camera::Perspective {
                position: [0.0, floor + 1.2, 2.6],
                look_at: [0.0, floor + 0.35, 0.0],
                vertical_fov_deg: 40.0,
            },
            plane: Some(GroundPlane {
                y: floor,
                albedo: PROBE_ALBEDO,
            }),
            spheres,
        }
    }

    pub fn of_kind(kind: SceneKind) -> Scene {
        match kind {
            SceneKind::Grid3x3 => Scene::grid3x3(),
            SceneKind::ThreeSpheres => Scene::three_spheres(),
        }
    }

    /// Lone ground plane of the given albedo seen from above.
    pub fn plane_only(albedo: f64) -> Scene {
        Scene {
            camera: Camera::TopDown {
                center: [0.0, 0.0],
                half_extent: 1.8,
            },
            plane: Some(GroundPlane {
                y: -CAMERA_HEIGHT_M,
                albedo,
            }),
            spheres: Vec::new(),
        }
    }

    /// Same camera and plane with every sphere removed.
    pub fn without_objects(&self) -> Scene {
        Scene {
            spheres: Vec::new(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.spheres.iter().enumerate() {
            if !(s.radius > 0.0 && s.radius.is_finite()) || s.center.iter().any(|c| !c.is_finite())
            {
                return Err(Error::invalid(format!("sphere {i} has invalid geometry")));
            }
            let ok = match s.material {
                Material::Diffuse { albedo } => (0.0..=1.0).contains(&albedo),
                Material::Mirror { tint } => (0.0..=1.0).contains(&tint),
                Material::Glossy { albedo, exponent } => {
                    (0.0..=1.0).contains(&albedo) && exponent >= 0.0
                }
            };
            if !ok {
                return Err(Error::invalid(format!("sphere {i} has invalid material")));
            }
        }
        if let Some(p) = self.plane {
            if !(0.0..=1.0).contains(&p.albedo) || !p.y.is_finite() {
                return Err(Error::invalid("ground plane is invalid"));
            }
        }
        match self.camera {
            Camera::TopDown { half_extent, .. } if !(half_extent > 0.0) => {
                Err(Error::invalid("camera extent must be positive"))
            }
            Camera::Perspective {
                position,
                look_at,
                vertical_fov_deg,
            } if !(vertical_fov_deg > 0.0 && vertical_fov_deg < 180.0)
                || DVec3::from(position) == DVec3::from(look_at) =>
            {
                Err(Error::invalid("perspective camera is degenerate"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Ray {
    pub origin: DVec3,
    pub dir: DVec3,
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Surface {
    Plane,
    Sphere(usize),
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Hit {
    pub t: f64,
    pub point: DVec3,
    pub normal: DVec3,
    pub surface: Surface,
    pub material: Material,
}

pub(crate) const RAY_EPS: f64 = 1e-7;

/// Nearest positive root of a ray-sphere intersection.
#[inline]
pub(crate) fn intersect_sphere(center: DVec3, radius: f64, ray: &Ray) -> Option<f64> {
    let oc = ray.origin - center;
    let b = oc.dot(ray.dir);
    let c = oc.length_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t0 = -b - sq;
    if t0 > RAY_EPS {
        return Some(t0);
    }
    let t1 = -b + sq;
    (t1 > RAY_EPS).then_some(t1)
}

impl Scene {
    pub(crate) fn intersect(&self, ray: &Ray) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        if let Some(plane) = self.plane {
            if ray.dir.y != 0.0 {
                let t = (plane.y - ray.origin.y) / ray.dir.y;
                if t > RAY_EPS {
                    let normal = if ray.origin.y >= plane.y {
                        DVec3::Y
                    } else {
                        DVec3::NEG_Y
                    };
                    best = Some(Hit {
                        t,
                        point: ray.origin + ray.dir * t,
                        normal,
                        surface: Surface::Plane,
                        material: Material::Diffuse {
                            albedo: plane.albedo,
                        },
                    });
                }
            }
        }
        for (i, s) in self.spheres.iter().enumerate() {
            let center = DVec3::from(s.center);
            if let Some(t) = intersect_sphere(center, s.radius, ray) {
                if best.map_or(true, |b| t < b.t) {
                    let point = ray.origin + ray.dir * t;
                    best = Some(Hit {
                        t,
                        point,
                        normal: (point - center) / s.radius,
                        surface: Surface::Sphere(i),
                        material: s.material,
                    });
                }
            }
        }
        best
    }

    /// True if anything blocks the ray before `t_max`.
    pub(crate) fn occluded(&self, ray: &Ray, t_max: f64) -> bool {
        if let Some(plane) = self.plane {
            if ray.dir.y != 0.0 {
                let t = (plane.y - ray.origin.y) / ray.dir.y;
                if t > RAY_EPS && t < t_max {
                    return true;
                }
            }
        }
        self.spheres.iter().any(|s| {
            intersect_sphere(DVec3::from(s.center), s.radius, ray).is_some_and(|t| t < t_max)
        })
    }

    /// Ray through the center of pixel `(u, v)`.
    pub(crate) fn primary_ray(&self, u: usize, v: usize, width: usize, height: usize) -> Ray {
        let x = (u as f64 + 0.5) / width as f64 * 2.0 - 1.0;
        let y = (v as f64 + 0.5) / height as f64 * 2.0 - 1.0;
        let aspect = width as f64 / height as f64;
        match self.camera {
            Camera::TopDown {
                center,
                half_extent,
            } => Ray {
                origin: DVec3::new(
                    center[0] + x * half_extent * aspect,
                    1.0e3,
                    center[1] + y * half_extent,
                ),
                dir: DVec3::NEG_Y,
            },
            Camera::Perspective {
                position,
                look_at,
                vertical_fov_deg,
            } => {
                let pos = DVec3::from(position);
                let forward = (DVec3::from(look_at) - pos).normalize();
                let mut right = forward.cross(DVec3::Y);
                if right.length_squared() < 1e-12 {
                    right = DVec3::X;
                }
                let right = right.normalize();
                let up = right.cross(forward);
                let tan = (vertical_fov_deg.to_radians() / 2.0).tan();
                let dir = forward + right * (x * tan * aspect) - up * (y * tan);
                Ray {
                    origin: pos,
                    dir: dir.normalize(),
                }
            }
        }
    }
}
