use glam::{DVec2, DVec3};
use serde::{Deserialize, Serialize};

use super::layout::Corners;
use super::CAMERA_HEIGHT_M;
use crate::envmap::direction_at;
use crate::error::{Error, Result};

const RECT_TOL: f64 = 1e-6;

/// Box-shaped room: a rectangular floor at `y = -1.6` and a flat ceiling.
///
/// Floor corners are plan-view `(x, z)` points ordered by increasing
/// azimuth, starting with the one nearest longitude -pi.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CuboidManifest", into = "CuboidManifest")]
pub struct CuboidGeom {
    floor_corners: [DVec2; 4],
    ceiling_height_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CuboidManifest {
    pub floor_corners: [[f64; 2]; 4],
    pub camera_height_m: f64,
    pub ceiling_height_m: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaceKind {
    Floor,
    Ceiling,
    Wall(usize),
}

/// A rectangular face with an in-plane frame; `normal` points into the room.
#[derive(Clone, Copy, Debug)]
pub struct Face {
    pub kind: FaceKind,
    pub origin: DVec3,
    pub axis_u: DVec3,
    pub axis_v: DVec3,
    pub size_u: f64,
    pub size_v: f64,
    pub normal: DVec3,
}

impl Face {
    pub fn point(&self, s: f64, t: f64) -> DVec3 {
        self.origin + self.axis_u * s + self.axis_v * t
    }
}

#[inline]
fn plan_azimuth(p: DVec2) -> f64 {
    p.x.atan2(-p.y)
}

impl CuboidGeom {
    pub fn new(floor_corners: [DVec2; 4], ceiling_height_m: f64) -> Result<Self> {
        let mut corners = floor_corners;
        corners.sort_by(|a, b| plan_azimuth(*a).total_cmp(&plan_azimuth(*b)));
        let c = corners;
        let diag_gap = ((c[0] - c[2]).length() - (c[1] - c[3]).length()).abs();
        let mid_gap = ((c[0] + c[2]) - (c[1] + c[3])).length() * 0.5;
        if diag_gap > RECT_TOL || mid_gap > RECT_TOL {
            return Err(Error::Geometry(format!(
                "floor corners do not form a rectangle (diagonal gap {diag_gap:.3e}, center gap {mid_gap:.3e})"
            )));
        }
        if (c[1] - c[0]).length() < 1e-6 || (c[2] - c[1]).length() < 1e-6 {
            return Err(Error::Geometry("degenerate zero-size floor".into()));
        }
        if !(ceiling_height_m.is_finite() && ceiling_height_m > CAMERA_HEIGHT_M) {
            return Err(Error::Geometry(format!(
                "ceiling height {ceiling_height_m} m does not clear the camera"
            )));
        }
        let geom = CuboidGeom {
            floor_corners: c,
            ceiling_height_m,
        };
        if !geom.contains(DVec3::ZERO) {
            return Err(Error::Geometry("camera is not inside the cuboid".into()));
        }
        Ok(geom)
    }

    /// Rectangle of `width_m` x `depth_m` centered at plan point `center`,
    /// rotated by `yaw` about the vertical axis.
    pub fn from_dimensions(
        center: DVec2,
        width_m: f64,
        depth_m: f64,
        yaw: f64,
        ceiling_height_m: f64,
    ) -> Result<Self> {
        let (s, c) = yaw.sin_cos();
        let e1 = DVec2::new(c, s) * (width_m / 2.0);
        let e2 = DVec2::new(-s, c) * (depth_m / 2.0);
        Self::new(
            [
                center - e1 - e2,
                center + e1 - e2,
                center + e1 + e2,
                center - e1 + e2,
            ],
            ceiling_height_m,
        )
    }

    pub fn floor_corners(&self) -> [DVec2; 4] {
        self.floor_corners
    }

    pub fn ceiling_height_m(&self) -> f64 {
        self.ceiling_height_m
    }

    pub fn floor_y(&self) -> f64 {
        -CAMERA_HEIGHT_M
    }

    pub fn ceiling_y(&self) -> f64 {
        self.ceiling_height_m - CAMERA_HEIGHT_M
    }

    /// Lengths of the two plan-view sides.
    pub fn plan_dimensions(&self) -> (f64, f64) {
        let c = self.floor_corners;
        ((c[1] - c[0]).length(), (c[2] - c[1]).length())
    }

    pub fn floor_point(&self, k: usize) -> DVec3 {
        let p = self.floor_corners[k % 4];
        DVec3::new(p.x, self.floor_y(), p.y)
    }

    pub fn ceiling_point(&self, k: usize) -> DVec3 {
        let p = self.floor_corners[k % 4];
        DVec3::new(p.x, self.ceiling_y(), p.y)
    }

    /// The 12 box edges as 3D segments: 4 floor, 4 ceiling, 4 vertical.
    pub fn edges(&self) -> Vec<(DVec3, DVec3)> {
        let mut out = Vec::with_capacity(12);
        for k in 0..4 {
            out.push((self.floor_point(k), self.floor_point(k + 1)));
        }
        for k in 0..4 {
            out.push((self.ceiling_point(k), self.ceiling_point(k + 1)));
        }
        for k in 0..4 {
            out.push((self.floor_point(k), self.ceiling_point(k)));
        }
        out
    }

    /// Signed inward plane offsets; positive inside.
    fn plane_distances(&self, p: DVec3) -> [f64; 6] {
        let mut out = [0.0; 6];
        out[0] = p.y - self.floor_y();
        out[1] = self.ceiling_y() - p.y;
        for (k, face) in self.walls().iter().enumerate() {
            out[2 + k] = (p - face.origin).dot(face.normal);
        }
        out
    }

    pub fn contains(&self, p: DVec3) -> bool {
        self.plane_distances(p).iter().all(|&d| d > 1e-9)
    }

    fn walls(&self) -> [Face; 4] {
        let centroid = self.floor_corners.iter().copied().sum::<DVec2>() / 4.0;
        std::array::from_fn(|k| {
            let a = self.floor_corners[k];
            let b = self.floor_corners[(k + 1) % 4];
            let along = (b - a).normalize();
            let mut n = DVec2::new(-along.y, along.x);
            if n.dot(centroid - a) < 0.0 {
                n = -n;
            }
            Face {
                kind: FaceKind::Wall(k),
                origin: DVec3::new(a.x, self.ceiling_y(), a.y),
                axis_u: DVec3::new(along.x, 0.0, along.y),
                axis_v: DVec3::NEG_Y,
                size_u: (b - a).length(),
                size_v: self.ceiling_height_m,
                normal: DVec3::new(n.x, 0.0, n.y),
            }
        })
    }

    /// Floor, ceiling, then the four walls (wall k spans corners k..k+1).
    pub fn faces(&self) -> Vec<Face> {
        let c = self.floor_corners;
        let e1 = c[1] - c[0];
        let e2 = c[3] - c[0];
        let axis_u = DVec3::new(e1.x, 0.0, e1.y).normalize();
        let axis_v = DVec3::new(e2.x, 0.0, e2.y).normalize();
        let mut faces = vec![
            Face {
                kind: FaceKind::Floor,
                origin: self.floor_point(0),
                axis_u,
                axis_v,
                size_u: e1.length(),
                size_v: e2.length(),
                normal: DVec3::Y,
            },
            Face {
                kind: FaceKind::Ceiling,
                origin: self.ceiling_point(0),
                axis_u,
                axis_v,
                size_u: e1.length(),
                size_v: e2.length(),
                normal: DVec3::NEG_Y,
            },
        ];
        faces.extend(self.walls());
        faces
    }

    /// Exit point of a ray starting inside the box: `(face index, t)`.
    pub fn exit(&self, origin: DVec3, dir: DVec3, faces: &[Face]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, face) in faces.iter().enumerate() {
            let denom = dir.dot(face.normal);
            if denom >= -1e-15 {
                continue;
            }
            let t = (face.origin - origin).dot(face.normal) / denom;
            if t > 0.0 && best.map_or(true, |(_, bt)| t < bt) {
                best = Some((i, t));
            }
        }
        best
    }

    pub fn to_manifest(&self) -> CuboidManifest {
        CuboidManifest {
            floor_corners: self.floor_corners.map(|p| [p.x, p.y]),
            camera_height_m: CAMERA_HEIGHT_M,
            ceiling_height_m: self.ceiling_height_m,
        }
    }
}

impl TryFrom<CuboidManifest> for CuboidGeom {
    type Error = Error;

    fn try_from(m: CuboidManifest) -> Result<Self> {
        if (m.camera_height_m - CAMERA_HEIGHT_M).abs() > 1e-9 {
            return Err(Error::Geometry(format!(
                "camera height must be {CAMERA_HEIGHT_M} m, got {}",
                m.camera_height_m
            )));
        }
        CuboidGeom::new(
            m.floor_corners.map(|[x, z]| DVec2::new(x, z)),
            m.ceiling_height_m,
        )
    }
}

impl From<CuboidGeom> for CuboidManifest {
    fn from(c: CuboidGeom) -> Self {
        c.to_manifest()
    }
}

/// Least-squares rectangle through four cyclically ordered points.
///
/// The optimal center is the centroid; the orientation maximizes the
/// squared half-extents, which reduces to the top eigenvector of a 2x2
/// symmetric matrix.
pub fn fit_rectangle(points: [DVec2; 4]) -> [DVec2; 4] {
    const SIGNS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
    let center = points.iter().copied().sum::<DVec2>() / 4.0;
    let (mut a1, mut a2, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0);
    for (p, (sx, sy)) in points.iter().zip(SIGNS) {
        let r = *p - center;
        a1 += sx * r.x;
        a2 += sx * r.y;
        b1 += sy * r.x;
        b2 += sy * r.y;
    }
    let m11 = a1 * a1 + b2 * b2;
    let m22 = a2 * a2 + b1 * b1;
    let m12 = a1 * a2 - b1 * b2;
    // Top eigenvector of [[m11, m12], [m12, m22]].
    let theta = 0.5 * (2.0 * m12).atan2(m11 - m22);
    let (s, c) = theta.sin_cos();
    let half_a = (c * a1 + s * a2) / 4.0;
    let half_b = (-s * b1 + c * b2) / 4.0;
    SIGNS.map(|(sx, sy)| {
        let local = DVec2::new(sx * half_a, sy * half_b);
        center + DVec2::new(c * local.x - s * local.y, s * local.x + c * local.y)
    })
}

/// Back-projects detected corners under the level-camera, 1.6 m height
/// constraints.
///
/// Floor corners are intersected with the floor plane, each ceiling corner
/// ray with the vertical line through its floor corner; the ceiling height
/// is the mean of the four estimates and the floor is snapped to the best
/// fitting rectangle.
pub fn backproject(corners: &Corners, width: usize, height: usize) -> Result<CuboidGeom> {
    let mut ground = [DVec2::ZERO; 4];
    for (k, &[u, v]) in corners.floor.iter().enumerate() {
        let d = direction_at(u, v, width, height);
        if d.y >= -1e-9 {
            return Err(Error::Geometry(format!(
                "floor corner {k} at ({u:.2}, {v:.2}) is not below the horizon"
            )));
        }
        let t = CAMERA_HEIGHT_M / -d.y;
        ground[k] = DVec2::new(d.x * t, d.z * t);
    }
    let mut heights = [0.0; 4];
    for (k, &[u, v]) in corners.ceiling.iter().enumerate() {
        let d = direction_at(u, v, width, height);
        let horiz = DVec2::new(d.x, d.z);
        let t = horiz.dot(ground[k]) / horiz.length_squared().max(1e-300);
        if !(t > 0.0) || d.y <= 0.0 {
            return Err(Error::Geometry(format!(
                "ceiling corner {k} does not rise above floor corner {k}"
            )));
        }
        heights[k] = t * d.y;
    }
    let ceiling = CAMERA_HEIGHT_M + heights.iter().sum::<f64>() / 4.0;
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| plan_azimuth(ground[a]).total_cmp(&plan_azimuth(ground[b])));
    let rect = fit_rectangle(order.map(|k| ground[k]));
    CuboidGeom::new(rect, ceiling)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envmap::direction_to_pixel;

    fn pixel_of(p: DVec3, w: usize, h: usize) -> [f64; 2] {
        let (u, v) = direction_to_pixel(p, w, h).unwrap();
        [u, v]
    }

    #[test]
    fn ground_at_45_degrees_is_camera_height_away() {
        // Elevation -45 at azimuth 0 -> 1.6 m straight ahead; ceiling corner
        // at +45 over the same point -> another 1.6 m up.
        let (w, h) = (512usize, 256usize);
        let floor = pixel_of(DVec3::new(0.0, -1.0, -1.0), w, h);
        let ceil = pixel_of(DVec3::new(0.0, 1.0, -1.0), w, h);
        let dir = direction_at(floor[0], floor[1], w, h);
        let t = CAMERA_HEIGHT_M / -dir.y;
        assert!((dir.z * t + 1.6).abs() < 1e-9);
        // Make a square room around that point to exercise backproject.
        let room = CuboidGeom::from_dimensions(DVec2::ZERO, 3.2, 3.2, 0.0, 3.2).unwrap();
        let corners = Corners {
            floor: std::array::from_fn(|k| pixel_of(room.floor_point(k), w, h)),
            ceiling: std::array::from_fn(|k| pixel_of(room.ceiling_point(k), w, h)),
        };
        let back = backproject(&corners, w, h).unwrap();
        assert!((back.ceiling_height_m() - 3.2).abs() < 1e-9);
        let (a, b) = back.plan_dimensions();
        assert!((a - 3.2).abs() < 1e-9 && (b - 3.2).abs() < 1e-9);
        let _ = ceil;
    }

    #[test]
    fn ceiling_height_is_mean_of_per_corner_estimates() {
        let (w, h) = (1024usize, 512usize);
        let room = CuboidGeom::from_dimensions(DVec2::new(0.3, -0.2), 4.0, 5.0, 0.4, 3.0).unwrap();
        let extra = [0.0, 0.4, -0.2, 0.6];
        let corners = Corners {
            floor: std::array::from_fn(|k| pixel_of(room.floor_point(k), w, h)),
            ceiling: std::array::from_fn(|k| {
                pixel_of(room.ceiling_point(k) + DVec3::Y * extra[k], w, h)
            }),
        };
        let back = backproject(&corners, w, h).unwrap();
        let expected = 3.0 + extra.iter().sum::<f64>() / 4.0;
        assert!((back.ceiling_height_m() - expected).abs() < 1e-9);
    }

    #[test]
    fn floor_corner_above_horizon_is_rejected() {
        let corners = Corners {
            floor: [[10.0, 10.0]; 4],
            ceiling: [[10.0, 5.0]; 4],
        };
        assert!(matches!(backproject(&corners, 64, 32), Err(Error::Geometry(_))));
    }

    #[test]
    fn rectangle_fit_recovers_exact_rectangles_and_snaps_noisy_ones() {
        let room = CuboidGeom::from_dimensions(DVec2::new(0.5, 0.1), 3.0, 6.0, 1.1, 2.5).unwrap();
        let exact = room.floor_corners();
        let fit = fit_rectangle(exact);
        for (a, b) in exact.iter().zip(fit) {
            assert!((*a - b).length() < 1e-12);
        }
        let noisy = [
            exact[0] + DVec2::new(0.05, 0.0),
            exact[1] + DVec2::new(0.0, -0.04),
            exact[2],
            exact[3] + DVec2::new(-0.03, 0.02),
        ];
        let fit = fit_rectangle(noisy);
        assert!(CuboidGeom::new(fit, 2.5).is_ok());
    }

    #[test]
    fn rejects_non_rectangles_and_outside_camera() {
        let bad = [
            DVec2::new(-1.0, -1.0),
            DVec2::new(1.0, -1.0),
            DVec2::new(1.5, 1.0),
            DVec2::new(-1.0, 1.0),
        ];
        assert!(CuboidGeom::new(bad, 3.0).is_err());
        assert!(CuboidGeom::from_dimensions(DVec2::new(5.0, 0.0), 2.0, 2.0, 0.0, 3.0).is_err());
        assert!(CuboidGeom::from_dimensions(DVec2::ZERO, 2.0, 2.0, 0.0, 1.5).is_err());
    }

    #[test]
    fn exit_hits_expected_face() {
        let room = CuboidGeom::from_dimensions(DVec2::ZERO, 4.0, 4.0, 0.0, 3.0).unwrap();
        let faces = room.faces();
        let (i, t) = room.exit(DVec3::ZERO, DVec3::NEG_Y, &faces).unwrap();
        assert_eq!(faces[i].kind, FaceKind::Floor);
        assert!((t - 1.6).abs() < 1e-12);
        let (i, t) = room.exit(DVec3::ZERO, DVec3::Y, &faces).unwrap();
        assert_eq!(faces[i].kind, FaceKind::Ceiling);
        assert!((t - 1.4).abs() < 1e-12);
        let (_, t) = room.exit(DVec3::ZERO, DVec3::X, &faces).unwrap();
        assert!((t - 2.0).abs() < 1e-12);
    }

    #[test]
    fn manifest_roundtrip() {
        let room = CuboidGeom::from_dimensions(DVec2::new(0.2, 0.1), 4.0, 5.0, 0.3, 2.8).unwrap();
        let text = serde_json::to_string(&room).unwrap();
        assert!(text.contains("camera_height_m"));
        let back: CuboidGeom = serde_json::from_str(&text).unwrap();
        assert_eq!(back, room);
    }
}
