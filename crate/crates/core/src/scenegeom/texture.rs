use glam::DVec3;
use rayon::prelude::*;

use super::cuboid::{CuboidGeom, Face};
use crate::envmap::{EquirectImage, direction_at};
use crate::error::{Error, Result};
use crate::raster::Raster;

/// Texels on the longest edge of the face that covers the most solid angle.
pub const DEFAULT_MAX_TEXELS: usize = 256;

/// Cuboid whose six faces carry radiance textures.
#[derive(Clone, Debug)]
pub struct TexturedCuboid {
    cuboid: CuboidGeom,
    faces: Vec<Face>,
    textures: Vec<Raster>,
}

/// Fraction of the sphere covered by each face, seen from the camera.
fn face_solid_angles(cuboid: &CuboidGeom, faces: &[Face]) -> Vec<f64> {
    let (w, h) = (128usize, 64usize);
    let mut out = vec![0.0; faces.len()];
    for v in 0..h {
        let omega = crate::envmap::solid_angle_of_row(v, w, h).expect("row in range");
        for u in 0..w {
            let d = direction_at(u as f64, v as f64, w, h);
            if let Some((i, _)) = cuboid.exit(DVec3::ZERO, d, faces) {
                out[i] += omega;
            }
        }
    }
    out
}

/// Warps a panorama onto the cuboid faces: every texel takes the bilinear
/// panorama value along the ray from the camera through it.
///
/// Texel counts scale with the face's solid angle: the largest face gets
/// `max_texels` on its longest edge, others proportionally fewer per unit
/// of angular extent (never below 4).
pub fn sphere_to_cuboid_texture(
    pano: &EquirectImage,
    cuboid: &CuboidGeom,
    max_texels: usize,
) -> Result<TexturedCuboid> {
    if max_texels == 0 {
        return Err(Error::invalid("max_texels must be positive"));
    }
    let faces = cuboid.faces();
    let omegas = face_solid_angles(cuboid, &faces);
    let max_omega = omegas.iter().copied().fold(0.0, f64::max);
    let textures = faces
        .iter()
        .zip(&omegas)
        .map(|(face, &omega)| {
            let longest = (max_texels as f64 * (omega / max_omega).sqrt()).max(4.0);
            let texel = face.size_u.max(face.size_v) / longest;
            let nu = (face.size_u / texel).ceil().max(1.0) as usize;
            let nv = (face.size_v / texel).ceil().max(1.0) as usize;
            let mut pixels = vec![[0.0f32; 3]; nu * nv];
            pixels.par_chunks_mut(nu).enumerate().for_each(|(j, row)| {
                for (i, px) in row.iter_mut().enumerate() {
                    let p = face.point(
                        (i as f64 + 0.5) / nu as f64 * face.size_u,
                        (j as f64 + 0.5) / nv as f64 * face.size_v,
                    );
                    *px = pano.lookup(p).map(|x| x as f32);
                }
            });
            Raster::new(nu, nv, pixels)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TexturedCuboid {
        cuboid: cuboid.clone(),
        faces,
        textures,
    })
}

impl TexturedCuboid {
    pub fn cuboid(&self) -> &CuboidGeom {
        &self.cuboid
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn textures(&self) -> &[Raster] {
        &self.textures
    }

    /// Bilinear texture value at face coordinates `(s, t)` in meters.
    pub fn face_radiance(&self, face: usize, s: f64, t: f64) -> [f64; 3] {
        let f = &self.faces[face];
        let tex = &self.textures[face];
        let (nu, nv) = (tex.width(), tex.height());
        let x = (s / f.size_u * nu as f64 - 0.5).clamp(0.0, (nu - 1) as f64);
        let y = (t / f.size_v * nv as f64 - 0.5).clamp(0.0, (nv - 1) as f64);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(nu - 1), (y0 + 1).min(nv - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let p = |i, j| tex.get(i, j);
        let mut out = [0.0; 3];
        for c in 0..3 {
            let top = p(x0, y0)[c] as f64 * (1.0 - fx) + p(x1, y0)[c] as f64 * fx;
            let bottom = p(x0, y1)[c] as f64 * (1.0 - fx) + p(x1, y1)[c] as f64 * fx;
            out[c] = top * (1.0 - fy) + bottom * fy;
        }
        out
    }

    /// Radiance arriving at `origin` from direction `dir`. Points outside the
    /// box see the cuboid as if from the camera.
    pub fn radiance(&self, origin: DVec3, dir: DVec3) -> [f64; 3] {
        let origin = if self.cuboid.contains(origin) {
            origin
        } else {
            DVec3::ZERO
        };
        match self.cuboid.exit(origin, dir, &self.faces) {
            Some((i, t)) => {
                let f = &self.faces[i];
                let local = origin + dir * t - f.origin;
                self.face_radiance(i, local.dot(f.axis_u), local.dot(f.axis_v))
            }
            None => [0.0; 3],
        }
    }

    /// Equirectangular view of the textured faces from `point`.
    pub fn reproject_from_point(
        &self,
        point: DVec3,
        width: usize,
        height: usize,
    ) -> Result<EquirectImage> {
        if !self.cuboid.contains(point) {
            return Err(Error::Geometry(format!(
                "viewpoint {point:?} is not strictly inside the cuboid"
            )));
        }
        let mut pixels = vec![[0.0f32; 3]; width * height];
        pixels.par_chunks_mut(width).enumerate().for_each(|(v, row)| {
            for (u, px) in row.iter_mut().enumerate() {
                let d = direction_at(u as f64, v as f64, width, height);
                *px = self.radiance(point, d).map(|x| x as f32);
            }
        });
        EquirectImage::new(Raster::new(width, height, pixels)?, false)
    }

    /// Copy with texture scaled per channel.
    pub fn scaled(&self, factor: [f64; 3]) -> TexturedCuboid {
        TexturedCuboid {
            cuboid: self.cuboid.clone(),
            faces: self.faces.clone(),
            textures: self.textures.iter().map(|t| t.scaled(factor)).collect(),
        }
    }

    /// Copy with every texel whose camera direction lies within `angle` of
    /// `axis` set to black.
    pub fn zero_cone(&self, axis: DVec3, angle: f64) -> TexturedCuboid {
        let axis = axis.normalize();
        let cos_limit = angle.cos();
        let textures = self
            .faces
            .iter()
            .zip(&self.textures)
            .map(|(f, tex)| {
                let (nu, nv) = (tex.width(), tex.height());
                Raster::from_fn(nu, nv, |i, j| {
                    let p = f.point(
                        (i as f64 + 0.5) / nu as f64 * f.size_u,
                        (j as f64 + 0.5) / nv as f64 * f.size_v,
                    );
                    if p.normalize().dot(axis) >= cos_limit {
                        [0.0; 3]
                    } else {
                        tex.get(i, j)
                    }
                })
            })
            .collect();
        TexturedCuboid {
            cuboid: self.cuboid.clone(),
            faces: self.faces.clone(),
            textures,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegeom::FaceKind;
    use glam::DVec2;

    fn room() -> CuboidGeom {
        CuboidGeom::from_dimensions(DVec2::new(0.4, -0.3), 5.0, 4.0, 0.3, 2.9).unwrap()
    }

    fn psnr(a: &Raster, b: &Raster) -> f64 {
        let mut se = 0.0;
        for (p, q) in a.pixels().iter().zip(b.pixels()) {
            for c in 0..3 {
                se += ((p[c] - q[c]) as f64).powi(2);
            }
        }
        let mse = se / (3 * a.pixels().len()) as f64;
        10.0 * (1.0 / mse).log10()
    }

    fn smooth_pano(h: usize) -> EquirectImage {
        EquirectImage::from_directions(h, false, |d| {
            [
                (0.5 + 0.4 * (3.0 * d.x).sin() * d.y.cos()) as f32,
                (0.5 + 0.3 * d.y) as f32,
                (0.5 + 0.4 * (2.0 * d.z + d.x).cos()) as f32,
            ]
        })
        .unwrap()
    }

    #[test]
    fn constant_pano_gives_constant_faces() {
        let pano = EquirectImage::filled(64, [0.3, 0.5, 0.7], false).unwrap();
        let tc = sphere_to_cuboid_texture(&pano, &room(), 64).unwrap();
        for tex in tc.textures() {
            for p in tex.pixels() {
                assert!((p[0] - 0.3).abs() < 1e-6 && (p[2] - 0.7).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn ceiling_samples_only_upper_hemisphere() {
        // Upper rows white, lower rows black.
        let pano = EquirectImage::from_directions(64, false, |d| {
            [if d.y > 0.0 { 1.0 } else { 0.0 }; 3]
        })
        .unwrap();
        let tc = sphere_to_cuboid_texture(&pano, &room(), 64).unwrap();
        let ceiling = tc
            .faces()
            .iter()
            .position(|f| f.kind == FaceKind::Ceiling)
            .unwrap();
        assert!(tc.textures()[ceiling].pixels().iter().all(|p| p[0] == 1.0));
    }

    #[test]
    fn reprojection_at_origin_reproduces_pano() {
        let pano = smooth_pano(128);
        let tc = sphere_to_cuboid_texture(&pano, &room(), 512).unwrap();
        let back = tc.reproject_from_point(DVec3::ZERO, 256, 128).unwrap();
        let db = psnr(back.raster(), pano.raster());
        assert!(db > 30.0, "psnr {db}");
    }

    #[test]
    fn viewpoint_outside_or_on_face_is_rejected() {
        let pano = smooth_pano(32);
        let r = room();
        let tc = sphere_to_cuboid_texture(&pano, &r, 32).unwrap();
        assert!(tc.reproject_from_point(DVec3::new(50.0, 0.0, 0.0), 64, 32).is_err());
        assert!(tc.reproject_from_point(DVec3::new(0.0, -1.6, 0.0), 64, 32).is_err());
    }

    #[test]
    fn moving_toward_a_wall_magnifies_it() {
        // A marker on the wall straight ahead grows as the viewpoint advances.
        let r = CuboidGeom::from_dimensions(DVec2::ZERO, 6.0, 6.0, 0.0, 3.2).unwrap();
        let pano = EquirectImage::from_directions(128, false, |d| {
            let a = d.angle_between(DVec3::NEG_Z);
            [if a < 0.1 { 1.0 } else { 0.0 }; 3]
        })
        .unwrap();
        let tc = sphere_to_cuboid_texture(&pano, &r, 256).unwrap();
        let mut last = 0.0;
        for z in [0.0, -1.0, -2.0] {
            let view = tc.reproject_from_point(DVec3::new(0.0, 0.0, z), 256, 128).unwrap();
            let lit: f64 = (0..128)
                .flat_map(|v| (0..256).map(move |u| (u, v)))
                .filter(|&(u, v)| view.get(u, v)[0] > 0.5)
                .map(|(_, v)| view.solid_angle(v))
                .sum();
            assert!(lit > last, "{lit} <= {last}");
            last = lit;
        }
    }
}
