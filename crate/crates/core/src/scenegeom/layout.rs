use std::path::Path;

use glam::{DVec2, DVec3};
use serde::{Deserialize, Serialize};

use super::cuboid::CuboidGeom;
use super::CAMERA_HEIGHT_M;
use crate::envmap::{direction_at, png};
use crate::error::{Error, Result};
use crate::raster::Raster;

/// Binary equirectangular edge map of the room's plane intersections.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayoutMap {
    width: usize,
    height: usize,
    edges: Vec<u8>,
}

/// Continuous pixel coordinates of the eight room corners, each set ordered
/// by increasing column; `floor[k]` and `ceiling[k]` share an azimuth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corners {
    pub floor: [[f64; 2]; 4],
    pub ceiling: [[f64; 2]; 4],
}

impl LayoutMap {
    pub fn blank(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0; width * height])
    }

    pub fn new(width: usize, height: usize, edges: Vec<u8>) -> Result<Self> {
        if width != 2 * height || height == 0 {
            return Err(Error::invalid(format!(
                "layout must be 2H x H, got {width}x{height}"
            )));
        }
        if edges.len() != width * height {
            return Err(Error::invalid("layout buffer size mismatch"));
        }
        if edges.iter().any(|&e| e > 1) {
            return Err(Error::invalid("layout values must be 0 or 1"));
        }
        Ok(LayoutMap {
            width,
            height,
            edges,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.edges[v * self.width + u] != 0
    }

    #[inline]
    fn get_wrapped(&self, u: i64, v: usize) -> bool {
        self.get(u.rem_euclid(self.width as i64) as usize, v)
    }

    pub fn set(&mut self, u: usize, v: usize, on: bool) {
        self.edges[v * self.width + u] = on as u8;
    }

    pub fn count(&self) -> usize {
        self.edges.iter().map(|&e| e as usize).sum()
    }

    pub fn to_raster(&self) -> Raster {
        Raster::from_fn(self.width, self.height, |u, v| {
            [if self.get(u, v) { 1.0 } else { 0.0 }; 3]
        })
    }

    /// 8-bit single-channel PNG, 0 or 255.
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        png::encode_gray(&self.to_raster())
    }

    /// Any PNG; pixels brighter than mid-gray count as edges.
    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let r = png::decode(bytes)?;
        let edges = r.pixels().iter().map(|p| (p[0] > 0.5) as u8).collect();
        Self::new(r.width(), r.height(), edges)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode_png(&std::fs::read(path)?)
    }
}

/// Rasterizes the 12 cuboid edges as seen from the camera, one pixel wide.
pub fn render_layout(cuboid: &CuboidGeom, width: usize, height: usize) -> Result<LayoutMap> {
    let mut map = LayoutMap::blank(width, height)?;
    let pixel_angle = std::f64::consts::PI / height as f64;
    for (a, b) in cuboid.edges() {
        let len = (b - a).length();
        let nearest = closest_distance_to_origin(a, b).max(1e-3);
        let steps = ((len / (nearest * pixel_angle)) * 4.0).ceil().clamp(2.0, 1e6) as usize;
        for i in 0..=steps {
            let p = a.lerp(b, i as f64 / steps as f64);
            let (u, v) = crate::envmap::projection_pixel(p, width, height);
            let ui = (u.round() as i64).rem_euclid(width as i64) as usize;
            let vi = (v.round().max(0.0) as usize).min(height - 1);
            map.set(ui, vi, true);
        }
    }
    Ok(map)
}

fn closest_distance_to_origin(a: DVec3, b: DVec3) -> f64 {
    let ab = b - a;
    let t = (-a.dot(ab) / ab.length_squared().max(1e-300)).clamp(0.0, 1.0);
    (a + ab * t).length()
}

/// Horizontal second-derivative response of a 3x3 vertical-line kernel
/// centered on `(u, v)`.
fn vertical_line_response(layout: &LayoutMap, u: i64, v: usize) -> i32 {
    let mut r = 0;
    for dv in [-1i64, 0, 1] {
        let vv = v as i64 + dv;
        if vv < 0 || vv >= layout.height as i64 {
            continue;
        }
        let vv = vv as usize;
        r += 2 * layout.get_wrapped(u, vv) as i32
            - layout.get_wrapped(u - 1, vv) as i32
            - layout.get_wrapped(u + 1, vv) as i32;
    }
    r
}

/// Finds the eight room corners in a layout edge map.
///
/// Wall-wall edges are the only layout edges crossing the horizon, so a
/// vertical-line high-pass filter along the horizon rows locates the four
/// corner azimuths; each vertical run is then followed to its floor and
/// ceiling ends. Coarse corners are refined by fitting straight lines to
/// the floor edges in the ground plane and intersecting adjacent lines.
pub fn detect_corners(layout: &LayoutMap) -> Result<Corners> {
    let (w, h) = (layout.width, layout.height);
    if h < 4 {
        return Err(Error::Detection("layout too small".into()));
    }
    let horizon = h / 2;
    let mut hits: Vec<i64> = (0..w as i64)
        .filter(|&u| {
            (horizon - 1..=horizon).any(|v| layout.get(u as usize, v))
                && vertical_line_response(layout, u, horizon) >= 2
        })
        .collect();
    hits.sort_unstable();
    let clusters = cluster_columns(&hits, w as i64);
    if clusters.len() != 4 {
        return Err(Error::Detection(format!(
            "expected 4 wall corners on the horizon, found {} candidates at columns {:?}",
            clusters.len(),
            clusters
        )));
    }
    let mut coarse_floor = [[0.0; 2]; 4];
    let mut coarse_ceiling = [[0.0; 2]; 4];
    for (k, &col) in clusters.iter().enumerate() {
        let u = col.rem_euclid(w as i64) as usize;
        let mut bottom = horizon;
        while bottom + 1 < h && layout.get(u, bottom + 1) {
            bottom += 1;
        }
        let mut top = horizon - 1;
        while top > 0 && layout.get(u, top - 1) {
            top -= 1;
        }
        coarse_floor[k] = [u as f64, bottom as f64];
        coarse_ceiling[k] = [u as f64, top as f64];
    }
    Ok(refine(layout, coarse_floor, coarse_ceiling))
}

/// Groups sorted columns into runs, merging across the wrap seam; returns
/// one representative column per run in `[0, w)`, ascending.
fn cluster_columns(sorted: &[i64], w: i64) -> Vec<i64> {
    let mut runs: Vec<Vec<i64>> = Vec::new();
    for &u in sorted {
        match runs.last_mut() {
            Some(run) if u - *run.last().unwrap() <= 2 => run.push(u),
            _ => runs.push(vec![u]),
        }
    }
    if runs.len() > 1 {
        let first = runs[0][0];
        let last = *runs.last().unwrap().last().unwrap();
        if first + w - last <= 2 {
            let head = runs.remove(0);
            runs.last_mut().unwrap().extend(head.into_iter().map(|u| u + w));
        }
    }
    let mut reps: Vec<i64> = runs
        .iter()
        .map(|r| {
            let mid = r[r.len() / 2];
            mid.rem_euclid(w)
        })
        .collect();
    reps.sort_unstable();
    reps
}

fn ground_point(u: f64, v: f64, w: usize, h: usize) -> Option<DVec2> {
    let d = direction_at(u, v, w, h);
    if d.y >= -1e-6 {
        return None;
    }
    let t = CAMERA_HEIGHT_M / -d.y;
    Some(DVec2::new(d.x * t, d.z * t))
}

fn pixel_of(p: DVec3, w: usize, h: usize) -> [f64; 2] {
    let (u, v) = crate::envmap::projection_pixel(p, w, h);
    [u, v]
}

/// Columns strictly between corner columns `a` and `b` going rightward,
/// with a margin of `gap` columns at both ends.
fn columns_between(a: usize, b: usize, w: usize, gap: usize) -> Vec<usize> {
    let span = (b + w - a) % w;
    (gap + 1..span.saturating_sub(gap))
        .map(|i| (a + i) % w)
        .collect()
}

/// Weighted total-least-squares line: returns (point, unit direction).
fn fit_line(points: &[(DVec2, f64)]) -> Option<(DVec2, DVec2)> {
    let total: f64 = points.iter().map(|p| p.1).sum();
    if points.len() < 3 || !(total > 0.0) {
        return None;
    }
    let mean = points.iter().map(|(p, wt)| *p * *wt).sum::<DVec2>() / total;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (p, wt) in points {
        let d = *p - mean;
        sxx += wt * d.x * d.x;
        sxy += wt * d.x * d.y;
        syy += wt * d.y * d.y;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    Some((mean, DVec2::new(theta.cos(), theta.sin())))
}

fn intersect_lines(a: (DVec2, DVec2), b: (DVec2, DVec2)) -> Option<DVec2> {
    let cross = a.1.perp_dot(b.1);
    if cross.abs() < 0.1 {
        return None;
    }
    let t = (b.0 - a.0).perp_dot(b.1) / cross;
    Some(a.0 + a.1 * t)
}

fn refine(layout: &LayoutMap, floor: [[f64; 2]; 4], ceiling: [[f64; 2]; 4]) -> Corners {
    let (w, h) = (layout.width, layout.height);
    let cols: [usize; 4] = floor.map(|p| p[0] as usize);
    let horizon = h / 2;

    // One line per floor edge k (between corners k and k+1).
    let mut lines: [Option<(DVec2, DVec2)>; 4] = [None; 4];
    for k in 0..4 {
        let mut pts = Vec::new();
        for u in columns_between(cols[k], cols[(k + 1) % 4], w, 1) {
            for v in horizon..h {
                if !layout.get(u, v) {
                    continue;
                }
                if let Some(g) = ground_point(u as f64, v as f64, w, h) {
                    let r2 = g.length_squared() + CAMERA_HEIGHT_M * CAMERA_HEIGHT_M;
                    let weight = (CAMERA_HEIGHT_M / r2).powi(2);
                    pts.push((g, weight));
                }
            }
        }
        lines[k] = fit_line(&pts);
    }

    let mut ground = [DVec2::ZERO; 4];
    let mut refined = [false; 4];
    for k in 0..4 {
        let prev = lines[(k + 3) % 4];
        let next = lines[k];
        if let (Some(a), Some(b)) = (prev, next) {
            if let Some(p) = intersect_lines(a, b) {
                // Reject wild intersections far from the coarse estimate.
                let coarse = ground_point(floor[k][0], floor[k][1], w, h);
                if coarse.map_or(false, |c| (c - p).length() < 0.5 * c.length() + 0.5) {
                    ground[k] = p;
                    refined[k] = true;
                    continue;
                }
            }
        }
        ground[k] = ground_point(floor[k][0], floor[k][1], w, h).unwrap_or(DVec2::ZERO);
    }
    if refined.iter().any(|r| !r) {
        return Corners { floor, ceiling };
    }

    // Ceiling height from every ceiling-edge pixel over the fitted walls.
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..4 {
        let (a, b) = (ground[k], ground[(k + 1) % 4]);
        let wall_dir = (b - a).normalize_or_zero();
        let normal = DVec2::new(-wall_dir.y, wall_dir.x);
        for u in columns_between(cols[k], cols[(k + 1) % 4], w, 1) {
            for v in 0..horizon {
                if !layout.get(u, v) {
                    continue;
                }
                let d = direction_at(u as f64, v as f64, w, h);
                let horiz = DVec2::new(d.x, d.z);
                let denom = horiz.dot(normal);
                if denom.abs() < 1e-9 {
                    continue;
                }
                let t = a.dot(normal) / denom;
                if t <= 0.0 {
                    continue;
                }
                let reach = t * horiz.length();
                let rise = t * d.y;
                let weight = (1.0 / (reach * reach + rise * rise)).powi(2);
                num += weight * rise;
                den += weight;
            }
        }
    }
    let ceiling_refined = if den > 0.0 {
        let rise = num / den;
        ground.map(|g| pixel_of(DVec3::new(g.x, rise, g.y), w, h))
    } else {
        ceiling
    };
    Corners {
        floor: ground.map(|g| pixel_of(DVec3::new(g.x, -CAMERA_HEIGHT_M, g.y), w, h)),
        ceiling: ceiling_refined,
    }
}
