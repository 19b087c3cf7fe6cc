use super::EquirectImage;
use crate::error::{Error, Result};
use crate::raster::Raster;

pub const DEFAULT_GAMMA: f64 = 2.4;

/// Linear-interpolated percentile (`pct` in `[0, 100]`) of `values`.
///
/// Sorts `values` in place. Returns `None` for an empty slice.
pub fn percentile(values: &mut [f64], pct: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let rank = (pct / 100.0).clamp(0.0, 1.0) * (values.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let t = rank - lo as f64;
    Some(values[lo] * (1.0 - t) + values[hi] * t)
}

/// Rescales `img` so its `pct`-th luminance percentile equals `target`.
///
/// Returns the rescaled image and the factor applied, so that light
/// parameters extracted from the same panorama can be co-scaled.
pub fn reexpose_percentile(
    img: &EquirectImage,
    pct: f64,
    target: f64,
) -> Result<(EquirectImage, f64)> {
    if !(pct > 0.0 && pct <= 100.0) {
        return Err(Error::OutOfRange {
            field: "percentile",
            value: pct,
            expected: "(0, 100]",
        });
    }
    if !(target > 0.0) || !target.is_finite() {
        return Err(Error::OutOfRange {
            field: "target",
            value: target,
            expected: "> 0",
        });
    }
    let mut lum: Vec<f64> = (0..img.raster().pixels().len())
        .map(|i| img.raster().luminance_at(i))
        .collect();
    if lum.iter().all(|&l| l <= 0.0) {
        return Err(Error::invalid("cannot re-expose an all-zero image"));
    }
    let level = percentile(&mut lum, pct).expect("non-empty");
    if !(level > 0.0) {
        return Err(Error::invalid(format!(
            "{pct}th luminance percentile is zero; exposure undefined"
        )));
    }
    let scale = target / level;
    Ok((img.scaled([scale; 3]), scale))
}

/// `clip(img, 0, 1)^(1/gamma)`, marked LDR.
pub fn tonemap_ldr(img: &EquirectImage, gamma: f64) -> Result<EquirectImage> {
    let raster = tonemap_raster(img.raster(), gamma)?;
    EquirectImage::new(raster, false)
}

pub(crate) fn tonemap_raster(raster: &Raster, gamma: f64) -> Result<Raster> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::OutOfRange {
            field: "gamma",
            value: gamma,
            expected: "> 0",
        });
    }
    let inv = 1.0 / gamma;
    Ok(raster.map(|p| p.map(|c| (c as f64).clamp(0.0, 1.0).powf(inv) as f32)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(scale: f32) -> EquirectImage {
        EquirectImage::new(
            Raster::from_fn(20, 10, |u, v| [(u + 20 * v) as f32 * scale; 3]),
            true,
        )
        .unwrap()
    }

    #[test]
    fn percentile_matches_linear_interpolation() {
        let mut v = vec![4.0, 1.0, 3.0, 2.0];
        assert_eq!(percentile(&mut v, 50.0), Some(2.5));
        assert_eq!(percentile(&mut v, 100.0), Some(4.0));
        assert_eq!(percentile(&mut [], 50.0), None);
    }

    #[test]
    fn reexpose_scales_to_target() {
        // Constant 0.4 image: every percentile is 0.4.
        let img = EquirectImage::filled(4, [0.4; 3], true).unwrap();
        let (out, scale) = reexpose_percentile(&img, 90.0, 0.8).unwrap();
        assert!((scale - 2.0).abs() < 1e-6);
        assert!((out.get(0, 0)[0] - 0.8).abs() < 1e-6);

        let img = EquirectImage::filled(4, [0.9; 3], true).unwrap();
        let (_, scale) = reexpose_percentile(&img, 50.0, 0.45).unwrap();
        assert!((scale - 0.5).abs() < 1e-6);
    }

    #[test]
    fn reexpose_is_linear() {
        let base = gradient(0.01);
        let (out_a, s_a) = reexpose_percentile(&base, 90.0, 0.8).unwrap();
        let alpha = 3.7;
        let (out_b, s_b) = reexpose_percentile(&base.scaled([alpha; 3]), 90.0, 0.8).unwrap();
        assert!((s_b - s_a / alpha).abs() / s_a < 1e-6);
        for (a, b) in out_a.raster().pixels().iter().zip(out_b.raster().pixels()) {
            assert!((a[0] - b[0]).abs() <= 1e-5 * a[0].max(1.0));
        }
    }

    #[test]
    fn reexpose_rejects_zero_image_and_bad_percentile() {
        let img = EquirectImage::filled(4, [0.0; 3], true).unwrap();
        assert!(reexpose_percentile(&img, 90.0, 0.8).is_err());
        let img = gradient(1.0);
        assert!(reexpose_percentile(&img, 0.0, 0.8).is_err());
        assert!(reexpose_percentile(&img, 101.0, 0.8).is_err());
    }

    #[test]
    fn tonemap_endpoints_and_midpoint() {
        let img = EquirectImage::new(
            Raster::new(2, 1, vec![[0.0, 0.5, 1.0], [2.0, 0.25, 0.75]]).unwrap(),
            true,
        )
        .unwrap();
        let out = tonemap_ldr(&img, 2.4).unwrap();
        assert!(!out.is_hdr());
        let p = out.get(0, 0);
        assert_eq!(p[0], 0.0);
        assert!((p[1] as f64 - 0.749_153_5).abs() < 1e-6);
        assert_eq!(p[2], 1.0);
        assert_eq!(out.get(1, 0)[0], 1.0);

        let id = tonemap_ldr(&img, 1.0).unwrap();
        assert_eq!(id.get(0, 0), [0.0, 0.5, 1.0]);
        assert!(tonemap_ldr(&img, 0.0).is_err());
        assert!(tonemap_ldr(&img, -1.0).is_err());
    }
}
