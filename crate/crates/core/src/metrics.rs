//! Image comparison metrics for paired renders.

use serde::{Deserialize, Serialize};

use crate::envmap::percentile;
use crate::error::{Error, Result};
use crate::raster::Raster;

/// Reported for identical images instead of infinity.
pub const PSNR_CAP_DB: f64 = 99.0;

fn sq_sum(a: &Raster, b: &Raster, scale_a: f64) -> f64 {
    a.pixels()
        .iter()
        .zip(b.pixels())
        .map(|(p, q)| {
            (0..3)
                .map(|c| {
                    let d = scale_a * p[c] as f64 - q[c] as f64;
                    d * d
                })
                .sum::<f64>()
        })
        .sum()
}

fn count(a: &Raster) -> f64 {
    (3 * a.pixels().len()) as f64
}

pub fn mse(a: &Raster, b: &Raster) -> Result<f64> {
    a.same_shape(b)?;
    Ok(sq_sum(a, b, 1.0) / count(a))
}

pub fn rmse(a: &Raster, b: &Raster) -> Result<f64> {
    Ok(mse(a, b)?.sqrt())
}

/// Global scale `alpha >= 0` minimizing `|alpha a - b|`.
pub fn optimal_scale(a: &Raster, b: &Raster) -> Result<f64> {
    a.same_shape(b)?;
    let (mut ab, mut aa) = (0.0, 0.0);
    for (p, q) in a.pixels().iter().zip(b.pixels()) {
        for c in 0..3 {
            ab += p[c] as f64 * q[c] as f64;
            aa += p[c] as f64 * p[c] as f64;
        }
    }
    Ok(if aa > 0.0 { (ab / aa).max(0.0) } else { 0.0 })
}

/// Scale-invariant RMSE: `rmse(alpha a, b)` at the optimal global scale.
pub fn si_rmse(a: &Raster, b: &Raster) -> Result<f64> {
    let alpha = optimal_scale(a, b)?;
    Ok((sq_sum(a, b, alpha) / count(a)).sqrt())
}

pub fn psnr(a: &Raster, b: &Raster, peak: f64) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(psnr_from_mse(m, peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB)
}

/// Mean angle in degrees between per-pixel RGB vectors; pixels where
/// either vector is zero are skipped. Returns 0 when no pixel qualifies.
pub fn rgb_angular(a: &Raster, b: &Raster) -> Result<f64> {
    a.same_shape(b)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, q) in a.pixels().iter().zip(b.pixels()) {
        let p = p.map(|x| x as f64);
        let q = q.map(|x| x as f64);
        let dot: f64 = (0..3).map(|c| p[c] * q[c]).sum();
        let cross = [
            p[1] * q[2] - p[2] * q[1],
            p[2] * q[0] - p[0] * q[2],
            p[0] * q[1] - p[1] * q[0],
        ];
        let cross_len = cross.iter().map(|x| x * x).sum::<f64>().sqrt();
        let zero = |v: &[f64; 3]| v.iter().all(|&x| x == 0.0);
        if zero(&p) || zero(&q) {
            continue;
        }
        sum += cross_len.atan2(dot).to_degrees();
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Reference luminance percentile and the level it is mapped to before
/// comparing renders whose absolute exposure is arbitrary.
pub const EXPOSURE_PERCENTILE: f64 = 90.0;
pub const EXPOSURE_TARGET: f64 = 0.8;

/// Scales `estimate` and `reference` by the common factor that maps the
/// reference's 90th luminance percentile to 0.8.
pub fn normalize_exposure(estimate: &Raster, reference: &Raster) -> Result<(Raster, Raster)> {
    estimate.same_shape(reference)?;
    let mut lum: Vec<f64> = (0..reference.pixels().len())
        .map(|i| reference.luminance_at(i))
        .collect();
    let level = percentile(&mut lum, EXPOSURE_PERCENTILE).unwrap_or(0.0);
    if !(level > 0.0) {
        return Err(Error::invalid("reference render has no exposure level"));
    }
    let k = EXPOSURE_TARGET / level;
    Ok((estimate.scaled([k; 3]), reference.scaled([k; 3])))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rmse: f64,
    pub si_rmse: f64,
    pub psnr_db: f64,
    pub rgb_angular_deg: f64,
}

impl MetricReport {
    /// `estimate` against `reference`.
    pub fn compare(estimate: &Raster, reference: &Raster) -> Result<Self> {
        Ok(MetricReport {
            rmse: rmse(estimate, reference)?,
            si_rmse: si_rmse(estimate, reference)?,
            psnr_db: psnr(estimate, reference, 1.0)?,
            rgb_angular_deg: rgb_angular(estimate, reference)?,
        })
    }

    /// [`MetricReport::compare`] after [`normalize_exposure`].
    pub fn compare_normalized(estimate: &Raster, reference: &Raster) -> Result<Self> {
        let (e, r) = normalize_exposure(estimate, reference)?;
        Self::compare(&e, &r)
    }
}

/// 25th, 50th and 75th percentiles of each metric over a set of reports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PercentileSummary {
    pub p25: MetricReport,
    pub p50: MetricReport,
    pub p75: MetricReport,
}

pub fn summarize(reports: &[MetricReport]) -> Option<PercentileSummary> {
    if reports.is_empty() {
        return None;
    }
    let at = |pct: f64| {
        let col = |f: fn(&MetricReport) -> f64| {
            let mut v: Vec<f64> = reports.iter().map(f).collect();
            percentile(&mut v, pct).expect("non-empty")
        };
        MetricReport {
            rmse: col(|r| r.rmse),
            si_rmse: col(|r| r.si_rmse),
            psnr_db: col(|r| r.psnr_db),
            rgb_angular_deg: col(|r| r.rgb_angular_deg),
        }
    };
    Some(PercentileSummary {
        p25: at(25.0),
        p50: at(50.0),
        p75: at(75.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gray(values: &[f32]) -> Raster {
        Raster::new(values.len(), 1, values.iter().map(|&v| [v; 3]).collect()).unwrap()
    }

    #[test]
    fn rmse_examples() {
        let a = gray(&[0.2, 0.7]);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        assert!((rmse(&gray(&[0.0]), &gray(&[1.0])).unwrap() - 1.0).abs() < 1e-12);
        let v = rmse(&gray(&[0.0, 1.0]), &gray(&[1.0, 1.0])).unwrap();
        assert!((v - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn si_rmse_examples() {
        let a = gray(&[0.1, 0.4, 0.2]);
        let b = a.scaled([3.0; 3]);
        assert!(si_rmse(&a, &b).unwrap() < 1e-7);
        let zero = gray(&[0.0, 0.0, 0.0]);
        assert_eq!(si_rmse(&zero, &b).unwrap(), rmse(&zero, &b).unwrap());
    }

    /// Smallest `rmse(alpha a, b)` over a fine grid of `alpha`.
    fn grid_si_rmse(a: &Raster, b: &Raster, max_alpha: f64, steps: usize) -> f64 {
        (0..=steps)
            .map(|i| (sq_sum(a, b, max_alpha * i as f64 / steps as f64) / count(a)).sqrt())
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn si_rmse_matches_grid_search() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let n = rng.random_range(2..20);
            let mut px = |lo: f32| (0..n).map(|_| [rng.random_range(lo..2.0), rng.random_range(lo..2.0), rng.random_range(lo..2.0)]).collect();
            let a = Raster::new(n, 1, px(0.1)).unwrap();
            let b = Raster::new(n, 1, px(0.0)).unwrap();
            let grid = grid_si_rmse(&a, &b, 20.0, 200_000);
            let closed = si_rmse(&a, &b).unwrap();
            assert!(closed <= grid + 1e-12);
            assert!(grid - closed < 1e-6, "{grid} vs {closed}");
        }
    }

    #[test]
    fn normalized_comparison_ignores_common_exposure() {
        let a = gray(&[0.1, 0.5, 0.3, 0.9, 0.2]);
        let b = gray(&[0.2, 0.4, 0.3, 1.0, 0.1]);
        let r1 = MetricReport::compare_normalized(&a, &b).unwrap();
        let r2 = MetricReport::compare_normalized(&a.scaled([7.0; 3]), &b.scaled([7.0; 3])).unwrap();
        assert!((r1.rmse - r2.rmse).abs() < 1e-6);
        assert!((r1.si_rmse - r2.si_rmse).abs() < 1e-6);
        let (_, rb) = normalize_exposure(&a, &b).unwrap();
        let mut lum: Vec<f64> = rb.pixels().iter().map(|p| p[0] as f64).collect();
        assert!((percentile(&mut lum, 90.0).unwrap() - 0.8).abs() < 1e-6);
        assert!(normalize_exposure(&a, &gray(&[0.0; 5])).is_err());
    }

    #[test]
    fn psnr_examples() {
        assert!((psnr_from_mse(0.01, 1.0) - 20.0).abs() < 1e-12);
        let a = gray(&[0.3]);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), PSNR_CAP_DB);
    }

    #[test]
    fn rgb_angular_examples() {
        let a = Raster::new(1, 1, vec![[1.0, 0.0, 0.0]]).unwrap();
        let b = Raster::new(1, 1, vec![[0.0, 1.0, 0.0]]).unwrap();
        assert!((rgb_angular(&a, &b).unwrap() - 90.0).abs() < 1e-9);
        let c = Raster::new(2, 1, vec![[0.2, 0.5, 0.1], [0.0; 3]]).unwrap();
        let d = Raster::new(2, 1, vec![[0.4, 1.0, 0.2], [1.0; 3]]).unwrap();
        assert_eq!(rgb_angular(&c, &d).unwrap(), 0.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(rmse(&gray(&[0.0]), &gray(&[0.0, 1.0])).is_err());
    }

    #[test]
    fn summary_percentiles() {
        let reports: Vec<MetricReport> = (0..5)
            .map(|i| MetricReport {
                rmse: i as f64,
                si_rmse: 0.0,
                psnr_db: 10.0,
                rgb_angular_deg: 1.0,
            })
            .collect();
        let s = summarize(&reports).unwrap();
        assert_eq!((s.p25.rmse, s.p50.rmse, s.p75.rmse), (1.0, 2.0, 3.0));
        assert!(summarize(&[]).is_none());
    }

    fn raster_strategy() -> impl Strategy<Value = (Raster, Raster)> {
        (1usize..20).prop_flat_map(|n| {
            let px = prop::array::uniform3(0.0f32..2.0);
            (prop::collection::vec(px.clone(), n), prop::collection::vec(px, n))
                .prop_map(move |(a, b)| (Raster::new(n, 1, a).unwrap(), Raster::new(n, 1, b).unwrap()))
        })
    }

    proptest! {
        #[test]
        fn si_rmse_never_exceeds_rmse((a, b) in raster_strategy()) {
            prop_assert!(si_rmse(&a, &b).unwrap() <= rmse(&a, &b).unwrap() + 1e-12);
        }

        #[test]
        fn si_rmse_of_scaled_copy_is_zero((a, _b) in raster_strategy(), k in 0.01f64..50.0) {
            let scaled = a.scaled([k; 3]);
            prop_assert!(si_rmse(&scaled, &a).unwrap() < 1e-5 * (1.0 + rmse(&a, &Raster::filled(a.width(), 1, [0.0; 3])).unwrap()));
        }

        #[test]
        fn rgb_angular_ignores_per_pixel_scaling((a, b) in raster_strategy(), k in prop::collection::vec(0.1f32..10.0, 20)) {
            let mut i = 0;
            let scaled = a.map(|p| { let s = k[i % k.len()]; i += 1; [p[0] * s, p[1] * s, p[2] * s] });
            let d = (rgb_angular(&scaled, &b).unwrap() - rgb_angular(&a, &b).unwrap()).abs();
            prop_assert!(d < 1e-3);
        }
    }
}
