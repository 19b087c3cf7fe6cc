//! Plain row-major RGB float buffers shared by environment maps and renders.

use crate::error::{Error, Result};

pub type Rgb = [f32; 3];

/// Row-major RGB image, row 0 at the top.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl Raster {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("empty raster {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::invalid(format!(
                "raster {width}x{height} needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Raster {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: Rgb) -> Self {
        Raster {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                pixels.push(f(u, v));
            }
        }
        Raster {
            width,
            height,
            pixels,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    #[inline]
    pub fn pixels_mut(&mut self) -> &mut [Rgb] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<Rgb> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Rgb {
        self.pixels[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: Rgb) {
        self.pixels[v * self.width + u] = value;
    }

    pub fn same_shape(&self, other: &Raster) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::ResolutionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    pub fn map(&self, mut f: impl FnMut(Rgb) -> Rgb) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn scaled(&self, factor: [f64; 3]) -> Raster {
        self.map(|p| {
            [
                (p[0] as f64 * factor[0]) as f32,
                (p[1] as f64 * factor[1]) as f32,
                (p[2] as f64 * factor[2]) as f32,
            ]
        })
    }

    /// Mean of the RGB channels, the luminance used throughout this crate.
    #[inline]
    pub fn luminance_at(&self, index: usize) -> f64 {
        luminance(self.pixels[index])
    }

    pub fn mean_luminance(&self) -> f64 {
        self.pixels.iter().map(|&p| luminance(p)).sum::<f64>() / self.pixels.len() as f64
    }

    pub fn channel_means(&self) -> [f64; 3] {
        let mut acc = [0.0f64; 3];
        for p in &self.pixels {
            for c in 0..3 {
                acc[c] += p[c] as f64;
            }
        }
        let n = self.pixels.len() as f64;
        acc.map(|a| a / n)
    }

    pub fn all_finite_non_negative(&self) -> bool {
        self.pixels
            .iter()
            .all(|p| p.iter().all(|c| c.is_finite() && *c >= 0.0))
    }
}

#[inline]
pub fn luminance(p: Rgb) -> f64 {
    (p[0] as f64 + p[1] as f64 + p[2] as f64) / 3.0
}
