//! 8-bit PNG previews and layout maps, via the `image` crate.

use std::io::Cursor;
use std::path::Path;

use image::{ImageBuffer, ImageFormat, Luma, Rgb as PngRgb};

use crate::error::{Error, Result};
use crate::raster::Raster;

#[inline]
pub fn quantize(x: f32) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes an already display-ready raster (values in `[0, 1]`).
pub fn encode_rgb(raster: &Raster) -> Result<Vec<u8>> {
    let img = ImageBuffer::<PngRgb<u8>, _>::from_fn(
        raster.width() as u32,
        raster.height() as u32,
        |u, v| PngRgb(raster.get(u as usize, v as usize).map(quantize)),
    );
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Codec(e.to_string()))?;
    Ok(out.into_inner())
}

/// Single-channel encoding of the first channel.
pub fn encode_gray(raster: &Raster) -> Result<Vec<u8>> {
    let img = ImageBuffer::<Luma<u8>, _>::from_fn(
        raster.width() as u32,
        raster.height() as u32,
        |u, v| Luma([quantize(raster.get(u as usize, v as usize)[0])]),
    );
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Codec(e.to_string()))?;
    Ok(out.into_inner())
}

/// Decodes any PNG to RGB in `[0, 1]` (no linearization).
pub fn decode(bytes: &[u8]) -> Result<Raster> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::Codec(e.to_string()))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels = img
        .pixels()
        .map(|p| p.0.map(|c| c as f32 / 255.0))
        .collect();
    Raster::new(w, h, pixels)
}

pub fn read(path: impl AsRef<Path>) -> Result<Raster> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_bit_roundtrip_is_exact() {
        let raster = Raster::from_fn(16, 16, |u, v| {
            let b = (u * 16 + v) as f32 / 255.0;
            [b, 1.0 - b, 0.5]
        });
        let back = decode(&encode_rgb(&raster).unwrap()).unwrap();
        for (a, b) in raster.pixels().iter().zip(back.pixels()) {
            for c in 0..3 {
                assert_eq!(quantize(a[c]), quantize(b[c]));
            }
        }
        let gray = decode(&encode_gray(&raster).unwrap()).unwrap();
        assert_eq!(gray.get(3, 0)[0], gray.get(3, 0)[2]);
    }
}
