//! Radiance RGBE (`.hdr`) codec. Reads flat and run-length encoded
//! scanlines; writes run-length encoded scanlines.

use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{Raster, Rgb};

pub const SIGNATURE: &[u8] = b"#?";

/// `mantissa * 2^(exponent - 136)`, zero exponent is black.
#[inline]
pub fn rgbe_to_rgb(rgbe: [u8; 4]) -> Rgb {
    if rgbe[3] == 0 {
        return [0.0; 3];
    }
    let f = (rgbe[3] as f32 - 136.0).exp2();
    [rgbe[0] as f32 * f, rgbe[1] as f32 * f, rgbe[2] as f32 * f]
}

#[inline]
pub fn rgb_to_rgbe(rgb: Rgb) -> [u8; 4] {
    let max = rgb[0].max(rgb[1]).max(rgb[2]);
    if !(max >= 1e-32) {
        return [0; 4];
    }
    // max = m * 2^e with m in [0.5, 1).
    let e = max.log2().floor() as i32 + 1;
    let mut scale = 256.0 / (e as f32).exp2();
    let mut e = e;
    if max * scale >= 256.0 {
        scale *= 0.5;
        e += 1;
    }
    let q = |c: f32| ((c.max(0.0) * scale) as u32).min(255) as u8;
    [q(rgb[0]), q(rgb[1]), q(rgb[2]), (e + 128).clamp(0, 255) as u8]
}

fn read_line(bytes: &[u8], pos: &mut usize) -> Result<(usize, String)> {
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos] != b'\n' {
        *pos += 1;
    }
    if *pos >= bytes.len() {
        return Err(Error::parse(start, "unterminated header line"));
    }
    let line = String::from_utf8_lossy(&bytes[start..*pos]).into_owned();
    *pos += 1;
    Ok((start, line))
}

pub fn decode(bytes: &[u8]) -> Result<Raster> {
    if !bytes.starts_with(SIGNATURE) {
        return Err(Error::parse(0, "missing #? signature"));
    }
    let mut pos = 0;
    read_line(bytes, &mut pos)?;
    loop {
        let (off, line) = read_line(bytes, &mut pos)?;
        if line.is_empty() {
            break;
        }
        if let Some(fmt) = line.strip_prefix("FORMAT=") {
            if fmt.trim() != "32-bit_rle_rgbe" {
                return Err(Error::parse(off, format!("unsupported format {fmt:?}")));
            }
        }
    }
    let (off, dims) = read_line(bytes, &mut pos)?;
    let parts: Vec<&str> = dims.split_whitespace().collect();
    let (height, width) = match parts.as_slice() {
        ["-Y", h, "+X", w] => (h.parse::<usize>().ok(), w.parse::<usize>().ok()),
        _ => (None, None),
    };
    let (height, width) = match (height, width) {
        (Some(h), Some(w)) if h > 0 && w > 0 => (h, w),
        _ => {
            return Err(Error::parse(
                off,
                format!("unsupported resolution line {dims:?}"),
            ))
        }
    };
    let mut pixels = Vec::with_capacity(width * height);
    let mut scan = vec![[0u8; 4]; width];
    for _ in 0..height {
        read_scanline(bytes, &mut pos, &mut scan)?;
        pixels.extend(scan.iter().map(|&p| rgbe_to_rgb(p)));
    }
    Raster::new(width, height, pixels)
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
    if *pos + n > bytes.len() {
        return Err(Error::parse(bytes.len(), "truncated scanline data"));
    }
    let s = &bytes[*pos..*pos + n];
    *pos += n;
    Ok(s)
}

fn read_scanline(bytes: &[u8], pos: &mut usize, scan: &mut [[u8; 4]]) -> Result<()> {
    let width = scan.len();
    let start = *pos;
    let head = take(bytes, pos, 4)?;
    let is_rle = (8..0x8000).contains(&width)
        && head[0] == 2
        && head[1] == 2
        && head[2] & 0x80 == 0;
    if !is_rle {
        scan[0] = [head[0], head[1], head[2], head[3]];
        for px in scan.iter_mut().skip(1) {
            let b = take(bytes, pos, 4)?;
            *px = [b[0], b[1], b[2], b[3]];
        }
        return Ok(());
    }
    let encoded_width = ((head[2] as usize) << 8) | head[3] as usize;
    if encoded_width != width {
        return Err(Error::parse(
            start,
            format!("scanline width {encoded_width} != {width}"),
        ));
    }
    for channel in 0..4 {
        let mut x = 0;
        while x < width {
            let off = *pos;
            let count = take(bytes, pos, 1)?[0] as usize;
            if count > 128 {
                let run = count - 128;
                if x + run > width {
                    return Err(Error::parse(off, "run overflows scanline"));
                }
                let value = take(bytes, pos, 1)?[0];
                for px in &mut scan[x..x + run] {
                    px[channel] = value;
                }
                x += run;
            } else {
                if count == 0 || x + count > width {
                    return Err(Error::parse(off, "bad literal count"));
                }
                let values = take(bytes, pos, count)?;
                for (px, &value) in scan[x..x + count].iter_mut().zip(values) {
                    px[channel] = value;
                }
                x += count;
            }
        }
    }
    Ok(())
}

pub fn encode(raster: &Raster) -> Vec<u8> {
    let (w, h) = (raster.width(), raster.height());
    let mut out = format!("#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y {h} +X {w}\n").into_bytes();
    let rle = (8..0x8000).contains(&w);
    for v in 0..h {
        let scan: Vec<[u8; 4]> = (0..w).map(|u| rgb_to_rgbe(raster.get(u, v))).collect();
        if !rle {
            for p in scan {
                out.extend_from_slice(&p);
            }
            continue;
        }
        out.extend_from_slice(&[2, 2, (w >> 8) as u8, (w & 0xff) as u8]);
        for channel in 0..4 {
            let data: Vec<u8> = scan.iter().map(|p| p[channel]).collect();
            encode_channel(&data, &mut out);
        }
    }
    out
}

fn encode_channel(data: &[u8], out: &mut Vec<u8>) {
    let mut i = 0;
    while i < data.len() {
        let mut run = 1;
        while i + run < data.len() && run < 127 && data[i + run] == data[i] {
            run += 1;
        }
        if run >= 3 {
            out.push(128 + run as u8);
            out.push(data[i]);
            i += run;
            continue;
        }
        let start = i;
        while i < data.len() && i - start < 128 {
            let mut ahead = 1;
            while i + ahead < data.len() && ahead < 3 && data[i + ahead] == data[i] {
                ahead += 1;
            }
            if ahead >= 3 {
                break;
            }
            i += 1;
        }
        out.push((i - start) as u8);
        out.extend_from_slice(&data[start..i]);
    }
}

pub fn read(path: impl AsRef<Path>) -> Result<Raster> {
    decode(&std::fs::read(path)?)
}

pub fn write(path: impl AsRef<Path>, raster: &Raster) -> Result<()> {
    std::fs::write(path, encode(raster))?;
    Ok(())
}
