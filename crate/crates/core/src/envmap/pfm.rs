//! Portable float map: `PF\n<w> <h>\n<scale>\n` then float32 RGB rows,
//! bottom row first. A negative scale means little-endian data.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::Raster;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_whitespace(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn token(&mut self) -> Result<(usize, &'a str)> {
        self.skip_whitespace();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, "unexpected end of header"));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::parse(start, "non-ASCII header token"))?;
        Ok((start, text))
    }
}

/// Decodes color (`PF`) or grayscale (`Pf`, expanded to RGB) maps.
pub fn decode(bytes: &[u8]) -> Result<Raster> {
    let mut cur = Cursor { bytes, pos: 0 };
    let (off, magic) = cur.token()?;
    let channels = match magic {
        "PF" => 3,
        "Pf" => 1,
        _ => return Err(Error::parse(off, format!("bad PFM magic {magic:?}"))),
    };
    let (off, w) = cur.token()?;
    let width: usize = w
        .parse()
        .ok()
        .filter(|&w| w > 0)
        .ok_or_else(|| Error::parse(off, format!("bad width {w:?}")))?;
    let (off, h) = cur.token()?;
    let height: usize = h
        .parse()
        .ok()
        .filter(|&h| h > 0)
        .ok_or_else(|| Error::parse(off, format!("bad height {h:?}")))?;
    let (off, s) = cur.token()?;
    let scale: f64 = s
        .parse()
        .ok()
        .filter(|s: &f64| s.is_finite() && *s != 0.0)
        .ok_or_else(|| Error::parse(off, format!("bad scale {s:?}")))?;
    // Exactly one whitespace byte separates the header from the data.
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(Error::parse(cur.pos, "missing newline after scale"));
    }
    let data_start = cur.pos + 1;
    let little = scale < 0.0;
    let needed = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels * 4))
        .ok_or_else(|| Error::parse(off, "dimensions overflow"))?;
    let data = &bytes[data_start..];
    if data.len() < needed {
        return Err(Error::parse(
            data_start + data.len(),
            format!("truncated data: need {needed} bytes, have {}", data.len()),
        ));
    }
    let read = |i: usize| {
        let b = [data[4 * i], data[4 * i + 1], data[4 * i + 2], data[4 * i + 3]];
        if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        }
    };
    let mut pixels = vec![[0.0f32; 3]; width * height];
    for file_row in 0..height {
        let v = height - 1 - file_row;
        for u in 0..width {
            let base = (file_row * width + u) * channels;
            pixels[v * width + u] = if channels == 3 {
                [read(base), read(base + 1), read(base + 2)]
            } else {
                [read(base); 3]
            };
        }
    }
    Raster::new(width, height, pixels)
}

pub fn encode(raster: &Raster) -> Vec<u8> {
    let (w, h) = (raster.width(), raster.height());
    let mut out = format!("PF\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 12);
    for file_row in 0..h {
        let v = h - 1 - file_row;
        for u in 0..w {
            for c in raster.get(u, v) {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
    }
    out
}

pub fn read(path: impl AsRef<Path>) -> Result<Raster> {
    decode(&std::fs::read(path)?)
}

pub fn write(path: impl AsRef<Path>, raster: &Raster) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(raster))?;
    f.sync_all()?;
    Ok(())
}
