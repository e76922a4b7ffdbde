//! Portable float maps: 32-bit float images with one or three channels.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Row-major, top row first.
    pub data: Vec<f32>,
}

impl FloatImage {
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }
}

/// Encodes little-endian with rows stored bottom to top.
pub fn encode_pfm(img: &FloatImage) -> Vec<u8> {
    let magic = if img.channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{magic}\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    let row = img.width * img.channels;
    for y in (0..img.height).rev() {
        for v in &img.data[y * row..(y + 1) * row] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_pfm(img: &FloatImage, path: &Path) -> Result<()> {
    assert!(img.channels == 1 || img.channels == 3, "PFM holds 1 or 3 channels");
    std::fs::write(path, encode_pfm(img)).map_err(|e| Error::io(path, e))
}

pub fn read_pfm(path: &Path) -> Result<FloatImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes, path)
}

pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<FloatImage> {
    let mut pos = 0;
    let mut token = |what: &str| -> Result<(String, usize)> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(path, start, format!("missing {what}")));
        }
        Ok((String::from_utf8_lossy(&bytes[start..pos]).into_owned(), start))
    };
    let (magic, at) = token("magic")?;
    let channels = match magic.as_str() {
        "PF" => 3,
        "Pf" => 1,
        _ => return Err(Error::parse(path, at, format!("bad magic {magic:?}"))),
    };
    let mut dim = |what: &str| -> Result<usize> {
        let (t, at) = token(what)?;
        t.parse().map_err(|_| Error::parse(path, at, format!("bad {what} {t:?}")))
    };
    let width = dim("width")?;
    let height = dim("height")?;
    let (scale, at) = token("scale")?;
    let scale: f64 = scale
        .parse()
        .map_err(|_| Error::parse(path, at, format!("bad scale {scale:?}")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::parse(path, at, "scale must be non-zero"));
    }
    let little = scale < 0.0;
    // exactly one whitespace byte separates the header from the raster
    let body = pos + 1;
    let n = width * height * channels;
    if bytes.len() < body + 4 * n {
        return Err(Error::parse(
            path,
            bytes.len(),
            format!("raster truncated: need {} bytes after header", 4 * n),
        ));
    }
    let mut data = vec![0f32; n];
    let row = width * channels;
    for (r, chunk) in bytes[body..body + 4 * n].chunks_exact(4 * row).enumerate() {
        let y = height - 1 - r;
        for (k, b) in chunk.chunks_exact(4).enumerate() {
            let b: [u8; 4] = b.try_into().unwrap();
            data[y * row + k] = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        }
    }
    Ok(FloatImage {
        width,
        height,
        channels,
        data,
    })
}
