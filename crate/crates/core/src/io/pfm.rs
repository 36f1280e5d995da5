//! Portable float map, color variant only.
//!
//! Layout: `PF\n<width> <height>\n<scale>\n` followed by `width * height`
//! RGB triples of 32-bit floats, bottom row first. A negative scale means
//! little-endian; this writer always emits `-1.0`.

use std::path::Path;

use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::model::{EnvironmentMap, RadianceImage, Rgb};

#[derive(Debug, Clone, PartialEq)]
pub struct PfmImage {
    pub width: usize,
    pub height: usize,
    /// Top row first.
    pub data: Vec<[f32; 3]>,
}

impl PfmImage {
    pub fn to_rgb(&self) -> Vec<Rgb> {
        self.data.iter().map(|c| c.map(f64::from)).collect()
    }
}

pub fn encode_pfm(width: usize, height: usize, pixels: &[Rgb]) -> Result<Vec<u8>> {
    if pixels.len() != width * height {
        return Err(Error::ShapeMismatch(format!(
            "{} pixels for a {width}x{height} image",
            pixels.len()
        )));
    }
    if pixels.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("cannot write non-finite values to PFM".into()));
    }
    let header = format!("PF\n{width} {height}\n-1.0\n");
    let mut out = Vec::with_capacity(header.len() + pixels.len() * 12);
    out.extend_from_slice(header.as_bytes());
    for y in (0..height).rev() {
        for c in &pixels[y * width..(y + 1) * width] {
            for v in c {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}

/// Splits off the next whitespace-delimited header token.
fn token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
        if *pos - start > 32 {
            return Err(Error::MalformedHeader("header token too long".into()));
        }
    }
    if start == *pos {
        return Err(Error::MalformedHeader("unexpected end of header".into()));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| Error::MalformedHeader("non-ASCII header".into()))
}

pub fn decode_pfm(bytes: &[u8]) -> Result<PfmImage> {
    let mut pos = 0;
    match token(bytes, &mut pos)? {
        "PF" => {}
        "Pf" => return Err(Error::MalformedHeader("grayscale PFM (Pf) is not supported".into())),
        other => return Err(Error::MalformedHeader(format!("bad magic {other:?}"))),
    }
    let dim = |s: &str| -> Result<usize> {
        match s.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(Error::MalformedHeader(format!("bad dimension {s:?}"))),
        }
    };
    let width = dim(token(bytes, &mut pos)?)?;
    let height = dim(token(bytes, &mut pos)?)?;
    let scale: f64 = token(bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::MalformedHeader("bad scale".into()))?;
    if !(scale.is_finite() && scale != 0.0) {
        return Err(Error::MalformedHeader("scale must be finite and nonzero".into()));
    }
    // exactly one whitespace byte separates the header from the payload
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::MalformedHeader("missing separator after scale".into()));
    }
    pos += 1;
    let little = scale < 0.0;
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(12))
        .ok_or_else(|| Error::MalformedHeader("image dimensions overflow".into()))?;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            got: payload.len(),
        });
    }
    let mut data = vec![[0.0f32; 3]; width * height];
    for (i, chunk) in payload[..expected].chunks_exact(4).enumerate() {
        let raw: [u8; 4] = chunk.try_into().unwrap();
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        if !v.is_finite() {
            return Err(Error::NanInFile);
        }
        let px = i / 3;
        let (file_row, x) = (px / width, px % width);
        data[(height - 1 - file_row) * width + x][i % 3] = v;
    }
    Ok(PfmImage { width, height, data })
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<PfmImage> {
    let path = path.as_ref();
    decode_pfm(&read_bytes(path)?).map_err(|e| e.at(path))
}

pub fn write_pfm(path: impl AsRef<Path>, width: usize, height: usize, pixels: &[Rgb]) -> Result<()> {
    let path = path.as_ref();
    write_bytes(path, &encode_pfm(width, height, pixels)?)
}

pub fn read_radiance_pfm(path: impl AsRef<Path>) -> Result<RadianceImage> {
    let img = read_pfm(&path)?;
    RadianceImage::new(img.width, img.height, img.to_rgb())
}

pub fn write_radiance_pfm(path: impl AsRef<Path>, img: &RadianceImage) -> Result<()> {
    write_pfm(path, img.width, img.height, &img.pixels)
}

/// Environment maps are stored `width_l x height_l`, row 0 at the `+y` pole.
pub fn read_env_pfm(path: impl AsRef<Path>) -> Result<EnvironmentMap> {
    let path = path.as_ref();
    let img = read_pfm(path)?;
    EnvironmentMap::new(img.height, img.width, img.to_rgb()).map_err(|e| e.at(path))
}

pub fn write_env_pfm(path: impl AsRef<Path>, env: &EnvironmentMap) -> Result<()> {
    write_pfm(path, env.width(), env.height(), env.radiance())
}
