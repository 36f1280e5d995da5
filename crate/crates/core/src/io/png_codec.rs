use std::io::Cursor;
use std::path::Path;

use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::metrics::LdrImage;
use crate::model::{NormalMap, SegmentationMask, Vec3};

fn png_err(e: impl std::fmt::Display) -> Error {
    Error::Png(e.to_string())
}

/// Largest decoded image accepted, in bytes.
const DECODE_LIMIT: usize = 256 << 20;

struct Decoded {
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    data: Vec<u8>,
}

fn decode(bytes: &[u8]) -> Result<Decoded> {
    let mut decoder = png::Decoder::new_with_limits(Cursor::new(bytes), png::Limits { bytes: DECODE_LIMIT });
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Png("image too large".into()))?;
    let mut data = vec![0; size];
    let info = reader.next_frame(&mut data).map_err(png_err)?;
    data.truncate(info.buffer_size());
    Ok(Decoded {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        depth: info.bit_depth,
        data,
    })
}

fn encode(width: usize, height: usize, color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut writer = enc.write_header().map_err(png_err)?;
        writer.write_image_data(data).map_err(png_err)?;
        writer.finish().map_err(png_err)?;
    }
    Ok(out)
}

/// `round((c + 1) / 2 * 65535)`.
pub fn quantize_normal_component(c: f64) -> u16 {
    ((c + 1.0) * 0.5 * 65535.0).round().clamp(0.0, 65535.0) as u16
}

fn dequantize(v: u16) -> f64 {
    f64::from(v) / 65535.0 * 2.0 - 1.0
}

/// RGBA, 16 bits per channel; alpha 65535 marks foreground, 0 background.
pub fn encode_normal_png16(map: &NormalMap) -> Result<Vec<u8>> {
    let mut data = Vec::with_capacity(map.normals().len() * 8);
    for (n, &fg) in map.normals().iter().zip(map.mask()) {
        let px: [u16; 4] = if fg {
            [
                quantize_normal_component(n.x),
                quantize_normal_component(n.y),
                quantize_normal_component(n.z),
                u16::MAX,
            ]
        } else {
            [0; 4]
        };
        for v in px {
            data.extend_from_slice(&v.to_be_bytes());
        }
    }
    encode(
        map.width(),
        map.height(),
        png::ColorType::Rgba,
        png::BitDepth::Sixteen,
        &data,
    )
}

/// Decodes and renormalizes; any nonzero alpha is foreground.
pub fn decode_normal_png16(bytes: &[u8]) -> Result<NormalMap> {
    let img = decode(bytes)?;
    if img.color != png::ColorType::Rgba {
        return Err(Error::NonRgba(format!("{:?}", img.color)));
    }
    if img.depth != png::BitDepth::Sixteen {
        return Err(Error::BitDepthMismatch(format!("{:?}", img.depth)));
    }
    let mut normals = Vec::with_capacity(img.width * img.height);
    let mut mask = Vec::with_capacity(img.width * img.height);
    for px in img.data.chunks_exact(8) {
        let ch = |i: usize| u16::from_be_bytes([px[2 * i], px[2 * i + 1]]);
        if ch(3) == 0 {
            normals.push(Vec3::ZERO);
            mask.push(false);
        } else {
            let n = Vec3::new(dequantize(ch(0)), dequantize(ch(1)), dequantize(ch(2)));
            normals.push(n.normalize()?);
            mask.push(true);
        }
    }
    NormalMap::new(img.width, img.height, normals, mask)
}

pub fn read_normal_png16(path: impl AsRef<Path>) -> Result<NormalMap> {
    let path = path.as_ref();
    decode_normal_png16(&read_bytes(path)?).map_err(|e| e.at(path))
}

pub fn write_normal_png16(path: impl AsRef<Path>, map: &NormalMap) -> Result<()> {
    write_bytes(path.as_ref(), &encode_normal_png16(map)?)
}

/// 8-bit grayscale, pixel value = region id, 255 = background.
pub fn encode_segmentation_png(seg: &SegmentationMask) -> Result<Vec<u8>> {
    if seg.region_count() > 255 {
        return Err(Error::Invalid("at most 255 regions fit in an 8-bit segmentation".into()));
    }
    let data: Vec<u8> = seg
        .region_ids()
        .iter()
        .map(|&r| if r == SegmentationMask::BACKGROUND { 255 } else { r as u8 })
        .collect();
    encode(
        seg.width(),
        seg.height(),
        png::ColorType::Grayscale,
        png::BitDepth::Eight,
        &data,
    )
}

/// Region count is one more than the largest id present.
pub fn decode_segmentation_png(bytes: &[u8]) -> Result<SegmentationMask> {
    let img = decode(bytes)?;
    if img.color != png::ColorType::Grayscale {
        return Err(Error::Png(format!("segmentation must be grayscale, got {:?}", img.color)));
    }
    if img.depth != png::BitDepth::Eight {
        return Err(Error::BitDepthMismatch(format!("{:?}", img.depth)));
    }
    let ids: Vec<u32> = img
        .data
        .iter()
        .map(|&v| if v == 255 { SegmentationMask::BACKGROUND } else { u32::from(v) })
        .collect();
    let count = ids
        .iter()
        .filter(|&&r| r != SegmentationMask::BACKGROUND)
        .max()
        .map_or(1, |&m| m as usize + 1);
    SegmentationMask::new(img.width, img.height, ids, count)
}

pub fn read_segmentation_png(path: impl AsRef<Path>) -> Result<SegmentationMask> {
    let path = path.as_ref();
    decode_segmentation_png(&read_bytes(path)?).map_err(|e| e.at(path))
}

pub fn write_segmentation_png(path: impl AsRef<Path>, seg: &SegmentationMask) -> Result<()> {
    write_bytes(path.as_ref(), &encode_segmentation_png(seg)?)
}

/// 8-bit RGB preview of a tone-mapped image.
pub fn write_preview_png(path: impl AsRef<Path>, img: &LdrImage) -> Result<()> {
    let data: Vec<u8> = img
        .pixels
        .iter()
        .flat_map(|c| c.map(|v| v.round().clamp(0.0, 255.0) as u8))
        .collect();
    let bytes = encode(img.width, img.height, png::ColorType::Rgb, png::BitDepth::Eight, &data)?;
    write_bytes(path.as_ref(), &bytes)
}
