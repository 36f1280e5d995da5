//! File formats: PFM for radiance and environment maps, 16-bit PNG for
//! normal maps, 8-bit PNG for segmentations and previews, and a JSON text
//! format for materials.

mod material;
mod pfm;
mod png_codec;

pub use material::{decode_material, encode_material, read_material, write_material, MaterialFile, MATERIAL_VERSION};
pub use pfm::{
    decode_pfm, encode_pfm, read_env_pfm, read_pfm, read_radiance_pfm, write_env_pfm, write_pfm, write_radiance_pfm,
    PfmImage,
};
pub use png_codec::{
    decode_normal_png16, decode_segmentation_png, encode_normal_png16, encode_segmentation_png, quantize_normal_component,
    read_normal_png16, read_segmentation_png, write_normal_png16, write_preview_png, write_segmentation_png,
};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::from(e).at(path))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::from(e).at(path))
}
