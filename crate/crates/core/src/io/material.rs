//! Material files: JSON with a version tag and the 108 parameters in flat
//! `((k * 3 + s) * 2 + t) * 6 + j` order. Floats are written in shortest
//! round-trip decimal form, so a write/read cycle is exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_bytes, write_bytes};
use crate::brdf::{self, DsbrdfMaterial, Params};
use crate::error::{Error, Result};

pub const MATERIAL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialFile {
    pub version: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<Vec<f64>>,
}

impl MaterialFile {
    pub fn from_material(material: &DsbrdfMaterial, name: Option<&str>) -> Self {
        Self {
            version: Some(MATERIAL_VERSION),
            name: name.map(str::to_owned),
            params: material.raw.to_vec(),
            lo: Some(material.lo.to_vec()),
            hi: Some(material.hi.to_vec()),
        }
    }

    /// Validates the file and applies default bounds when none are given.
    pub fn to_material(&self) -> Result<DsbrdfMaterial> {
        if self.version.is_none() {
            return Err(Error::MissingVersion);
        }
        let raw = to_params(&self.params)?;
        let (lo, hi) = match (&self.lo, &self.hi) {
            (Some(lo), Some(hi)) => (to_params(lo)?, to_params(hi)?),
            (None, None) => brdf::default_bounds(),
            _ => return Err(Error::MaterialSyntax("lo and hi must be given together".into())),
        };
        DsbrdfMaterial::new(raw, lo, hi)
    }
}

fn to_params(v: &[f64]) -> Result<Params> {
    v.try_into().map_err(|_| Error::WrongCount(v.len()))
}

pub fn encode_material(material: &DsbrdfMaterial, name: Option<&str>) -> Result<String> {
    let mut text = serde_json::to_string_pretty(&MaterialFile::from_material(material, name))
        .map_err(|e| Error::MaterialSyntax(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn decode_material(text: &str) -> Result<(DsbrdfMaterial, Option<String>)> {
    let file: MaterialFile = serde_json::from_str(text).map_err(|e| Error::MaterialSyntax(e.to_string()))?;
    let material = file.to_material()?;
    Ok((material, file.name))
}

pub fn read_material(path: impl AsRef<Path>) -> Result<DsbrdfMaterial> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::MaterialSyntax("not UTF-8".into()).at(path))?;
    decode_material(text).map(|(m, _)| m).map_err(|e| e.at(path))
}

pub fn write_material(path: impl AsRef<Path>, material: &DsbrdfMaterial, name: Option<&str>) -> Result<()> {
    write_bytes(path.as_ref(), encode_material(material, name)?.as_bytes())
}
