//! Procedural normal maps, environment maps and materials.

use crate::brdf::{self, DsbrdfMaterial};
use crate::error::{Error, Result};
use crate::model::{Camera, EnvironmentMap, NormalMap, SegmentationMask, Vec3};
use crate::render::{build_light_table, RenderScene};
use crate::spline;

/// Normal of the unit sphere seen orthographically at image-plane point
/// `(u, v)`, with `v` growing downward; `None` outside the disk.
pub fn sphere_normal(u: f64, v: f64) -> Option<Vec3> {
    let r2 = u * u + v * v;
    if r2 > 1.0 {
        return None;
    }
    Some(Vec3::new(u, -v, (1.0 - r2).sqrt()))
}

/// Orthographic unit sphere filling a `resolution x resolution` image.
pub fn sphere_normal_map(resolution: usize) -> Result<NormalMap> {
    if resolution < 8 {
        return Err(Error::Invalid(format!("sphere resolution {resolution} below 8")));
    }
    let r = resolution as f64;
    let mut normals = Vec::with_capacity(resolution * resolution);
    let mut mask = Vec::with_capacity(resolution * resolution);
    for y in 0..resolution {
        for x in 0..resolution {
            let u = 2.0 * (x as f64 + 0.5) / r - 1.0;
            let v = 2.0 * (y as f64 + 0.5) / r - 1.0;
            match sphere_normal(u, v) {
                // renormalize to absorb rounding in the square root
                Some(n) => {
                    normals.push(n.normalize()?);
                    mask.push(true);
                }
                None => {
                    normals.push(Vec3::ZERO);
                    mask.push(false);
                }
            }
        }
    }
    NormalMap::new(resolution, resolution, normals, mask)
}

/// Every pixel foreground with normal `n`.
pub fn plane_normal_map(resolution: usize, n: Vec3) -> Result<NormalMap> {
    if resolution == 0 {
        return Err(Error::Invalid("plane resolution must be positive".into()));
    }
    let len = resolution * resolution;
    NormalMap::new(resolution, resolution, vec![n; len], vec![true; len])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub direction: Vec3,
    pub sigma: f64,
    pub rgb: [f64; 3],
}

/// Sum of angular Gaussians over the sphere.
pub fn gaussian_blob_env(height: usize, width: usize, blobs: &[Blob]) -> Result<EnvironmentMap> {
    let mut dirs = Vec::with_capacity(blobs.len());
    for b in blobs {
        if !(b.sigma > 0.0) || b.rgb.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::Invalid("blob sigma must be positive and rgb nonnegative".into()));
        }
        dirs.push(b.direction.normalize()?);
    }
    let table = build_light_table(height, width)?;
    let radiance = table
        .directions
        .iter()
        .map(|d| {
            let mut c = [0.0; 3];
            for (b, dir) in blobs.iter().zip(&dirs) {
                let angle = d.dot(*dir).clamp(-1.0, 1.0).acos();
                let g = (-angle * angle / (2.0 * b.sigma * b.sigma)).exp();
                for k in 0..3 {
                    c[k] += b.rgb[k] * g;
                }
            }
            c
        })
        .collect();
    EnvironmentMap::new(height, width, radiance)
}

/// Key light upper-right-front, dimmer fill from the left, faint sky.
pub fn default_blobs() -> Vec<Blob> {
    vec![
        Blob {
            direction: Vec3::new(0.5, 0.6, 0.62),
            sigma: 0.35,
            rgb: [6.0, 5.6, 5.0],
        },
        Blob {
            direction: Vec3::new(-0.8, 0.1, 0.3),
            sigma: 0.6,
            rgb: [0.8, 1.0, 1.4],
        },
        Blob {
            direction: Vec3::new(0.0, 1.0, 0.0),
            sigma: 1.2,
            rgb: [0.3, 0.35, 0.45],
        },
    ]
}

pub fn default_env(height: usize, width: usize) -> Result<EnvironmentMap> {
    gaussian_blob_env(height, width, &default_blobs())
}

/// Material with curve `(k, s, t)` linear in the control-point index,
/// from `start(k, s, t)` to `end(k, s, t)`.
fn ramp_material(start: impl Fn(usize, usize, usize) -> f64, end: impl Fn(usize, usize, usize) -> f64) -> DsbrdfMaterial {
    let mut raw = [0.0; brdf::PARAM_COUNT];
    let last = (spline::CONTROL_POINTS - 1) as f64;
    for k in 0..brdf::CHANNELS {
        for s in 0..brdf::LOBES {
            for t in 0..brdf::COEFFS_PER_LOBE {
                let (a, b) = (start(k, s, t), end(k, s, t));
                for j in 0..spline::CONTROL_POINTS {
                    raw[brdf::flat_index(k, s, t, j)] = a + (b - a) * j as f64 / last;
                }
            }
        }
    }
    DsbrdfMaterial::with_default_bounds(raw).expect("preset parameters are finite")
}

fn matte() -> DsbrdfMaterial {
    let albedo = [0.45, 0.35, 0.25];
    let split = [0.6, 0.3, 0.1];
    DsbrdfMaterial::from_constant_curves(|k, s, t| if t == 0 { albedo[k] * split[s] } else { 1.0 }).unwrap()
}

fn glossy() -> DsbrdfMaterial {
    let diffuse = [0.25, 0.3, 0.4];
    ramp_material(
        |k, s, t| match (s, t) {
            (0, 0) => diffuse[k],
            (0, 1) => 1.0,
            (1, 0) => 2.0,
            (1, 1) => 12.0,
            (_, 0) => 0.0,
            _ => 1.0,
        },
        |k, s, t| match (s, t) {
            (0, 0) => diffuse[k],
            (0, 1) => 1.0,
            (1, 0) => 2.6,
            (1, 1) => 16.0,
            (_, 0) => 0.0,
            _ => 1.0,
        },
    )
}

fn two_tone_red() -> DsbrdfMaterial {
    let albedo = [0.7, 0.15, 0.1];
    ramp_material(
        |k, s, t| match (s, t) {
            (0, 0) => albedo[k],
            (1, 0) => 0.4,
            (2, 0) => 0.0,
            (1, 1) => 6.0,
            _ => 1.0,
        },
        |k, s, t| match (s, t) {
            (0, 0) => albedo[k],
            (1, 0) => 0.6,
            (2, 0) => 0.0,
            (1, 1) => 8.0,
            _ => 1.0,
        },
    )
}

fn two_tone_blue() -> DsbrdfMaterial {
    let albedo = [0.1, 0.2, 0.6];
    ramp_material(
        |k, s, t| match (s, t) {
            (0, 0) => albedo[k],
            (1, 0) => 1.5,
            (2, 0) => 0.2,
            (1, 1) => 20.0,
            (2, 1) => 3.0,
            _ => 1.0,
        },
        |k, s, t| match (s, t) {
            (0, 0) => albedo[k],
            (1, 0) => 2.0,
            (2, 0) => 0.2,
            (1, 1) => 20.0,
            (2, 1) => 3.0,
            _ => 1.0,
        },
    )
}

/// Named canned materials.
pub fn preset_materials() -> Vec<(&'static str, DsbrdfMaterial)> {
    vec![
        ("zero", DsbrdfMaterial::zero()),
        ("matte", matte()),
        ("glossy", glossy()),
        ("two-tone-red", two_tone_red()),
        ("two-tone-blue", two_tone_blue()),
    ]
}

pub fn preset(name: &str) -> Option<DsbrdfMaterial> {
    preset_materials().into_iter().find(|(n, _)| *n == name).map(|(_, m)| m)
}

/// Left half region 0, right half region 1, background outside `mask`.
pub fn split_segmentation(normals: &NormalMap) -> Result<SegmentationMask> {
    let w = normals.width();
    let ids = normals
        .mask()
        .iter()
        .enumerate()
        .map(|(p, &fg)| {
            if !fg {
                SegmentationMask::BACKGROUND
            } else if p % w < w / 2 {
                0
            } else {
                1
            }
        })
        .collect();
    SegmentationMask::new(w, normals.height(), ids, 2)
}

/// Orthographic glossy sphere under the default blob environment.
pub fn default_scene(resolution: usize, env_height: usize, env_width: usize) -> Result<RenderScene> {
    let normals = sphere_normal_map(resolution)?;
    let camera = Camera::orthographic(resolution, resolution)?;
    let env = default_env(env_height, env_width)?;
    RenderScene::single(normals, camera, env, glossy())
}
