//! Forward rendering: a discrete environment-light sum per pixel.
//!
//! Every environment texel is a directional light at its texel-center
//! direction, weighted by its solid angle `sin(theta) * dtheta * dphi`:
//!
//! `I_p^k = sum_i f^k(w_i, w_p, m) * L^k(i) * max(0, n_p . w_i) * weight_i`

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::brdf::{self, Coeffs, DsbrdfMaterial, Params};
use crate::error::{Error, Result};
use crate::fixtures;
use crate::model::{Camera, EnvironmentMap, NormalMap, RadianceImage, Rgb, SegmentationMask, Vec3};
use crate::spline::{self, SparseBasis};

/// Light directions and solid-angle weights of an environment map layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LightTable {
    pub height: usize,
    pub width: usize,
    pub directions: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl LightTable {
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
}

/// Texel `(h, w)` sits at polar angle `theta = (h + 0.5) / H * pi` from `+y`
/// and azimuth `phi = (w + 0.5) / W * 2 pi`; its direction is
/// `(cos phi sin theta, cos theta, sin phi sin theta)`.
pub fn build_light_table(height: usize, width: usize) -> Result<LightTable> {
    if height == 0 || width == 0 {
        return Err(Error::Invalid(format!("light table size {height}x{width}")));
    }
    let d_theta = PI / height as f64;
    let d_phi = 2.0 * PI / width as f64;
    let mut directions = Vec::with_capacity(height * width);
    let mut weights = Vec::with_capacity(height * width);
    for h in 0..height {
        let theta = (h as f64 + 0.5) * d_theta;
        let (st, ct) = theta.sin_cos();
        for w in 0..width {
            let phi = (w as f64 + 0.5) * d_phi;
            let (sp, cp) = phi.sin_cos();
            directions.push(Vec3::new(cp * st, ct, sp * st));
            weights.push(st * d_theta * d_phi);
        }
    }
    Ok(LightTable {
        height,
        width,
        directions,
        weights,
    })
}

/// A complete forward-rendering input.
#[derive(Debug, Clone)]
pub struct RenderScene {
    pub normal_map: NormalMap,
    pub camera: Camera,
    pub env: EnvironmentMap,
    pub materials: Vec<DsbrdfMaterial>,
    pub segmentation: Option<SegmentationMask>,
}

impl RenderScene {
    pub fn new(
        normal_map: NormalMap,
        camera: Camera,
        env: EnvironmentMap,
        materials: Vec<DsbrdfMaterial>,
        segmentation: Option<SegmentationMask>,
    ) -> Result<Self> {
        let scene = Self {
            normal_map,
            camera,
            env,
            materials,
            segmentation,
        };
        scene.validate()?;
        Ok(scene)
    }

    /// Single-material scene.
    pub fn single(normal_map: NormalMap, camera: Camera, env: EnvironmentMap, material: DsbrdfMaterial) -> Result<Self> {
        Self::new(normal_map, camera, env, vec![material], None)
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.normal_map.width(), self.normal_map.height());
        if self.camera.width != w || self.camera.height != h {
            return Err(Error::ShapeMismatch(format!(
                "camera {}x{} vs normal map {w}x{h}",
                self.camera.width, self.camera.height
            )));
        }
        check_regions(&self.normal_map, self.segmentation.as_ref(), self.materials.len())
    }

    pub fn width(&self) -> usize {
        self.normal_map.width()
    }

    pub fn height(&self) -> usize {
        self.normal_map.height()
    }

    pub fn region_count(&self) -> usize {
        self.segmentation.as_ref().map_or(1, |s| s.region_count())
    }

    pub fn light_table(&self) -> LightTable {
        build_light_table(self.env.height(), self.env.width()).expect("environment map is non-empty")
    }

    pub fn material_params(&self) -> Vec<Params> {
        self.materials.iter().map(|m| m.raw).collect()
    }

    pub fn with_materials(&self, materials: Vec<DsbrdfMaterial>) -> Result<Self> {
        Self::new(
            self.normal_map.clone(),
            self.camera,
            self.env.clone(),
            materials,
            self.segmentation.clone(),
        )
    }

    pub fn with_env(&self, env: EnvironmentMap) -> Result<Self> {
        Self::new(
            self.normal_map.clone(),
            self.camera,
            env,
            self.materials.clone(),
            self.segmentation.clone(),
        )
    }
}

pub(crate) fn check_regions(normal_map: &NormalMap, seg: Option<&SegmentationMask>, materials: usize) -> Result<()> {
    match seg {
        None => {
            if materials != 1 {
                return Err(Error::RegionCountMismatch {
                    expected: 1,
                    got: materials,
                });
            }
        }
        Some(seg) => {
            if seg.width() != normal_map.width() || seg.height() != normal_map.height() {
                return Err(Error::ShapeMismatch(format!(
                    "segmentation {}x{} vs normal map {}x{}",
                    seg.width(),
                    seg.height(),
                    normal_map.width(),
                    normal_map.height()
                )));
            }
            if seg.region_count() != materials {
                return Err(Error::RegionCountMismatch {
                    expected: seg.region_count(),
                    got: materials,
                });
            }
            let uncovered = normal_map
                .mask()
                .iter()
                .zip(seg.region_ids())
                .position(|(&fg, &r)| fg && r == SegmentationMask::BACKGROUND);
            if let Some(i) = uncovered {
                return Err(Error::Invalid(format!(
                    "foreground pixel ({}, {}) has no material region",
                    i % normal_map.width(),
                    i / normal_map.width()
                )));
            }
        }
    }
    Ok(())
}

/// Borrowed, unvalidated buffers consumed by the renderer and its gradient.
///
/// Normals need not be unit length and radiance need not be nonnegative, so
/// finite-difference probes and optimizer iterates can be rendered directly.
#[derive(Debug, Clone)]
pub struct SceneView<'a> {
    pub width: usize,
    pub height: usize,
    pub normals: &'a [Vec3],
    pub mask: &'a [bool],
    pub regions: Option<&'a [u32]>,
    pub camera: &'a Camera,
    pub lights: &'a LightTable,
    pub env: &'a [Rgb],
    pub materials: Vec<&'a Params>,
}

impl<'a> SceneView<'a> {
    pub fn of(scene: &'a RenderScene, lights: &'a LightTable) -> Self {
        Self {
            width: scene.width(),
            height: scene.height(),
            normals: scene.normal_map.normals(),
            mask: scene.normal_map.mask(),
            regions: scene.segmentation.as_ref().map(|s| s.region_ids()),
            camera: &scene.camera,
            lights,
            env: scene.env.radiance(),
            materials: scene.materials.iter().map(|m| &m.raw).collect(),
        }
    }

    #[inline]
    pub fn region(&self, p: usize) -> usize {
        self.regions.map_or(0, |r| r[p] as usize)
    }
}

/// Geometry of one (light, view) pair that does not depend on the normal.
#[derive(Debug, Clone, Copy)]
pub(crate) struct HalfAngle {
    pub h: Vec3,
    pub basis: SparseBasis,
}

#[inline]
fn half_angle(omega_i: Vec3, omega_p: Vec3) -> Option<HalfAngle> {
    brdf::half_vector(omega_i, omega_p).map(|(h, theta_d)| HalfAngle {
        h,
        basis: spline::sparse_basis(theta_d),
    })
}

/// One lit (pixel, light) term handed to a per-pixel visitor.
pub(crate) struct Pair<'c> {
    pub light: usize,
    pub omega_i: Vec3,
    /// `n . w_i`, always positive.
    pub cos: f64,
    pub weight: f64,
    pub h: Vec3,
    /// Unclamped `h . n`.
    pub h_dot_n: f64,
    pub ln_base: f64,
    pub basis: SparseBasis,
    pub coeffs: &'c Coeffs,
}

/// Shared per-render state. With an orthographic camera every pixel sees the
/// same view direction, so half vectors and lobe coefficients are computed
/// once per light; the cached values are the ones the per-pair path would
/// produce, so output does not depend on whether the cache is used.
pub(crate) struct Shading<'v, 'a> {
    pub view: &'v SceneView<'a>,
    per_light: Option<Vec<Option<HalfAngle>>>,
    per_light_coeffs: Option<Vec<Vec<Coeffs>>>,
}

impl<'v, 'a> Shading<'v, 'a> {
    pub fn new(view: &'v SceneView<'a>) -> Result<Self> {
        check_view(view)?;
        let (per_light, per_light_coeffs) = if view.camera.is_orthographic() {
            let omega_p = view.camera.view_direction(0, 0);
            let table: Vec<_> = view.lights.directions.iter().map(|&d| half_angle(d, omega_p)).collect();
            let coeffs = view
                .materials
                .iter()
                .map(|raw| {
                    table
                        .iter()
                        .map(|g| g.map_or([0.0; brdf::CURVES], |g| brdf::coeffs_with_basis(&raw[..], &g.basis)))
                        .collect()
                })
                .collect();
            (Some(table), Some(coeffs))
        } else {
            (None, None)
        };
        Ok(Self {
            view,
            per_light,
            per_light_coeffs,
        })
    }

    /// Calls `visit` for every light with `n . w_i > 0`, nonzero radiance and
    /// a valid half vector, in light-index order.
    #[inline]
    pub fn for_each_pair<F: FnMut(&Pair)>(&self, p: usize, visit: F) {
        self.for_each_pair_with(p, false, visit)
    }

    /// [`Self::for_each_pair`], also visiting zero-radiance lights when
    /// `include_dark` is set.
    #[inline]
    pub fn for_each_pair_with<F: FnMut(&Pair)>(&self, p: usize, include_dark: bool, mut visit: F) {
        let view = self.view;
        let n = view.normals[p];
        let region = view.region(p);
        let lights = view.lights;
        let omega_p = view.camera.view_direction(p % view.width, p / view.width);
        let mut local: brdf::Coeffs;
        for i in 0..lights.len() {
            let omega_i = lights.directions[i];
            let cos = n.dot(omega_i);
            if !(cos > 0.0) {
                continue;
            }
            if !include_dark && view.env[i] == [0.0; 3] {
                continue;
            }
            let (half, coeffs) = match (&self.per_light, &self.per_light_coeffs) {
                (Some(table), Some(cache)) => match table[i] {
                    Some(g) => (g, &cache[region][i]),
                    None => continue,
                },
                _ => match half_angle(omega_i, omega_p) {
                    Some(g) => {
                        local = brdf::coeffs_with_basis(&view.materials[region][..], &g.basis);
                        (g, &local)
                    }
                    None => continue,
                },
            };
            let h_dot_n = half.h.dot(n);
            visit(&Pair {
                light: i,
                omega_i,
                cos,
                weight: lights.weights[i],
                h: half.h,
                h_dot_n,
                ln_base: brdf::lobe_base(h_dot_n).ln(),
                basis: half.basis,
                coeffs,
            });
        }
    }

    /// Rendered radiance of pixel `p`.
    pub fn shade(&self, p: usize) -> Result<Rgb> {
        let env = self.view.env;
        let mut acc = [0.0; 3];
        let mut overflow = None;
        self.for_each_pair(p, |pair| {
            let f = brdf::eval_coeffs(pair.coeffs, pair.ln_base);
            let l = env[pair.light];
            let scale = pair.cos * pair.weight;
            for k in 0..3 {
                if !(f[k].abs() <= brdf::OVERFLOW_LIMIT) {
                    overflow.get_or_insert(f[k]);
                }
                acc[k] += f[k] * l[k] * scale;
            }
        });
        match overflow {
            Some(value) => Err(Error::Overflow {
                x: p % self.view.width,
                y: p / self.view.width,
                value,
            }),
            None => Ok(acc),
        }
    }
}

fn check_view(view: &SceneView) -> Result<()> {
    let len = view.width * view.height;
    if view.normals.len() != len || view.mask.len() != len || view.regions.is_some_and(|r| r.len() != len) {
        return Err(Error::ShapeMismatch("scene buffers do not match image size".into()));
    }
    if view.camera.width != view.width || view.camera.height != view.height {
        return Err(Error::ShapeMismatch("camera does not match image size".into()));
    }
    if view.env.len() != view.lights.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} environment texels for {} lights",
            view.env.len(),
            view.lights.len()
        )));
    }
    if view.materials.is_empty() {
        return Err(Error::Invalid("scene has no material".into()));
    }
    for p in 0..len {
        if view.mask[p] && view.region(p) >= view.materials.len() {
            return Err(Error::RegionCountMismatch {
                expected: view.region(p) + 1,
                got: view.materials.len(),
            });
        }
    }
    Ok(())
}

/// One stored transport term: the BRDF value and `cos * weight` of a pair.
#[derive(Debug, Clone, Copy)]
struct TransportTerm {
    light: u32,
    f: Rgb,
    scale: f64,
}

/// Light transport of a view with its normals and materials frozen.
///
/// The image is linear in radiance, so once the BRDF terms are stored any
/// environment renders with a sparse product. Terms are summed in light order
/// with the rounding of [`render_view`], so both give bit-identical images.
pub(crate) struct Transport {
    width: usize,
    height: usize,
    lights: usize,
    /// Foreground pixels and their terms.
    pixels: Vec<(usize, Vec<TransportTerm>)>,
}

impl Transport {
    /// `None` when the view needs more than `max_terms` terms or a stored
    /// BRDF value would overflow (the renderer reports that case itself).
    pub fn build(view: &SceneView, max_terms: usize) -> Result<Option<Self>> {
        let shading = Shading::new(view)?;
        let foreground: Vec<usize> = (0..view.mask.len()).filter(|&p| view.mask[p]).collect();
        if foreground.len().saturating_mul(view.lights.len()) > max_terms {
            return Ok(None);
        }
        let pixels: Vec<Option<(usize, Vec<TransportTerm>)>> = foreground
            .into_par_iter()
            .map(|p| {
                let mut terms = Vec::new();
                let mut finite = true;
                shading.for_each_pair_with(p, true, |pair| {
                    let f = brdf::eval_coeffs(pair.coeffs, pair.ln_base);
                    finite &= f.iter().all(|v| v.abs() <= brdf::OVERFLOW_LIMIT);
                    terms.push(TransportTerm {
                        light: pair.light as u32,
                        f,
                        scale: pair.cos * pair.weight,
                    });
                });
                finite.then_some((p, terms))
            })
            .collect();
        Ok(pixels.into_iter().collect::<Option<Vec<_>>>().map(|pixels| Self {
            width: view.width,
            height: view.height,
            lights: view.lights.len(),
            pixels,
        }))
    }

    /// Image under `env`; background pixels are black.
    pub fn render(&self, env: &[Rgb]) -> Result<Vec<Rgb>> {
        if env.len() != self.lights {
            return Err(Error::ShapeMismatch(format!("{} texels for {} lights", env.len(), self.lights)));
        }
        let shaded: Vec<Rgb> = self
            .pixels
            .par_iter()
            .map(|(_, terms)| {
                let mut acc = [0.0; 3];
                for t in terms {
                    let l = env[t.light as usize];
                    for k in 0..3 {
                        acc[k] += t.f[k] * l[k] * t.scale;
                    }
                }
                acc
            })
            .collect();
        let mut out = vec![[0.0; 3]; self.width * self.height];
        for ((p, _), c) in self.pixels.iter().zip(shaded) {
            out[*p] = c;
        }
        Ok(out)
    }

    /// Gradient of `sum_p upstream[p] . image[p]` with respect to radiance.
    pub fn backward(&self, upstream: &[Rgb]) -> Vec<Rgb> {
        let mut d_env = vec![[0.0; 3]; self.lights];
        for (p, terms) in &self.pixels {
            let u = upstream[*p];
            for t in terms {
                let d = &mut d_env[t.light as usize];
                for k in 0..3 {
                    d[k] += u[k] * t.f[k] * t.scale;
                }
            }
        }
        d_env
    }
}

/// Renders raw buffers; background pixels are black.
pub fn render_view(view: &SceneView) -> Result<Vec<Rgb>> {
    let shading = Shading::new(view)?;
    let width = view.width;
    let mut pixels = vec![[0.0; 3]; width * view.height];
    let mut results: Vec<Result<()>> = Vec::with_capacity(view.height);
    pixels
        .par_chunks_mut(width)
        .enumerate()
        .map(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                let p = y * width + x;
                if view.mask[p] {
                    *out = shading.shade(p)?;
                }
            }
            Ok(())
        })
        .collect_into_vec(&mut results);
    results.into_iter().collect::<Result<()>>()?;
    Ok(pixels)
}

pub fn render(scene: &RenderScene) -> Result<RadianceImage> {
    let lights = scene.light_table();
    render_with_lights(scene, &lights)
}

/// [`render`] with a prebuilt light table for the scene's environment layout.
pub fn render_with_lights(scene: &RenderScene, lights: &LightTable) -> Result<RadianceImage> {
    scene.validate()?;
    if lights.height != scene.env.height() || lights.width != scene.env.width() {
        return Err(Error::ShapeMismatch("light table does not match environment map".into()));
    }
    let pixels = render_view(&SceneView::of(scene, lights))?;
    RadianceImage::new(scene.width(), scene.height(), pixels)
}

/// Renders the orthographic sphere of the given resolution under `env`.
pub fn render_reflectance_map(
    material: &DsbrdfMaterial,
    env: &EnvironmentMap,
    camera: Option<Camera>,
    sphere_resolution: usize,
) -> Result<RadianceImage> {
    if sphere_resolution < 8 {
        return Err(Error::Invalid(format!(
            "sphere resolution {sphere_resolution} below 8"
        )));
    }
    let normals = fixtures::sphere_normal_map(sphere_resolution)?;
    let camera = match camera {
        Some(c) => c,
        None => Camera::orthographic(sphere_resolution, sphere_resolution)?,
    };
    let scene = RenderScene::single(normals, camera, env.clone(), material.clone())?;
    render(&scene)
}
