//! Analytic gradients of the rendered image with respect to normals,
//! environment radiance and material control points, plus a
//! finite-difference checker.
//!
//! For one lit (pixel p, light i) term with `s = max(0, n . w_i) * weight_i`
//! and `b = clamp(h . n, EPS_BASE, 1)`, lobe `E = exp(m0 * b^m1)`:
//!
//! * `dI^k/dL^k(i) = f^k * s`
//! * `dI^k/dn^c = L^k * weight_i * (f^k * w_i^c + n.w_i * sum_s E * m0 * m1 * b^(m1-1) * h^c)`
//! * `dI^k/dm0 = L^k * s * E * b^m1`, `dI^k/dm1 = L^k * s * E * m0 * b^m1 * ln b`
//!
//! Coefficient gradients reach the control points through the spline basis
//! weights at the pair's `theta_d`. The `h^c` factor comes from
//! `d(h . n)/dn^c`; `b` is treated as constant where the clamp is active.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::brdf::{self, Coeffs, Params, EPS_BASE, LOBES, PARAM_COUNT};
use crate::error::{Error, Result};
use crate::model::{Rgb, Vec3};
use crate::render::{render_view, RenderScene, SceneView, Shading};
use crate::spline::{self, SparseBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    Normal,
    Light,
    Material,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Normal, Group::Light, Group::Material];

    pub fn name(self) -> &'static str {
        match self {
            Group::Normal => "normal",
            Group::Light => "light",
            Group::Material => "material",
        }
    }

    pub fn parse(s: &str) -> Option<Group> {
        match s {
            "normal" | "normals" => Some(Group::Normal),
            "light" | "env" => Some(Group::Light),
            "material" => Some(Group::Material),
            _ => None,
        }
    }
}

/// Which gradient buffers [`backward_view`] fills.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupMask {
    pub normal: bool,
    pub light: bool,
    pub material: bool,
}

impl GroupMask {
    pub const ALL: GroupMask = GroupMask {
        normal: true,
        light: true,
        material: true,
    };

    pub fn only(g: Group) -> Self {
        let mut m = GroupMask {
            normal: false,
            light: false,
            material: false,
        };
        match g {
            Group::Normal => m.normal = true,
            Group::Light => m.light = true,
            Group::Material => m.material = true,
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGradients {
    pub d_normal: Vec<Vec3>,
    pub d_env: Vec<Rgb>,
    pub d_material: Vec<Params>,
}

/// Gradient of `sum_p sum_k upstream_p^k * I_p^k` for the whole scene.
pub fn backward(scene: &RenderScene, upstream: &[Rgb]) -> Result<SceneGradients> {
    let lights = scene.light_table();
    backward_view(&SceneView::of(scene, &lights), upstream, GroupMask::ALL)
}

const MAX_BLOCKS: usize = 32;

struct BlockSums {
    d_env: Vec<Rgb>,
    d_material: Vec<Params>,
}

/// [`backward`] on raw buffers, filling only the groups in `groups`.
pub fn backward_view(view: &SceneView, upstream: &[Rgb], groups: GroupMask) -> Result<SceneGradients> {
    if upstream.len() != view.width * view.height {
        return Err(Error::ShapeMismatch(format!(
            "upstream has {} pixels, image has {}",
            upstream.len(),
            view.width * view.height
        )));
    }
    render_backward_view(view, groups, |p, _| upstream[p]).map(|(_, g)| g)
}

/// Renders `view` and back-propagates `upstream(p, I_p)`, the loss gradient
/// at pixel `p` given its rendered value, in one sweep over the lit pairs.
///
/// Pixels are split into a fixed number of row blocks that depend only on
/// the image height; per-block sums are reduced in block order, so results
/// do not depend on the worker count.
pub fn render_backward_view<U>(view: &SceneView, groups: GroupMask, upstream: U) -> Result<(Vec<Rgb>, SceneGradients)>
where
    U: Fn(usize, Rgb) -> Rgb + Sync,
{
    let shading = Shading::new(view)?;
    let (width, height) = (view.width, view.height);
    let n_lights = view.lights.len();
    let n_regions = view.materials.len();
    let chunk = height.div_ceil(MAX_BLOCKS).max(1) * width;

    let mut image = vec![[0.0; 3]; width * height];
    let mut d_normal = vec![Vec3::ZERO; width * height];
    let mut blocks: Vec<Result<BlockSums>> = Vec::new();
    image
        .par_chunks_mut(chunk)
        .zip(d_normal.par_chunks_mut(chunk))
        .enumerate()
        .map(|(b, (image_out, normals_out))| {
            let mut sums = BlockSums {
                d_env: if groups.light { vec![[0.0; 3]; n_lights] } else { Vec::new() },
                d_material: if groups.material {
                    vec![[0.0; PARAM_COUNT]; n_regions]
                } else {
                    Vec::new()
                },
            };
            let mut scratch = Vec::new();
            for offset in 0..image_out.len() {
                let p = b * chunk + offset;
                if view.mask[p] {
                    let (value, dn) = pixel_pass(&shading, p, groups, &upstream, &mut scratch, &mut sums)?;
                    image_out[offset] = value;
                    normals_out[offset] = dn;
                }
            }
            Ok(sums)
        })
        .collect_into_vec(&mut blocks);

    let mut d_env = vec![[0.0; 3]; n_lights];
    let mut d_material = vec![[0.0; PARAM_COUNT]; n_regions];
    for block in blocks {
        let block = block?;
        for (acc, v) in d_env.iter_mut().zip(&block.d_env) {
            for k in 0..3 {
                acc[k] += v[k];
            }
        }
        for (acc, v) in d_material.iter_mut().zip(&block.d_material) {
            for i in 0..PARAM_COUNT {
                acc[i] += v[i];
            }
        }
    }
    Ok((
        image,
        SceneGradients {
            d_normal,
            d_env,
            d_material,
        },
    ))
}

/// Upstream-independent quantities of one lit pair.
struct PairTerms {
    light: usize,
    omega_i: Vec3,
    h: Vec3,
    cos: f64,
    weight: f64,
    basis: SparseBasis,
    f: Rgb,
    /// `df/db` per channel, zero where the base clamp is active.
    df_dbase: Rgb,
    /// `df/dm0` and `df/dm1` per curve.
    dcoef: Coeffs,
}

fn pixel_pass<U: Fn(usize, Rgb) -> Rgb>(
    shading: &Shading,
    p: usize,
    groups: GroupMask,
    upstream: &U,
    scratch: &mut Vec<PairTerms>,
    sums: &mut BlockSums,
) -> Result<(Rgb, Vec3)> {
    let view = shading.view;
    let env = view.env;
    let (x, y) = (p % view.width, p / view.width);
    scratch.clear();
    let mut acc = [0.0; 3];
    let mut overflow = None;
    shading.for_each_pair(p, |pair| {
        let terms = brdf::lobe_terms(pair.coeffs, pair.ln_base, groups.material);
        let f = brdf::sum_lobes(&terms);
        let l = env[pair.light];
        let scale = pair.cos * pair.weight;
        for k in 0..3 {
            if !(f[k].abs() <= brdf::OVERFLOW_LIMIT) {
                overflow.get_or_insert(f[k]);
            }
            acc[k] += f[k] * l[k] * scale;
        }
        let mut rec = PairTerms {
            light: pair.light,
            omega_i: pair.omega_i,
            h: pair.h,
            cos: pair.cos,
            weight: pair.weight,
            basis: pair.basis,
            f,
            df_dbase: [0.0; 3],
            dcoef: [0.0; brdf::CURVES],
        };
        for k in 0..3 {
            for s in 0..LOBES {
                let i = k * LOBES + s;
                let m0 = pair.coeffs[brdf::curve_index(k, s, 0)];
                let m1 = pair.coeffs[brdf::curve_index(k, s, 1)];
                let e_pow = (terms.em1[i] + 1.0) * terms.pow[i];
                if groups.normal && m0 != 0.0 && pair.h_dot_n > EPS_BASE && pair.h_dot_n < 1.0 {
                    rec.df_dbase[k] += e_pow * m0 * m1 / pair.h_dot_n;
                }
                if groups.material {
                    rec.dcoef[brdf::curve_index(k, s, 0)] = e_pow;
                    rec.dcoef[brdf::curve_index(k, s, 1)] = e_pow * m0 * pair.ln_base;
                }
            }
        }
        scratch.push(rec);
    });
    if let Some(value) = overflow {
        return Err(Error::Overflow { x, y, value });
    }
    let up = upstream(p, acc);
    if up == [0.0; 3] {
        return Ok((acc, Vec3::ZERO));
    }

    let region = view.region(p);
    let mut dn = Vec3::ZERO;
    for rec in scratch.iter() {
        let l = env[rec.light];
        let scale = rec.cos * rec.weight;
        let finite = rec.f.iter().chain(&rec.df_dbase).chain(&rec.dcoef).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonfiniteGradient { x, y, light: rec.light });
        }
        if groups.light {
            let de = &mut sums.d_env[rec.light];
            for k in 0..3 {
                de[k] += up[k] * rec.f[k] * scale;
            }
        }
        if groups.normal {
            let mut along_light = 0.0;
            let mut along_half = 0.0;
            for k in 0..3 {
                let g = up[k] * l[k] * rec.weight;
                along_light += g * rec.f[k];
                along_half += g * rec.cos * rec.df_dbase[k];
            }
            dn += rec.omega_i * along_light + rec.h * along_half;
        }
        if groups.material {
            let dm = &mut sums.d_material[region];
            let basis = &rec.basis;
            for k in 0..3 {
                let g = up[k] * l[k] * scale;
                for s in 0..LOBES {
                    for t in 0..2 {
                        let curve = brdf::curve_index(k, s, t);
                        let v = g * rec.dcoef[curve];
                        let start = curve * spline::CONTROL_POINTS + basis.first;
                        for a in 0..3 {
                            dm[start + a] += v * basis.weights[a];
                        }
                    }
                }
            }
        }
    }
    if !dn.is_finite() {
        return Err(Error::NonfiniteGradient { x, y, light: 0 });
    }
    Ok((acc, dn))
}

/// Outcome of one finite-difference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub group: Group,
    pub max_rel_err: f64,
    /// Flat coordinate of the worst entry within the group.
    pub worst: Option<usize>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
    /// Sampled coordinates whose difference stencil touched a kink.
    pub skipped: usize,
}

/// Margin around the `max(0, .)` and base-clamp kinks inside which normal
/// coordinates are not finite-differenced.
pub const KINK_MARGIN: f64 = 1e-3;

/// Entries smaller than this fraction of the group's largest analytic
/// gradient are compared against that floor instead of their own size.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Difference step for the light group. The image is linear in radiance, so
/// a large step has no truncation error and keeps cancellation small.
pub const LIGHT_STEP: f64 = 1e3;

/// Difference step for normals. Steep lobes have large third derivatives in
/// the normal, so the step is small.
pub const NORMAL_STEP: f64 = 1e-6;

/// Difference step for the material group.
pub const DEFAULT_STEP: f64 = 1e-4;

/// Recommended step for `group`.
pub fn default_step(group: Group) -> f64 {
    match group {
        Group::Normal => NORMAL_STEP,
        Group::Light => LIGHT_STEP,
        Group::Material => DEFAULT_STEP,
    }
}

/// Owned, freely perturbable copies of a scene's differentiable buffers.
struct Probe<'s> {
    scene: &'s RenderScene,
    lights: crate::render::LightTable,
    normals: Vec<Vec3>,
    env: Vec<Rgb>,
    materials: Vec<Params>,
    upstream: Vec<Rgb>,
}

impl<'s> Probe<'s> {
    fn view(&self) -> SceneView<'_> {
        SceneView {
            width: self.scene.width(),
            height: self.scene.height(),
            normals: &self.normals,
            mask: self.scene.normal_map.mask(),
            regions: self.scene.segmentation.as_ref().map(|s| s.region_ids()),
            camera: &self.scene.camera,
            lights: &self.lights,
            env: &self.env,
            materials: self.materials.iter().collect(),
        }
    }

    fn loss(&self) -> Result<f64> {
        let img = render_view(&self.view())?;
        Ok(img
            .iter()
            .zip(&self.upstream)
            .map(|(i, u)| i[0] * u[0] + i[1] * u[1] + i[2] * u[2])
            .sum())
    }

    fn coordinate(&mut self, group: Group, idx: usize) -> &mut f64 {
        match group {
            Group::Normal => match idx % 3 {
                0 => &mut self.normals[idx / 3].x,
                1 => &mut self.normals[idx / 3].y,
                _ => &mut self.normals[idx / 3].z,
            },
            Group::Light => &mut self.env[idx / 3][idx % 3],
            Group::Material => &mut self.materials[idx / PARAM_COUNT][idx % PARAM_COUNT],
        }
    }

    fn near_kink(&self, idx: usize) -> bool {
        let p = idx / 3;
        let n = self.normals[p];
        let cam = &self.scene.camera;
        let w = self.scene.width();
        let omega_p = cam.view_direction(p % w, p / w);
        self.lights.directions.iter().zip(&self.env).any(|(&d, l)| {
            if *l == [0.0; 3] {
                return false;
            }
            let cos = n.dot(d);
            if cos.abs() < KINK_MARGIN {
                return true;
            }
            if cos <= 0.0 {
                return false;
            }
            match brdf::half_vector(d, omega_p) {
                Some((h, _)) => {
                    let hn = h.dot(n);
                    (hn - EPS_BASE).abs() < KINK_MARGIN || (hn - 1.0).abs() < KINK_MARGIN
                }
                None => false,
            }
        })
    }
}

fn flat_gradient(grads: &SceneGradients, group: Group) -> Vec<f64> {
    match group {
        Group::Normal => grads.d_normal.iter().flat_map(|v| v.to_array()).collect(),
        Group::Light => grads.d_env.iter().flatten().copied().collect(),
        Group::Material => grads.d_material.iter().flatten().copied().collect(),
    }
}

/// Compares [`backward`] with central differences of the probe loss
/// `sum upstream * render` on `trials` sampled coordinates of `group`.
///
/// The step for coordinate `x` is `step * max(1, |x|)`. Upstream weights are
/// drawn uniformly from `[0.5, 1.5]` on foreground pixels.
pub fn fd_check(scene: &RenderScene, group: Group, step: f64, trials: usize, seed: u64) -> Result<FdReport> {
    if !(step > 0.0) || trials == 0 {
        return Err(Error::Invalid("fd_check needs step > 0 and trials >= 1".into()));
    }
    scene.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = scene.normal_map.mask();
    let upstream: Vec<Rgb> = mask
        .iter()
        .map(|&fg| {
            if fg {
                std::array::from_fn(|_| rng.random_range(0.5..1.5))
            } else {
                [0.0; 3]
            }
        })
        .collect();
    let mut probe = Probe {
        scene,
        lights: scene.light_table(),
        normals: scene.normal_map.normals().to_vec(),
        env: scene.env.radiance().to_vec(),
        materials: scene.material_params(),
        upstream,
    };
    let grads = backward_view(&probe.view(), &probe.upstream, GroupMask::only(group))?;
    let analytic = flat_gradient(&grads, group);
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (RELATIVE_FLOOR * scale).max(f64::MIN_POSITIVE);

    let candidates: Vec<usize> = match group {
        Group::Normal => (0..analytic.len()).filter(|&i| mask[i / 3]).collect(),
        _ => (0..analytic.len()).collect(),
    };
    let order: Vec<usize> = if trials >= candidates.len() {
        candidates.clone()
    } else {
        index::sample(&mut rng, candidates.len(), candidates.len())
            .into_iter()
            .map(|i| candidates[i])
            .collect()
    };

    let mut report = FdReport {
        group,
        max_rel_err: 0.0,
        worst: None,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checked: 0,
        skipped: 0,
    };
    for idx in order {
        if report.checked == trials {
            break;
        }
        if group == Group::Normal && probe.near_kink(idx) {
            report.skipped += 1;
            continue;
        }
        let x0 = *probe.coordinate(group, idx);
        let h = step * x0.abs().max(1.0);
        *probe.coordinate(group, idx) = x0 + h;
        let plus = probe.loss()?;
        *probe.coordinate(group, idx) = x0 - h;
        let minus = probe.loss()?;
        *probe.coordinate(group, idx) = x0;
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[idx];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        report.checked += 1;
        if !(err <= report.max_rel_err) {
            report.max_rel_err = err;
            report.worst = Some(idx);
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
    }
    Ok(report)
}
