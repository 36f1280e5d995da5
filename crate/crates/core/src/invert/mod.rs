//! Inverse rendering: recover normals, illumination and materials from one
//! image by minimizing
//!
//! `|I(n, m, L) - I_target|^2 + a |n - n'|^2 + b |L - L'|^2`
//!
//! one variable group at a time with L-BFGS. `n'` and `L'` are the initial
//! estimates. Materials are optimized in normalized `[-0.95, 0.95]`
//! coordinates; normals stay unit length and radiance nonnegative through
//! projection after every trial step.

mod lbfgs;
mod loss;

pub use lbfgs::{
    lbfgs_minimize, lbfgs_minimize_projected, LbfgsConfig, LbfgsResult, StopReason, TraceStep, CURVATURE_EPS, MIN_SHRINK,
    ZERO_GRADIENT,
};
pub use loss::{loss_combined, loss_image, loss_material, loss_normal, LossWeights};

use std::fmt;

use crate::brdf::{self, DsbrdfMaterial, Params, NORM_BOUND, PARAM_COUNT};
use crate::error::{Error, Result};
use crate::grad::{render_backward_view, Group, GroupMask, SceneGradients};
use crate::model::{Camera, EnvironmentMap, NormalMap, RadianceImage, Rgb, SegmentationMask, Vec3};
use crate::render::{build_light_table, check_regions, render, render_view, LightTable, RenderScene, SceneView, Transport};

pub const DEFAULT_A: f64 = 1.0;
pub const DEFAULT_B: f64 = 10.0;

/// Largest light transport (pixels times lights) cached for the light group,
/// about 160 MB. Larger problems render every evaluation.
const TRANSPORT_BUDGET: usize = 4 << 20;

#[derive(Debug, Clone)]
pub struct InverseProblem {
    pub target: RadianceImage,
    pub init_normals: NormalMap,
    pub init_materials: Vec<DsbrdfMaterial>,
    pub init_env: EnvironmentMap,
    /// Weight of the normal regularizer.
    pub a: f64,
    /// Weight of the illumination regularizer.
    pub b: f64,
    pub camera: Camera,
    pub segmentation: Option<SegmentationMask>,
    pub free_groups: Vec<Group>,
}

impl InverseProblem {
    /// Problem with default regularizer weights and every group free.
    pub fn new(
        target: RadianceImage,
        init_normals: NormalMap,
        init_materials: Vec<DsbrdfMaterial>,
        init_env: EnvironmentMap,
        camera: Camera,
        segmentation: Option<SegmentationMask>,
    ) -> Result<Self> {
        let p = Self {
            target,
            init_normals,
            init_materials,
            init_env,
            a: DEFAULT_A,
            b: DEFAULT_B,
            camera,
            segmentation,
            free_groups: Group::ALL.to_vec(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a >= 0.0 && self.b >= 0.0) {
            return Err(Error::Invalid("regularizer weights must be >= 0".into()));
        }
        let (w, h) = (self.init_normals.width(), self.init_normals.height());
        if self.target.width != w || self.target.height != h {
            return Err(Error::ShapeMismatch(format!(
                "target {}x{} vs normals {w}x{h}",
                self.target.width, self.target.height
            )));
        }
        if self.camera.width != w || self.camera.height != h {
            return Err(Error::ShapeMismatch("camera does not match normals".into()));
        }
        if self.target.pixels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("target image has non-finite pixels".into()));
        }
        check_regions(&self.init_normals, self.segmentation.as_ref(), self.init_materials.len())
    }

    pub fn initial_state(&self) -> State {
        State {
            normals: self.init_normals.normals().to_vec(),
            env: self.init_env.radiance().to_vec(),
            materials: self.init_materials.iter().map(|m| m.raw).collect(),
        }
    }

    fn mask(&self) -> &[bool] {
        self.init_normals.mask()
    }

    fn is_free(&self, g: Group) -> bool {
        self.free_groups.contains(&g)
    }
}

/// Current estimate of the three property groups; materials in raw form.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub normals: Vec<Vec3>,
    pub env: Vec<Rgb>,
    pub materials: Vec<Params>,
}

struct Evaluator<'p> {
    problem: &'p InverseProblem,
    lights: LightTable,
}

impl<'p> Evaluator<'p> {
    fn new(problem: &'p InverseProblem) -> Result<Self> {
        problem.validate()?;
        let lights = build_light_table(problem.init_env.height(), problem.init_env.width())?;
        Ok(Self { problem, lights })
    }

    fn view<'s>(&'s self, state: &'s State) -> SceneView<'s> {
        let p = self.problem;
        SceneView {
            width: p.init_normals.width(),
            height: p.init_normals.height(),
            normals: &state.normals,
            mask: p.mask(),
            regions: p.segmentation.as_ref().map(|s| s.region_ids()),
            camera: &p.camera,
            lights: &self.lights,
            env: &state.env,
            materials: state.materials.iter().collect(),
        }
    }

    /// Objective value and, for the groups in `groups`, its gradient.
    fn eval(&self, state: &State, groups: GroupMask) -> Result<(f64, SceneGradients)> {
        let p = self.problem;
        let view = self.view(state);
        let target = &p.target.pixels;
        let residual_grad = |i: usize, r: Rgb| -> Rgb { std::array::from_fn(|k| 2.0 * (r[k] - target[i][k])) };
        let (img, mut grads) = if groups.normal || groups.light || groups.material {
            render_backward_view(&view, groups, residual_grad)?
        } else {
            let empty = SceneGradients {
                d_normal: Vec::new(),
                d_env: Vec::new(),
                d_material: Vec::new(),
            };
            (render_view(&view)?, empty)
        };
        let value = self.finish(state, &img, &mut grads, groups);
        Ok((value, grads))
    }

    /// `2 (image - target)` on the objective's pixels.
    fn residual_grad(&self, img: &[Rgb]) -> Vec<Rgb> {
        let target = &self.problem.target.pixels;
        img.iter()
            .zip(target)
            .map(|(r, t)| std::array::from_fn(|k| 2.0 * (r[k] - t[k])))
            .collect()
    }

    /// Adds the regularizers to the image term and their gradients to `grads`.
    fn finish(&self, state: &State, img: &[Rgb], grads: &mut SceneGradients, groups: GroupMask) -> f64 {
        let p = self.problem;
        let mask = p.mask();
        let target = &p.target.pixels;
        let mut value = 0.0;
        for (i, (r, t)) in img.iter().zip(target).enumerate() {
            if mask[i] {
                for k in 0..3 {
                    value += (r[k] - t[k]) * (r[k] - t[k]);
                }
            }
        }
        let init_n = p.init_normals.normals();
        for i in 0..mask.len() {
            if mask[i] {
                let d = state.normals[i] - init_n[i];
                value += p.a * d.dot(d);
            }
        }
        for (l, l0) in state.env.iter().zip(p.init_env.radiance()) {
            for k in 0..3 {
                value += p.b * (l[k] - l0[k]).powi(2);
            }
        }
        if groups.normal {
            for i in 0..mask.len() {
                if mask[i] {
                    grads.d_normal[i] += (state.normals[i] - init_n[i]) * (2.0 * p.a);
                }
            }
        }
        if groups.light {
            for (g, (l, l0)) in grads.d_env.iter_mut().zip(state.env.iter().zip(p.init_env.radiance())) {
                for k in 0..3 {
                    g[k] += 2.0 * p.b * (l[k] - l0[k]);
                }
            }
        }
        value
    }
}

/// Objective value and gradients of the free groups at `state`. Gradients
/// of frozen groups are left empty.
pub fn objective(problem: &InverseProblem, state: &State) -> Result<(f64, SceneGradients)> {
    let groups = GroupMask {
        normal: problem.is_free(Group::Normal),
        light: problem.is_free(Group::Light),
        material: problem.is_free(Group::Material),
    };
    Evaluator::new(problem)?.eval(state, groups)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub memory_pairs: usize,
    pub inner_iters_per_group: usize,
    pub max_cycles: usize,
    pub rel_tol: f64,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    pub cycle_order: Vec<Group>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            memory_pairs: 8,
            inner_iters_per_group: 20,
            max_cycles: 50,
            rel_tol: 1e-6,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 25,
            cycle_order: vec![Group::Normal, Group::Light, Group::Material],
        }
    }
}

impl OptimizerConfig {
    pub fn lbfgs(&self) -> LbfgsConfig {
        LbfgsConfig {
            memory: self.memory_pairs,
            max_iters: self.inner_iters_per_group,
            rel_tol: self.rel_tol,
            armijo_c: self.armijo_c,
            backtrack_factor: self.backtrack_factor,
            max_backtracks: self.max_backtracks,
            initial_scale: None,
        }
    }
}

/// One accepted L-BFGS step of the alternating solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveTraceLine {
    pub cycle: usize,
    pub group: Group,
    pub iter: usize,
    pub objective: f64,
    pub gnorm: f64,
}

impl fmt::Display for SolveTraceLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {:e} {:e}",
            self.cycle,
            self.group.name(),
            self.iter,
            self.objective,
            self.gnorm
        )
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub normals: NormalMap,
    pub env: EnvironmentMap,
    pub materials: Vec<DsbrdfMaterial>,
    pub state: State,
    pub initial_objective: f64,
    pub final_objective: f64,
    /// Objective after each completed cycle.
    pub cycle_objectives: Vec<f64>,
    pub trace: Vec<SolveTraceLine>,
}

fn flatten_normals(state: &State, mask: &[bool]) -> Vec<f64> {
    state
        .normals
        .iter()
        .zip(mask)
        .filter(|(_, &fg)| fg)
        .flat_map(|(n, _)| n.to_array())
        .collect()
}

fn scatter_normals(x: &[f64], mask: &[bool], out: &mut [Vec3]) {
    let mut it = x.chunks_exact(3);
    for (n, &fg) in out.iter_mut().zip(mask) {
        if fg {
            let c = it.next().expect("one triple per foreground pixel");
            *n = Vec3::new(c[0], c[1], c[2]);
        }
    }
}

fn renormalize_triples(x: &mut [f64]) {
    for c in x.chunks_exact_mut(3) {
        let n = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
        if n > 1e-12 {
            for v in c.iter_mut() {
                *v /= n;
            }
        } else {
            c.copy_from_slice(&[0.0, 0.0, 1.0]);
        }
    }
}

fn normalized_materials(state: &State, problem: &InverseProblem) -> Vec<f64> {
    state
        .materials
        .iter()
        .zip(&problem.init_materials)
        .flat_map(|(raw, m)| {
            DsbrdfMaterial {
                raw: *raw,
                lo: m.lo,
                hi: m.hi,
            }
            .normalize_params()
        })
        .collect()
}

fn scatter_materials(x: &[f64], problem: &InverseProblem, out: &mut [Params]) -> Result<()> {
    for ((chunk, m), raw) in x.chunks_exact(PARAM_COUNT).zip(&problem.init_materials).zip(out.iter_mut()) {
        let normed: Params = chunk.try_into().unwrap();
        *raw = brdf::denormalize_params(&normed, &m.lo, &m.hi)?.raw;
    }
    Ok(())
}

/// Runs `iters` L-BFGS iterations on one group with the others frozen.
fn optimize_group(
    eval: &Evaluator,
    state: &mut State,
    group: Group,
    lbfgs: &LbfgsConfig,
    scale: &mut Option<f64>,
) -> Result<(f64, Vec<TraceStep>)> {
    let lbfgs = &LbfgsConfig {
        initial_scale: *scale,
        ..lbfgs.clone()
    };
    let problem = eval.problem;
    let mask = problem.mask();
    let groups = GroupMask::only(group);
    let base = state.clone();
    let result = match group {
        Group::Normal => {
            let x0 = flatten_normals(state, mask);
            lbfgs_minimize_projected(
                |x: &[f64]| {
                    let mut s = base.clone();
                    scatter_normals(x, mask, &mut s.normals);
                    let (v, g) = eval.eval(&s, groups)?;
                    // tangent-plane projection of each normal's gradient
                    let grad = s
                        .normals
                        .iter()
                        .zip(&g.d_normal)
                        .zip(mask)
                        .filter(|(_, &fg)| fg)
                        .flat_map(|((n, d), _)| (*d - *n * d.dot(*n)).to_array())
                        .collect();
                    Ok((v, grad))
                },
                renormalize_triples,
                x0,
                lbfgs,
            )
        }
        Group::Light => {
            let x0: Vec<f64> = state.env.iter().flatten().copied().collect();
            let transport = Transport::build(&eval.view(state), TRANSPORT_BUDGET)?;
            lbfgs_minimize_projected(
                |x: &[f64]| {
                    let mut s = base.clone();
                    for (l, c) in s.env.iter_mut().zip(x.chunks_exact(3)) {
                        *l = [c[0], c[1], c[2]];
                    }
                    let (v, g) = match &transport {
                        Some(t) => {
                            let img = t.render(&s.env)?;
                            let mut g = SceneGradients {
                                d_normal: Vec::new(),
                                d_env: t.backward(&eval.residual_grad(&img)),
                                d_material: Vec::new(),
                            };
                            (eval.finish(&s, &img, &mut g, groups), g)
                        }
                        None => eval.eval(&s, groups)?,
                    };
                    Ok((v, g.d_env.iter().flatten().copied().collect()))
                },
                |x: &mut [f64]| x.iter_mut().for_each(|v| *v = v.max(0.0)),
                x0,
                lbfgs,
            )
        }
        Group::Material => {
            let x0 = normalized_materials(state, problem);
            let jac: Vec<Params> = problem
                .init_materials
                .iter()
                .map(|m| brdf::denormalize_jacobian(&m.lo, &m.hi))
                .collect();
            lbfgs_minimize_projected(
                |x: &[f64]| {
                    let mut s = base.clone();
                    scatter_materials(x, problem, &mut s.materials)?;
                    let (v, g) = eval.eval(&s, groups)?;
                    let grad = g
                        .d_material
                        .iter()
                        .zip(&jac)
                        .flat_map(|(d, j)| (0..PARAM_COUNT).map(move |i| d[i] * j[i]))
                        .collect();
                    Ok((v, grad))
                },
                |x: &mut [f64]| x.iter_mut().for_each(|v| *v = v.clamp(-NORM_BOUND, NORM_BOUND)),
                x0,
                lbfgs,
            )
        }
    };
    let result = match result {
        Ok(r) => {
            *scale = r.scale;
            r
        }
        // no descent step exists for this group at the current point
        Err(Error::LineSearchFailure(_)) => {
            *scale = None;
            return Ok((eval.eval(state, GroupMask::only(group))?.0, Vec::new()));
        }
        Err(e) => return Err(e),
    };
    match group {
        Group::Normal => scatter_normals(&result.x, mask, &mut state.normals),
        Group::Light => {
            for (l, c) in state.env.iter_mut().zip(result.x.chunks_exact(3)) {
                *l = [c[0], c[1], c[2]];
            }
        }
        Group::Material => scatter_materials(&result.x, problem, &mut state.materials)?,
    }
    Ok((result.value, result.trace))
}

/// Alternating minimization over the free groups in `config.cycle_order`.
///
/// Each group gets up to `inner_iters_per_group` L-BFGS iterations with fresh
/// curvature memory; only the scale of its first step carries over from the
/// previous cycle. The solve stops when a full cycle lowers the objective
/// by less than `rel_tol` relative, or after `max_cycles`.
pub fn solve(problem: &InverseProblem, config: &OptimizerConfig) -> Result<SolveResult> {
    let eval = Evaluator::new(problem)?;
    let lbfgs = config.lbfgs();
    lbfgs.validate()?;
    if config.max_cycles == 0 {
        return Err(Error::Invalid("max_cycles must be positive".into()));
    }
    let mut state = problem.initial_state();
    let no_grad = GroupMask {
        normal: false,
        light: false,
        material: false,
    };
    let initial = eval.eval(&state, no_grad)?.0;
    let mut current = initial;
    let mut trace = Vec::new();
    let mut cycle_objectives = Vec::new();
    let order: Vec<Group> = config
        .cycle_order
        .iter()
        .copied()
        .filter(|g| problem.is_free(*g))
        .collect();

    // each group's curvature scale carries over to its next cycle
    let mut scales = [None; 3];
    for cycle in 0..config.max_cycles {
        let start = current;
        for &group in &order {
            if current == 0.0 {
                break;
            }
            let (value, steps) = optimize_group(&eval, &mut state, group, &lbfgs, &mut scales[group as usize])?;
            trace.extend(steps.iter().map(|s| SolveTraceLine {
                cycle,
                group,
                iter: s.iter,
                objective: s.value,
                gnorm: s.gnorm,
            }));
            current = value;
        }
        cycle_objectives.push(current);
        if !(start - current > config.rel_tol * start) {
            break;
        }
    }

    let p = problem;
    let normals = NormalMap::new(
        p.init_normals.width(),
        p.init_normals.height(),
        state.normals.clone(),
        p.mask().to_vec(),
    )?;
    let env = EnvironmentMap::new(p.init_env.height(), p.init_env.width(), state.env.clone())?;
    let materials = state
        .materials
        .iter()
        .zip(&p.init_materials)
        .map(|(raw, m)| DsbrdfMaterial::new(*raw, m.lo, m.hi))
        .collect::<Result<Vec<_>>>()?;
    Ok(SolveResult {
        normals,
        env,
        materials,
        state,
        initial_objective: initial,
        final_objective: current,
        cycle_objectives,
        trace,
    })
}

/// Renders `scene` with its materials replaced by `targets` (one per region).
pub fn edit_material(scene: &RenderScene, targets: &[DsbrdfMaterial]) -> Result<RadianceImage> {
    let expected = scene.region_count();
    if targets.len() != expected {
        return Err(Error::RegionCountMismatch {
            expected,
            got: targets.len(),
        });
    }
    render(&scene.with_materials(targets.to_vec())?)
}
