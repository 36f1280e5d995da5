//! Limited-memory BFGS with a backtracking Armijo line search.
//!
//! An optional projection is applied to every trial point before it is
//! evaluated, and sufficient decrease is tested on the projected point, so
//! accepted iterates always strictly decrease the objective.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Gradient infinity norm below which a point counts as stationary.
pub const ZERO_GRADIENT: f64 = 1e-12;
/// A curvature pair with `s.y <= CURVATURE_EPS * |s| |y|` is not stored and clears the memory.
pub const CURVATURE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    /// Inverse-Hessian scale for steps taken without curvature pairs, such as
    /// a `scale` carried over from an earlier run. By default those steps
    /// have unit infinity norm.
    pub initial_scale: Option<f64>,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 8,
            max_iters: 100,
            rel_tol: 1e-6,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 25,
            initial_scale: None,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.memory > 0
            && self.max_iters > 0
            && self.rel_tol >= 0.0
            && self.armijo_c > 0.0
            && self.armijo_c < 1.0
            && self.backtrack_factor > 0.0
            && self.backtrack_factor < 1.0
            && self.max_backtracks > 0
            && self.initial_scale.is_none_or(|g| g > 0.0 && g.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("invalid L-BFGS configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ZeroGradient,
    RelativeDecrease,
    IterationCap,
    /// The line search failed after the first iterate; the best point is returned.
    LineSearchStalled,
}

/// One accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub iter: usize,
    pub value: f64,
    /// Infinity norm of the gradient at the accepted point.
    pub gnorm: f64,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub trace: Vec<TraceStep>,
    pub stop: StopReason,
    /// Newest inverse-Hessian scale `s.y / y.y`, or the configured initial
    /// scale when no pair was accepted.
    pub scale: Option<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Memory {
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    capacity: usize,
    /// Scale of the newest accepted pair; survives clearing.
    gamma: Option<f64>,
}

impl Memory {
    /// Stores the pair, or clears the memory when the step showed no
    /// positive curvature so that stale pairs do not keep steering.
    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        let bound = CURVATURE_EPS * dot(&s, &s).sqrt() * dot(&y, &y).sqrt();
        if !(sy > bound) {
            self.pairs.clear();
            return;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.gamma = Some(sy / dot(&y, &y));
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    /// Two-loop recursion: returns `-H g`.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        if self.pairs.is_empty() {
            return steepest(g, self.gamma);
        }
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = self.gamma.expect("nonempty memory");
        for v in &mut q {
            *v *= gamma;
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        for v in &mut q {
            *v = -*v;
        }
        q
    }
}

/// Smallest step reduction taken in one backtrack.
pub const MIN_SHRINK: f64 = 0.01;

/// Step reduction after a rejected trial: the minimizer of the quadratic
/// through `f(0)`, `f'(0)` and `f(alpha)`, kept within
/// `[MIN_SHRINK, backtrack_factor]` of the current step.
fn shrink(f0: f64, slope: f64, alpha: f64, f_alpha: f64, backtrack_factor: f64) -> f64 {
    let curvature = 2.0 * (f_alpha - f0 - slope * alpha);
    if !(f_alpha.is_finite() && curvature > 0.0) {
        return backtrack_factor;
    }
    (-slope * alpha / curvature).clamp(MIN_SHRINK.min(backtrack_factor), backtrack_factor)
}

/// Steepest descent scaled by `gamma`, or to unit infinity norm without it.
fn steepest(g: &[f64], gamma: Option<f64>) -> Vec<f64> {
    let scale = gamma.unwrap_or_else(|| 1.0f64.min(1.0 / inf_norm(g)));
    g.iter().map(|v| -v * scale).collect()
}

/// Unconstrained L-BFGS.
pub fn lbfgs_minimize<F>(f: F, x0: Vec<f64>, config: &LbfgsConfig) -> Result<LbfgsResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    lbfgs_minimize_projected(f, |_: &mut [f64]| {}, x0, config)
}

/// L-BFGS where every trial point passes through `project` before it is
/// evaluated. `x0` is projected first.
pub fn lbfgs_minimize_projected<F, P>(mut f: F, mut project: P, mut x: Vec<f64>, config: &LbfgsConfig) -> Result<LbfgsResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    P: FnMut(&mut [f64]),
{
    config.validate()?;
    project(&mut x);
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) || g.len() != x.len() {
        return Err(Error::Invalid("objective is not finite at the starting point".into()));
    }
    let mut memory = Memory {
        pairs: VecDeque::with_capacity(config.memory),
        capacity: config.memory,
        gamma: config.initial_scale,
    };
    let mut trace = Vec::new();
    let mut stop = StopReason::IterationCap;
    let mut iterations = 0;

    'outer: while iterations < config.max_iters {
        if inf_norm(&g) < ZERO_GRADIENT {
            stop = StopReason::ZeroGradient;
            break;
        }
        let mut direction = memory.direction(&g);
        let mut slope = dot(&g, &direction);
        if !(slope < 0.0) {
            memory.pairs.clear();
            direction = steepest(&g, memory.gamma);
            slope = dot(&g, &direction);
        }

        let accepted = loop {
            let mut alpha = 1.0;
            let mut found = None;
            for _ in 0..=config.max_backtracks {
                let mut trial: Vec<f64> = x.iter().zip(&direction).map(|(xi, di)| xi + alpha * di).collect();
                project(&mut trial);
                // sufficient decrease along the displacement the projection actually took
                let moved: f64 = trial.iter().zip(&x).zip(&g).map(|((t, xi), gi)| (t - xi) * gi).sum();
                let expected = if moved < 0.0 { moved } else { alpha * slope };
                let (ft, gt) = f(&trial)?;
                if ft.is_finite() && gt.iter().all(|v| v.is_finite()) && ft <= fx + config.armijo_c * expected {
                    found = Some((trial, ft, gt));
                    break;
                }
                alpha *= shrink(fx, slope, alpha, ft, config.backtrack_factor);
            }
            match found {
                Some(step) => break step,
                None if iterations == 0 => return Err(Error::LineSearchFailure(config.max_backtracks)),
                // retry once from steepest descent before giving up
                None if !memory.pairs.is_empty() => {
                    memory.pairs.clear();
                    direction = steepest(&g, memory.gamma);
                    slope = dot(&g, &direction);
                }
                None => {
                    stop = StopReason::LineSearchStalled;
                    break 'outer;
                }
            }
        };

        let (x_new, f_new, g_new) = accepted;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        memory.push(s, y);
        let decrease = (fx - f_new) / fx.abs().max(f64::MIN_POSITIVE);
        x = x_new;
        fx = f_new;
        g = g_new;
        iterations += 1;
        trace.push(TraceStep {
            iter: iterations,
            value: fx,
            gnorm: inf_norm(&g),
        });
        if decrease < config.rel_tol {
            stop = StopReason::RelativeDecrease;
            break;
        }
    }
    Ok(LbfgsResult {
        x,
        value: fx,
        gradient: g,
        iterations,
        trace,
        stop,
        scale: memory.gamma,
    })
}
