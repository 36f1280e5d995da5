//! Clamped quadratic B-splines over `[0, pi/2]` with six control points.
//!
//! The knot vector in normalized coordinates is
//! `[0, 0, 0, 1/4, 1/2, 3/4, 1, 1, 1]`. Arguments outside the domain are
//! clamped to it.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

pub const CONTROL_POINTS: usize = 6;
pub const DEGREE: usize = 2;
pub const KNOTS: [f64; 9] = [0.0, 0.0, 0.0, 0.25, 0.5, 0.75, 1.0, 1.0, 1.0];
pub const THETA_MIN: f64 = 0.0;
pub const THETA_MAX: f64 = FRAC_PI_2;

/// Largest 1-norm condition estimate accepted by [`fit`].
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadBSpline {
    pub control_points: [f64; CONTROL_POINTS],
}

/// The three basis functions that can be nonzero at one argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseBasis {
    /// Index of the first of the three weights.
    pub first: usize,
    pub weights: [f64; 3],
}

impl SparseBasis {
    #[inline]
    pub fn dot(&self, controls: &[f64]) -> f64 {
        let c = &controls[self.first..self.first + 3];
        self.weights[0] * c[0] + self.weights[1] * c[1] + self.weights[2] * c[2]
    }

    pub fn dense(&self) -> [f64; CONTROL_POINTS] {
        let mut out = [0.0; CONTROL_POINTS];
        out[self.first..self.first + 3].copy_from_slice(&self.weights);
        out
    }
}

fn normalized(theta: f64) -> f64 {
    (theta.clamp(THETA_MIN, THETA_MAX) - THETA_MIN) / (THETA_MAX - THETA_MIN)
}

/// Nonzero basis weights at `theta` (de Boor's triangular scheme).
#[inline]
pub fn sparse_basis(theta: f64) -> SparseBasis {
    let u = normalized(theta);
    // knot span index in 2..=5 with KNOTS[span] <= u < KNOTS[span + 1]
    let span = if u >= 1.0 {
        5
    } else {
        2 + ((u * 4.0) as usize).min(3)
    };
    let mut left = [0.0; DEGREE + 1];
    let mut right = [0.0; DEGREE + 1];
    let mut n = [1.0, 0.0, 0.0];
    for j in 1..=DEGREE {
        left[j] = u - KNOTS[span + 1 - j];
        right[j] = KNOTS[span + j] - u;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    SparseBasis {
        first: span - DEGREE,
        weights: n,
    }
}

/// All six basis weights at `theta`.
pub fn basis(theta: f64) -> [f64; CONTROL_POINTS] {
    sparse_basis(theta).dense()
}

impl QuadBSpline {
    pub fn new(control_points: [f64; CONTROL_POINTS]) -> Self {
        Self { control_points }
    }

    pub fn eval(&self, theta: f64) -> f64 {
        sparse_basis(theta).dot(&self.control_points)
    }
}

pub fn eval(spline: &QuadBSpline, theta: f64) -> f64 {
    spline.eval(theta)
}

/// Greville abscissae of the basis, in radians.
pub fn greville_abscissae() -> [f64; CONTROL_POINTS] {
    std::array::from_fn(|j| {
        let u = (KNOTS[j + 1] + KNOTS[j + 2]) / DEGREE as f64;
        THETA_MIN + u * (THETA_MAX - THETA_MIN)
    })
}

/// Least-squares control points for `(theta, value)` samples.
pub fn fit(samples: &[(f64, f64)]) -> Result<QuadBSpline> {
    if samples.len() < CONTROL_POINTS {
        return Err(Error::Invalid(format!(
            "spline fit needs at least {CONTROL_POINTS} samples, got {}",
            samples.len()
        )));
    }
    let mut ata = [[0.0; CONTROL_POINTS]; CONTROL_POINTS];
    let mut atb = [0.0; CONTROL_POINTS];
    for &(theta, value) in samples {
        if !(theta.is_finite() && value.is_finite()) {
            return Err(Error::Invalid("non-finite spline sample".into()));
        }
        let b = sparse_basis(theta);
        for (a, &wa) in b.weights.iter().enumerate() {
            atb[b.first + a] += wa * value;
            for (c, &wc) in b.weights.iter().enumerate() {
                ata[b.first + a][b.first + c] += wa * wc;
            }
        }
    }
    let inv = invert6(&ata)?;
    let cond = norm1(&ata) * norm1(&inv);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::RankDeficient(cond));
    }
    let mut controls = [0.0; CONTROL_POINTS];
    for (i, c) in controls.iter_mut().enumerate() {
        *c = inv[i].iter().zip(&atb).map(|(a, b)| a * b).sum();
    }
    Ok(QuadBSpline::new(controls))
}

type Mat6 = [[f64; CONTROL_POINTS]; CONTROL_POINTS];

fn norm1(m: &Mat6) -> f64 {
    (0..CONTROL_POINTS)
        .map(|c| m.iter().map(|row| row[c].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Gauss-Jordan inverse with partial pivoting.
fn invert6(m: &Mat6) -> Result<Mat6> {
    let mut a = *m;
    let mut inv = [[0.0; CONTROL_POINTS]; CONTROL_POINTS];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..CONTROL_POINTS {
        let pivot = (col..CONTROL_POINTS)
            .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
            .unwrap();
        if a[pivot][col] == 0.0 {
            return Err(Error::RankDeficient(f64::INFINITY));
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = 1.0 / a[col][col];
        for c in 0..CONTROL_POINTS {
            a[col][c] *= p;
            inv[col][c] *= p;
        }
        for r in 0..CONTROL_POINTS {
            if r == col {
                continue;
            }
            let f = a[r][col];
            if f == 0.0 {
                continue;
            }
            for c in 0..CONTROL_POINTS {
                a[r][c] -= f * a[col][c];
                inv[r][c] -= f * inv[col][c];
            }
        }
    }
    Ok(inv)
}
