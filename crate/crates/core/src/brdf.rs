//! Directional-statistics BRDF with spline-valued lobe coefficients.
//!
//! Per color channel `k` the BRDF is a sum of three lobes,
//! `f_k = sum_s (exp(m[k][s][0] * base^m[k][s][1]) - 1)` with
//! `base = clamp(h . n, EPS_BASE, 1)`. Each coefficient `m[k][s][t]` is a
//! quadratic spline in the angle between the light and the half vector,
//! so a material has `3 * 3 * 2 * 6 = 108` raw parameters.

use crate::error::{Error, Result};
use crate::model::{Rgb, Vec3};
use crate::spline::{self, SparseBasis};

pub const CHANNELS: usize = 3;
pub const LOBES: usize = 3;
pub const COEFFS_PER_LOBE: usize = 2;
pub const CURVES: usize = CHANNELS * LOBES * COEFFS_PER_LOBE;
pub const PARAM_COUNT: usize = CURVES * spline::CONTROL_POINTS;

/// Lower clamp on `h . n` before it is raised to a lobe exponent.
pub const EPS_BASE: f64 = 1e-6;
/// Largest BRDF channel value accepted before reporting overflow.
pub const OVERFLOW_LIMIT: f64 = 1e30;
/// Bound of the normalized parameter space.
pub const NORM_BOUND: f64 = 0.95;

pub const DEFAULT_SCALE_RANGE: (f64, f64) = (-15.0, 15.0);
pub const DEFAULT_EXPONENT_RANGE: (f64, f64) = (0.05, 20.0);

/// Index of coefficient curve `(k, s, t)` among the 18 curves.
#[inline]
pub const fn curve_index(k: usize, s: usize, t: usize) -> usize {
    (k * LOBES + s) * COEFFS_PER_LOBE + t
}

/// Flat index of control point `j` of curve `(k, s, t)`.
#[inline]
pub const fn flat_index(k: usize, s: usize, t: usize, j: usize) -> usize {
    curve_index(k, s, t) * spline::CONTROL_POINTS + j
}

pub type Params = [f64; PARAM_COUNT];

#[derive(Debug, Clone, PartialEq)]
pub struct DsbrdfMaterial {
    pub raw: Params,
    pub lo: Params,
    pub hi: Params,
}

/// Default normalization bounds: scales in `[-15, 15]`, exponents in `[0.05, 20]`.
pub fn default_bounds() -> (Params, Params) {
    let mut lo = [0.0; PARAM_COUNT];
    let mut hi = [0.0; PARAM_COUNT];
    for i in 0..PARAM_COUNT {
        let t = (i / spline::CONTROL_POINTS) % COEFFS_PER_LOBE;
        let (l, h) = if t == 0 {
            DEFAULT_SCALE_RANGE
        } else {
            DEFAULT_EXPONENT_RANGE
        };
        lo[i] = l;
        hi[i] = h;
    }
    (lo, hi)
}

impl DsbrdfMaterial {
    pub fn new(raw: Params, lo: Params, hi: Params) -> Result<Self> {
        if let Some(i) = (0..PARAM_COUNT).find(|&i| !(lo[i] < hi[i])) {
            return Err(Error::Invalid(format!(
                "normalization range {i} is empty: [{}, {}]",
                lo[i], hi[i]
            )));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("material parameters must be finite".into()));
        }
        Ok(Self { raw, lo, hi })
    }

    /// Material with the default normalization bounds.
    pub fn with_default_bounds(raw: Params) -> Result<Self> {
        let (lo, hi) = default_bounds();
        Self::new(raw, lo, hi)
    }

    pub fn zero() -> Self {
        Self::with_default_bounds([0.0; PARAM_COUNT]).unwrap()
    }

    /// Material whose every curve is constant; `curve(k, s, t)` gives the value.
    pub fn from_constant_curves(curve: impl Fn(usize, usize, usize) -> f64) -> Result<Self> {
        let mut raw = [0.0; PARAM_COUNT];
        for k in 0..CHANNELS {
            for s in 0..LOBES {
                for t in 0..COEFFS_PER_LOBE {
                    let v = curve(k, s, t);
                    for j in 0..spline::CONTROL_POINTS {
                        raw[flat_index(k, s, t, j)] = v;
                    }
                }
            }
        }
        Self::with_default_bounds(raw)
    }

    /// Control points of curve `(k, s, t)`.
    pub fn curve(&self, k: usize, s: usize, t: usize) -> &[f64] {
        let start = curve_index(k, s, t) * spline::CONTROL_POINTS;
        &self.raw[start..start + spline::CONTROL_POINTS]
    }

    pub fn coeffs_at(&self, theta_d: f64) -> Coeffs {
        coeffs_with_basis(&self.raw, &spline::sparse_basis(theta_d))
    }

    pub fn normalize_params(&self) -> Params {
        std::array::from_fn(|i| normalize_value(self.raw[i], self.lo[i], self.hi[i]))
    }
}

/// The 18 lobe coefficients at one `theta_d`, indexed by [`curve_index`].
pub type Coeffs = [f64; CURVES];

#[inline]
pub fn coeffs_with_basis(raw: &[f64], basis: &SparseBasis) -> Coeffs {
    std::array::from_fn(|c| basis.dot(&raw[c * spline::CONTROL_POINTS..(c + 1) * spline::CONTROL_POINTS]))
}

pub fn coeffs_at(material: &DsbrdfMaterial, theta_d: f64) -> Coeffs {
    material.coeffs_at(theta_d)
}

#[inline]
fn normalize_value(raw: f64, lo: f64, hi: f64) -> f64 {
    -NORM_BOUND + 2.0 * NORM_BOUND * (raw.clamp(lo, hi) - lo) / (hi - lo)
}

#[inline]
fn denormalize_value(x: f64, lo: f64, hi: f64) -> f64 {
    lo + (x.clamp(-NORM_BOUND, NORM_BOUND) + NORM_BOUND) / (2.0 * NORM_BOUND) * (hi - lo)
}

/// Maps raw parameters affinely onto `[-0.95, 0.95]`, clamping to the ranges first.
pub fn normalize_params(material: &DsbrdfMaterial) -> Params {
    material.normalize_params()
}

/// Inverse of [`normalize_params`]; inputs outside `[-0.95, 0.95]` are clamped.
pub fn denormalize_params(normed: &Params, lo: &Params, hi: &Params) -> Result<DsbrdfMaterial> {
    let raw = std::array::from_fn(|i| denormalize_value(normed[i], lo[i], hi[i]));
    DsbrdfMaterial::new(raw, *lo, *hi)
}

/// Derivative of a raw parameter with respect to its normalized coordinate.
pub fn denormalize_jacobian(lo: &Params, hi: &Params) -> Params {
    std::array::from_fn(|i| (hi[i] - lo[i]) / (2.0 * NORM_BOUND))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfAngleGeometry {
    pub h: Vec3,
    /// `clamp(h . n, 0, 1)`.
    pub h_dot_n: f64,
    /// Unclamped `h . n`, kept for gradient gating.
    pub h_dot_n_raw: f64,
    pub theta_d: f64,
    pub valid: bool,
}

impl HalfAngleGeometry {
    const INVALID: HalfAngleGeometry = HalfAngleGeometry {
        h: Vec3::ZERO,
        h_dot_n: 0.0,
        h_dot_n_raw: 0.0,
        theta_d: 0.0,
        valid: false,
    };
}

/// Half vector between light and view, the angle `theta_d` between light
/// and half vector, and the clamped `h . n`.
#[inline]
pub fn half_geometry(omega_i: Vec3, omega_p: Vec3, n: Vec3) -> HalfAngleGeometry {
    let (h, theta_d) = match half_vector(omega_i, omega_p) {
        Some(v) => v,
        None => return HalfAngleGeometry::INVALID,
    };
    let raw = h.dot(n);
    HalfAngleGeometry {
        h,
        h_dot_n: raw.clamp(0.0, 1.0),
        h_dot_n_raw: raw,
        theta_d,
        valid: true,
    }
}

/// Half vector and `theta_d`, or `None` for opposed directions.
#[inline]
pub fn half_vector(omega_i: Vec3, omega_p: Vec3) -> Option<(Vec3, f64)> {
    let sum = omega_i + omega_p;
    let len = sum.norm();
    if !(len >= 1e-8) {
        return None;
    }
    let h = sum * (1.0 / len);
    Some((h, omega_i.dot(h).clamp(0.0, 1.0).acos()))
}

/// `clamp(h . n, EPS_BASE, 1)`.
#[inline]
pub fn lobe_base(h_dot_n: f64) -> f64 {
    h_dot_n.clamp(EPS_BASE, 1.0)
}

/// Per-lobe `b^m1` and `exp(m0 * b^m1) - 1`, indexed `k * LOBES + s`.
///
/// Channels whose exponents are bitwise equal share one `exp`. Lobes with
/// `m0 = 0` contribute nothing; their power is computed only when
/// `all_powers` is set (the scale gradient still needs it).
#[derive(Debug, Clone, Copy)]
pub(crate) struct LobeTerms {
    pub pow: [f64; CHANNELS * LOBES],
    pub em1: [f64; CHANNELS * LOBES],
}

#[inline]
pub(crate) fn lobe_terms(coeffs: &Coeffs, ln_base: f64, all_powers: bool) -> LobeTerms {
    let mut t = LobeTerms {
        pow: [0.0; CHANNELS * LOBES],
        em1: [0.0; CHANNELS * LOBES],
    };
    for s in 0..LOBES {
        let mut last = f64::NAN;
        let mut last_pow = 0.0;
        for k in 0..CHANNELS {
            let m0 = coeffs[curve_index(k, s, 0)];
            let m1 = coeffs[curve_index(k, s, 1)];
            if m0 == 0.0 && !all_powers {
                continue;
            }
            let pow = if m1 == last { last_pow } else { (m1 * ln_base).exp() };
            last = m1;
            last_pow = pow;
            t.pow[k * LOBES + s] = pow;
            if m0 != 0.0 {
                t.em1[k * LOBES + s] = (m0 * pow).exp_m1();
            }
        }
    }
    t
}

#[inline]
pub(crate) fn sum_lobes(t: &LobeTerms) -> Rgb {
    std::array::from_fn(|k| {
        let mut f = 0.0;
        for s in 0..LOBES {
            f += t.em1[k * LOBES + s];
        }
        f
    })
}

#[inline]
pub(crate) fn eval_coeffs(coeffs: &Coeffs, ln_base: f64) -> Rgb {
    sum_lobes(&lobe_terms(coeffs, ln_base, false))
}

/// BRDF value per channel; `(0, 0, 0)` for invalid geometry.
pub fn eval_f(material: &DsbrdfMaterial, geom: &HalfAngleGeometry) -> Result<Rgb> {
    if !geom.valid {
        return Ok([0.0; 3]);
    }
    let coeffs = material.coeffs_at(geom.theta_d);
    let f = eval_coeffs(&coeffs, lobe_base(geom.h_dot_n).ln());
    if let Some(&v) = f.iter().find(|v| !(v.abs() <= OVERFLOW_LIMIT)) {
        return Err(Error::Overflow { x: 0, y: 0, value: v });
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, LN_2};

    fn geom(h_dot_n: f64, theta_d: f64) -> HalfAngleGeometry {
        HalfAngleGeometry {
            h: Vec3::new(0.0, 0.0, 1.0),
            h_dot_n,
            h_dot_n_raw: h_dot_n,
            theta_d,
            valid: true,
        }
    }

    #[test]
    fn flat_layout() {
        assert_eq!(flat_index(0, 0, 0, 0), 0);
        assert_eq!(flat_index(0, 0, 1, 0), 6);
        assert_eq!(flat_index(0, 1, 0, 0), 12);
        assert_eq!(flat_index(1, 0, 0, 0), 36);
        assert_eq!(flat_index(2, 2, 1, 5), 107);
    }

    #[test]
    fn half_geometry_cases() {
        let z = Vec3::new(0.0, 0.0, 1.0);
        let g = half_geometry(z, z, z);
        assert!(g.valid);
        assert_eq!(g.h, z);
        assert_eq!(g.h_dot_n, 1.0);
        assert_eq!(g.theta_d, 0.0);

        let g = half_geometry(Vec3::new(1.0, 0.0, 0.0), z, z);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((g.h - Vec3::new(s, 0.0, s)).norm() < 1e-12);
        assert!((g.h_dot_n - s).abs() < 1e-12);
        assert!((g.theta_d - FRAC_PI_4).abs() < 1e-12);

        let g = half_geometry(-z, z, z);
        assert!(!g.valid);
        assert_eq!((g.h_dot_n, g.theta_d), (0.0, 0.0));
    }

    #[test]
    fn coeffs_cases() {
        let zero = DsbrdfMaterial::zero();
        assert_eq!(zero.coeffs_at(0.7), [0.0; CURVES]);

        let m = DsbrdfMaterial::from_constant_curves(|k, s, t| if (k, s, t) == (0, 0, 0) { 2.0 } else { 0.0 })
            .unwrap();
        let c = m.coeffs_at(1.1);
        assert!((c[0] - 2.0).abs() < 1e-15);
        assert!(c[1..].iter().all(|v| *v == 0.0));

        let mut raw = [0.0; PARAM_COUNT];
        for (i, v) in raw.iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin();
        }
        let m = DsbrdfMaterial::with_default_bounds(raw).unwrap();
        let c = coeffs_at(&m, 0.0);
        for curve in 0..CURVES {
            assert_eq!(c[curve], raw[curve * 6]);
        }
    }

    #[test]
    fn eval_f_cases() {
        let zero = DsbrdfMaterial::zero();
        assert_eq!(eval_f(&zero, &geom(0.3, 0.2)).unwrap(), [0.0; 3]);

        let three = DsbrdfMaterial::from_constant_curves(|_, _, t| if t == 0 { LN_2 } else { 0.0 }).unwrap();
        for (hn, td) in [(0.0, 0.0), (0.5, 1.0), (1.0, FRAC_PI_2)] {
            let f = eval_f(&three, &geom(hn, td)).unwrap();
            for v in f {
                assert!((v - 3.0).abs() < 1e-14);
            }
        }

        let single = DsbrdfMaterial::from_constant_curves(|k, s, t| match (k, s, t) {
            (0, 0, 0) => 1.0,
            (0, 0, 1) => 2.0,
            _ => 0.0,
        })
        .unwrap();
        let f = eval_f(&single, &geom(0.5, 0.4)).unwrap();
        assert!((f[0] - 0.28403).abs() < 1e-5);
        assert!((f[0] - (0.25f64.exp() - 1.0)).abs() < 1e-14);
        assert_eq!((f[1], f[2]), (0.0, 0.0));
    }

    #[test]
    fn invalid_geometry_is_black() {
        let three = DsbrdfMaterial::from_constant_curves(|_, _, t| if t == 0 { LN_2 } else { 0.0 }).unwrap();
        assert_eq!(eval_f(&three, &HalfAngleGeometry::INVALID).unwrap(), [0.0; 3]);
    }

    #[test]
    fn overflow_is_reported() {
        let hot = DsbrdfMaterial::from_constant_curves(|_, _, t| if t == 0 { 80.0 } else { 1.0 }).unwrap();
        assert!(matches!(eval_f(&hot, &geom(1.0, 0.0)), Err(Error::Overflow { .. })));
    }

    #[test]
    fn base_clamp_keeps_negative_exponents_finite() {
        let m = DsbrdfMaterial::from_constant_curves(|_, s, t| match (s, t) {
            (0, 0) => 1e-6,
            (0, 1) => -0.5,
            _ => 0.0,
        })
        .unwrap();
        let f = eval_f(&m, &geom(0.0, 0.0)).unwrap();
        assert!(f.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn continuity_in_h_dot_n() {
        let m = DsbrdfMaterial::from_constant_curves(|k, s, t| match t {
            0 => 0.4 + 0.1 * (k + s) as f64,
            _ => 1.0 + 3.0 * s as f64,
        })
        .unwrap();
        // |df/dx| <= sum_s exp(m0) * m0 * m1 on [EPS_BASE, 1] for m1 >= 1
        let lipschitz: f64 = (0..LOBES)
            .map(|s| {
                let m0: f64 = 0.4 + 0.1 * (2 + s) as f64;
                m0.exp() * m0 * (1.0 + 3.0 * s as f64)
            })
            .sum();
        let n = 2000;
        let mut prev = eval_f(&m, &geom(EPS_BASE, 0.5)).unwrap();
        for i in 1..=n {
            let x = EPS_BASE + (1.0 - EPS_BASE) * i as f64 / n as f64;
            let cur = eval_f(&m, &geom(x, 0.5)).unwrap();
            let dx = (1.0 - EPS_BASE) / n as f64;
            for k in 0..3 {
                assert!((cur[k] - prev[k]).abs() <= lipschitz * dx * (1.0 + 1e-9));
            }
            prev = cur;
        }
    }

    #[test]
    fn normalization_endpoints() {
        let (lo, hi) = default_bounds();
        let at_lo = DsbrdfMaterial::new(lo, lo, hi).unwrap();
        assert!(at_lo.normalize_params().iter().all(|v| (*v + 0.95).abs() < 1e-15));
        let mid: Params = std::array::from_fn(|i| (lo[i] + hi[i]) / 2.0);
        let at_mid = DsbrdfMaterial::new(mid, lo, hi).unwrap();
        assert!(at_mid.normalize_params().iter().all(|v| v.abs() < 1e-15));

        let back = denormalize_params(&[-0.95; PARAM_COUNT], &lo, &hi).unwrap();
        assert_eq!(back.raw, lo);
        let back = denormalize_params(&[0.0; PARAM_COUNT], &lo, &hi).unwrap();
        for i in 0..PARAM_COUNT {
            assert!((back.raw[i] - mid[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_clamps() {
        let (lo, hi) = default_bounds();
        let m = DsbrdfMaterial::new([100.0; PARAM_COUNT], lo, hi).unwrap();
        assert!(m.normalize_params().iter().all(|v| (*v - 0.95).abs() < 1e-15));
        let back = denormalize_params(&[2.0; PARAM_COUNT], &lo, &hi).unwrap();
        assert_eq!(back.raw, hi);
    }

    #[test]
    fn bounds_must_be_ordered() {
        let (lo, _) = default_bounds();
        assert!(DsbrdfMaterial::new([0.0; PARAM_COUNT], lo, lo).is_err());
    }

    fn params_strategy(range: std::ops::Range<f64>) -> impl Strategy<Value = Params> {
        prop::collection::vec(range, PARAM_COUNT).prop_map(|v| v.try_into().unwrap())
    }

    proptest! {
        #[test]
        fn normalize_round_trip(u in params_strategy(0.0..1.0)) {
            let (lo, hi) = default_bounds();
            let raw: Params = std::array::from_fn(|i| lo[i] + u[i] * (hi[i] - lo[i]));
            let m = DsbrdfMaterial::new(raw, lo, hi).unwrap();
            let back = denormalize_params(&m.normalize_params(), &lo, &hi).unwrap();
            for i in 0..PARAM_COUNT {
                prop_assert!((back.raw[i] - raw[i]).abs() < 1e-12 * raw[i].abs().max(1.0));
            }
        }

        #[test]
        fn denormalize_round_trip(x in params_strategy(-0.95..0.95)) {
            let (lo, hi) = default_bounds();
            let m = denormalize_params(&x, &lo, &hi).unwrap();
            let again = m.normalize_params();
            for i in 0..PARAM_COUNT {
                prop_assert!((again[i] - x[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn coeffs_are_linear(a in params_strategy(-2.0..2.0), b in params_strategy(-2.0..2.0), theta in 0.0..FRAC_PI_2) {
            let ma = DsbrdfMaterial::with_default_bounds(a).unwrap();
            let mb = DsbrdfMaterial::with_default_bounds(b).unwrap();
            let sum = DsbrdfMaterial::with_default_bounds(std::array::from_fn(|i| a[i] + 2.0 * b[i])).unwrap();
            let (ca, cb, cs) = (ma.coeffs_at(theta), mb.coeffs_at(theta), sum.coeffs_at(theta));
            for c in 0..CURVES {
                prop_assert!((cs[c] - ca[c] - 2.0 * cb[c]).abs() < 1e-12);
            }
        }

        #[test]
        fn channels_are_independent(a in params_strategy(-1.0..1.0), hn in 0.0f64..1.0, theta in 0.0..FRAC_PI_2) {
            let mut raw = a;
            for v in raw.iter_mut().skip(36) {
                *v = 0.0;
            }
            let m = DsbrdfMaterial::with_default_bounds(raw).unwrap();
            let f = eval_f(&m, &geom(hn, theta)).unwrap();
            prop_assert_eq!(f[1], 0.0);
            prop_assert_eq!(f[2], 0.0);
        }
    }
}
