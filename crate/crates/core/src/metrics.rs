//! Image comparison on tone-mapped 8-bit-range images.

use crate::error::{Error, Result};
use crate::model::{RadianceImage, Rgb};

pub const GAMMA: f64 = 2.2;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
pub const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// RGB image with components in `[0, 255]`, stored as reals.
#[derive(Debug, Clone, PartialEq)]
pub struct LdrImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exposure {
    Fixed(f64),
    /// `1 / p99` of the foreground luminance (channel mean).
    Auto,
}

/// Exposure that maps the 99th-percentile foreground luminance to white.
/// Falls back to 1 for an all-black foreground.
pub fn auto_exposure(img: &RadianceImage, mask: Option<&[bool]>) -> f64 {
    let mut lum: Vec<f64> = img
        .pixels
        .iter()
        .enumerate()
        .filter(|(p, _)| mask.is_none_or(|m| m[*p]))
        .map(|(_, c)| (c[0] + c[1] + c[2]) / 3.0)
        .filter(|v| v.is_finite())
        .collect();
    if lum.is_empty() {
        return 1.0;
    }
    lum.sort_by(f64::total_cmp);
    // nearest-rank percentile
    let rank = ((0.99 * lum.len() as f64).ceil() as usize).clamp(1, lum.len());
    let p99 = lum[rank - 1];
    if p99 > 0.0 {
        1.0 / p99
    } else {
        1.0
    }
}

pub fn resolve_exposure(img: &RadianceImage, exposure: Exposure, mask: Option<&[bool]>) -> f64 {
    match exposure {
        Exposure::Fixed(e) => e,
        Exposure::Auto => auto_exposure(img, mask),
    }
}

#[inline]
pub fn tone_value(c: f64, exposure: f64) -> f64 {
    let v = (exposure * c).max(0.0);
    (255.0 * v.powf(1.0 / GAMMA)).clamp(0.0, 255.0)
}

/// `clamp(255 * (exposure * c)^(1/2.2), 0, 255)` per channel.
pub fn tone_map(img: &RadianceImage, exposure: Exposure, mask: Option<&[bool]>) -> Result<LdrImage> {
    let e = resolve_exposure(img, exposure, mask);
    if !(e > 0.0 && e.is_finite()) {
        return Err(Error::Invalid(format!("exposure {e} must be positive")));
    }
    Ok(LdrImage {
        width: img.width,
        height: img.height,
        pixels: img.pixels.iter().map(|c| c.map(|v| tone_value(v, e))).collect(),
    })
}

fn same_shape(a: &LdrImage, b: &LdrImage) -> Result<()> {
    if a.width != b.width || a.height != b.height || a.pixels.len() != b.pixels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// Mean over masked pixels of the per-pixel mean squared channel difference.
/// Zero when the mask is empty.
pub fn l2_metric(a: &LdrImage, b: &LdrImage, mask: Option<&[bool]>) -> Result<f64> {
    same_shape(a, b)?;
    if mask.is_some_and(|m| m.len() != a.pixels.len()) {
        return Err(Error::ShapeMismatch("mask does not match image".into()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, (x, y)) in a.pixels.iter().zip(&b.pixels).enumerate() {
        if mask.is_some_and(|m| !m[p]) {
            continue;
        }
        sum += ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)) / 3.0;
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let c = (SSIM_WINDOW / 2) as f64;
    let mut w: [f64; SSIM_WINDOW] =
        std::array::from_fn(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
    let s: f64 = w.iter().sum();
    for v in &mut w {
        *v /= s;
    }
    w
}

/// Separable valid-mode Gaussian filter.
fn filter(img: &[f64], width: usize, height: usize, w: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = width - SSIM_WINDOW + 1;
    let oh = height - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; ow * height];
    for y in 0..height {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| w[i] * img[y * width + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| w[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM of the channel-mean luminance over all 11x11 windows that fit
/// inside the image.
pub fn ssim(a: &LdrImage, b: &LdrImage) -> Result<f64> {
    same_shape(a, b)?;
    let (w, h) = (a.width, a.height);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::Invalid(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let luma = |img: &LdrImage| -> Vec<f64> { img.pixels.iter().map(|c| (c[0] + c[1] + c[2]) / 3.0).collect() };
    let x = luma(a);
    let y = luma(b);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let win = gaussian_window();
    let mu_x = filter(&x, w, h, &win);
    let mu_y = filter(&y, w, h, &win);
    let e_xx = filter(&xx, w, h, &win);
    let e_yy = filter(&yy, w, h, &win);
    let e_xy = filter(&xy, w, h, &win);
    let n = mu_x.len();
    let mut total = 0.0;
    for i in 0..n {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let sxx = e_xx[i] - mx * mx;
        let syy = e_yy[i] - my * my;
        let sxy = e_xy[i] - mx * my;
        let num = (2.0 * mx * my + SSIM_C1) * (2.0 * sxy + SSIM_C2);
        let den = (mx * mx + my * my + SSIM_C1) * (sxx + syy + SSIM_C2);
        total += num / den;
    }
    Ok(total / n as f64)
}
