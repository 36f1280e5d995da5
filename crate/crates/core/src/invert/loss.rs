use crate::error::{Error, Result};
use crate::model::{NormalMap, RadianceImage};

/// Weights of the combined training-style loss. The image term takes the
/// place of a learned perceptual loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub w_normal: f64,
    pub w_material: f64,
    pub w_image: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_normal: 1e4,
            w_material: 1e3,
            w_image: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(w_normal: f64, w_material: f64, w_image: f64) -> Result<Self> {
        if [w_normal, w_material, w_image].iter().all(|w| *w > 0.0 && w.is_finite()) {
            Ok(Self {
                w_normal,
                w_material,
                w_image,
            })
        } else {
            Err(Error::Invalid("loss weights must be positive".into()))
        }
    }
}

/// Sum over foreground pixels of `|n - n'|^2`.
pub fn loss_normal(pred: &NormalMap, gt: &NormalMap) -> Result<f64> {
    if pred.width() != gt.width() || pred.height() != gt.height() || pred.mask() != gt.mask() {
        return Err(Error::ShapeMismatch("normal maps differ in size or mask".into()));
    }
    Ok(pred
        .normals()
        .iter()
        .zip(gt.normals())
        .zip(pred.mask())
        .filter(|(_, &fg)| fg)
        .map(|((a, b), _)| {
            let d = *a - *b;
            d.dot(d)
        })
        .sum())
}

/// Sum of squared differences of two normalized parameter vectors.
pub fn loss_material(pred: &[f64], gt: &[f64]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::ShapeMismatch(format!(
            "material vectors of length {} and {}",
            pred.len(),
            gt.len()
        )));
    }
    Ok(pred.iter().zip(gt).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Sum over masked pixels of the squared RGB difference.
pub fn loss_image(pred: &RadianceImage, target: &RadianceImage, mask: Option<&[bool]>) -> Result<f64> {
    if pred.width != target.width || pred.height != target.height || mask.is_some_and(|m| m.len() != pred.pixels.len())
    {
        return Err(Error::ShapeMismatch("images differ in size".into()));
    }
    Ok(pred
        .pixels
        .iter()
        .zip(&target.pixels)
        .enumerate()
        .filter(|(p, _)| mask.is_none_or(|m| m[*p]))
        .map(|(_, (a, b))| (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>())
        .sum())
}

pub fn loss_combined(weights: &LossWeights, l_normal: f64, l_material: f64, l_image: f64) -> f64 {
    weights.w_normal * l_normal + weights.w_material * l_material + weights.w_image * l_image
}
