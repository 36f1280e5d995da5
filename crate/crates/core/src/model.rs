//! Scene data shared by the renderer, the gradient code and the optimizer.
//!
//! Camera space is right-handed: the camera sits at the origin looking down
//! `-z`, with `+x` to the right and `+y` up. Pixel `(0, 0)` is the top-left
//! corner and pixel centers sit at half-integer offsets.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Linear RGB triple.
pub type Rgb = [f64; 3];

/// Tolerance on the length of foreground normals.
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    #[inline]
    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Unit vector in the direction of `self`.
    pub fn normalize(self) -> Result<Vec3> {
        let n = self.norm();
        if !(n > 1e-12) {
            return Err(Error::DegenerateVector(n));
        }
        Ok(self * (1.0 / n))
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Unit vector in the direction of `v`; fails for `|v| <= 1e-12`.
pub fn normalize(v: Vec3) -> Result<Vec3> {
    v.normalize()
}

/// Per-pixel camera-space surface normals with a foreground mask.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    width: usize,
    height: usize,
    normals: Vec<Vec3>,
    mask: Vec<bool>,
}

impl NormalMap {
    /// Builds a normal map. Background normals are forced to zero; foreground
    /// normals must be unit length within [`UNIT_TOLERANCE`].
    pub fn new(width: usize, height: usize, mut normals: Vec<Vec3>, mask: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Invalid(format!("normal map size {width}x{height}")));
        }
        let len = width * height;
        if normals.len() != len || mask.len() != len {
            return Err(Error::ShapeMismatch(format!(
                "normal map {width}x{height} with {} normals and {} mask entries",
                normals.len(),
                mask.len()
            )));
        }
        for (i, (n, &fg)) in normals.iter_mut().zip(&mask).enumerate() {
            if !fg {
                *n = Vec3::ZERO;
                continue;
            }
            let len = n.norm();
            if !len.is_finite() || (len - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::Invalid(format!(
                    "normal at pixel ({}, {}) has length {len}",
                    i % width,
                    i / width
                )));
            }
        }
        Ok(Self {
            width,
            height,
            normals,
            mask,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn foreground_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentMap {
    height: usize,
    width: usize,
    radiance: Vec<Rgb>,
}

impl EnvironmentMap {
    pub const DEFAULT_HEIGHT: usize = 64;
    pub const DEFAULT_WIDTH: usize = 128;

    pub fn new(height: usize, width: usize, radiance: Vec<Rgb>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Invalid(format!("environment map size {height}x{width}")));
        }
        if radiance.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "environment map {height}x{width} with {} texels",
                radiance.len()
            )));
        }
        if radiance.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Invalid("environment radiance must be finite and >= 0".into()));
        }
        Ok(Self {
            height,
            width,
            radiance,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![[0.0; 3]; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn radiance(&self) -> &[Rgb] {
        &self.radiance
    }

    /// Every texel multiplied by `s >= 0`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let radiance = self.radiance.iter().map(|c| c.map(|v| v * s)).collect();
        Self::new(self.height, self.width, radiance)
    }
}

/// Linear HDR RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct RadianceImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
}

impl RadianceImage {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Invalid(format!("image size {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "image {width}x{height} with {} pixels",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![[0.0; 3]; width * height],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Pinhole { fov_y_degrees: f64 },
    Orthographic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub projection: Projection,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub const DEFAULT_FOV: f64 = 60.0;

    pub fn pinhole(fov_y_degrees: f64, width: usize, height: usize) -> Result<Self> {
        if !(fov_y_degrees > 0.0 && fov_y_degrees < 180.0) {
            return Err(Error::Invalid(format!("field of view {fov_y_degrees} outside (0, 180)")));
        }
        Self::checked(Projection::Pinhole { fov_y_degrees }, width, height)
    }

    pub fn orthographic(width: usize, height: usize) -> Result<Self> {
        Self::checked(Projection::Orthographic, width, height)
    }

    fn checked(projection: Projection, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Invalid(format!("camera image size {width}x{height}")));
        }
        Ok(Self {
            projection,
            width,
            height,
        })
    }

    pub fn is_orthographic(&self) -> bool {
        matches!(self.projection, Projection::Orthographic)
    }

    /// Unit vector from the surface seen at pixel `(px, py)` toward the camera.
    pub fn view_direction(&self, px: usize, py: usize) -> Vec3 {
        match self.projection {
            Projection::Orthographic => Vec3::new(0.0, 0.0, 1.0),
            Projection::Pinhole { fov_y_degrees } => {
                let w = self.width as f64;
                let h = self.height as f64;
                let t = (fov_y_degrees.to_radians() * 0.5).tan();
                let dx = (2.0 * (px as f64 + 0.5) / w - 1.0) * t * w / h;
                let dy = (1.0 - 2.0 * (py as f64 + 0.5) / h) * t;
                let d = Vec3::new(dx, dy, -1.0);
                -(d * (1.0 / d.norm()))
            }
        }
    }
}

/// Free-function form of [`Camera::view_direction`].
pub fn view_direction(camera: &Camera, px: usize, py: usize) -> Vec3 {
    camera.view_direction(px, py)
}

/// Per-pixel material region labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationMask {
    width: usize,
    height: usize,
    region_ids: Vec<u32>,
    region_count: usize,
}

impl SegmentationMask {
    /// Region id carried by background pixels.
    pub const BACKGROUND: u32 = u32::MAX;

    pub fn new(width: usize, height: usize, region_ids: Vec<u32>, region_count: usize) -> Result<Self> {
        if width == 0 || height == 0 || region_count == 0 {
            return Err(Error::Invalid(format!(
                "segmentation {width}x{height} with {region_count} regions"
            )));
        }
        if region_ids.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "segmentation {width}x{height} with {} labels",
                region_ids.len()
            )));
        }
        if let Some(bad) = region_ids
            .iter()
            .find(|&&r| r != Self::BACKGROUND && r as usize >= region_count)
        {
            return Err(Error::Invalid(format!(
                "region id {bad} not below region count {region_count}"
            )));
        }
        Ok(Self {
            width,
            height,
            region_ids,
            region_count,
        })
    }

    /// Every pixel in region 0.
    pub fn single(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0; width * height], 1)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn region_ids(&self) -> &[u32] {
        &self.region_ids
    }

    pub fn region_count(&self) -> usize {
        self.region_count
    }
}
