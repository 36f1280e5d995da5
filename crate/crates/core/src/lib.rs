//! Differentiable rendering of environment-lit surfaces with a
//! spline-parameterized directional-statistics BRDF.
//!
//! The crate renders an image from a normal map, one or more materials and
//! an HDR environment map ([`render`]), differentiates the image with
//! respect to all three ([`grad`]), and inverts the process with an
//! alternating L-BFGS solve ([`invert`]).

pub mod brdf;
pub mod cli;
pub mod error;
pub mod fixtures;
pub mod grad;
pub mod invert;
pub mod io;
pub mod metrics;
pub mod model;
pub mod render;
pub mod spline;

pub use brdf::DsbrdfMaterial;
pub use error::{Error, Result};
pub use grad::{backward, fd_check, FdReport, Group, SceneGradients};
pub use model::{Camera, EnvironmentMap, NormalMap, Projection, RadianceImage, Rgb, SegmentationMask, Vec3};
pub use render::{build_light_table, render, render_reflectance_map, LightTable, RenderScene};
