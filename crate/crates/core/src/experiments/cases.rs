//! Initial poses of the positioning studies. Poses are absolute world poses
//! `(tx, ty, tz, alpha, beta, gamma)` in meters and degrees; the plane lies
//! at `z = 0` and the desired camera sits at `z = -0.5` looking along `+z`.

use std::path::PathBuf;

use crate::scene::OcclusionFill;
use crate::servo::DofMask;

pub const DESIRED_POSE: [f64; 6] = [0.0, 0.0, -0.5, 0.0, 0.0, 0.0];

/// Planar task, `(tx, ty, gamma)` at the desired depth.
pub const TABLE1: [(f64, f64, f64); 5] = [
    (0.3, 0.3, 0.0),
    (0.25, 0.25, -15.0),
    (0.25, 0.25, 10.0),
    (-0.3, 0.25, -18.0),
    (0.4, 0.35, 5.0),
];

/// Full 6-DOF task.
pub const TABLE2: [[f64; 6]; 10] = [
    [-0.4, -0.4, -0.50, 0.5, 1.0, -10.0],
    [-0.4, -0.4, -0.53, 1.0, 0.3, -20.0],
    [0.36, 0.38, -0.48, 0.0, 0.3, -12.0],
    [0.35, 0.37, -0.55, 0.0, 0.0, 8.0],
    [0.22, -0.32, -0.51, 0.1, 1.2, 20.0],
    [0.37, 0.42, -0.46, 0.8, 0.5, 8.0],
    [0.30, -0.45, -0.48, 1.0, 0.5, -20.0],
    [-0.37, 0.28, -0.52, -0.6, -0.1, -20.0],
    [0.35, 0.38, -0.53, 0.4, 0.3, -20.0],
    [0.27, -0.35, -0.49, 0.4, 1.0, 14.0],
];

/// Row of [`TABLE2`] used by the resolution study.
pub const RESOLUTION_CASE: usize = 3;
/// 8x8 two-level checker tile used as the default occluder.
pub fn checker_patch() -> crate::image::Image {
    crate::image::Image::from_fn(8, 8, |u, v| if (u / 4 + v / 4) % 2 == 0 { 60.0 } else { 190.0 })
        .expect("static patch is valid")
}

/// Row of [`TABLE2`] used by the occlusion study.
pub const OCCLUSION_CASE: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum TextureId {
    /// The bundled photograph.
    Default,
    /// Procedural low-texture blobs.
    LowTexture,
    /// Uniform intensity everywhere on the plane.
    Constant(f64),
    File(PathBuf),
}

impl std::fmt::Display for TextureId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TextureId::Default => f.write_str("default"),
            TextureId::LowTexture => f.write_str("low_texture"),
            TextureId::Constant(v) => write!(f, "constant_{v}"),
            TextureId::File(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionSpec {
    /// Fraction of the view area covered.
    pub fraction: f64,
    /// Patch center as a fraction of the view size.
    pub center: (f64, f64),
    pub fill: OcclusionFill,
}

impl Default for OcclusionSpec {
    fn default() -> Self {
        Self {
            fraction: 0.15,
            center: (0.5, 0.5),
            fill: OcclusionFill::Patch(checker_patch()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentCase {
    pub name: String,
    pub initial: [f64; 6],
    pub dof_mask: DofMask,
    pub texture: TextureId,
    /// Square view size in pixels.
    pub resolution: usize,
    pub occlusion: Option<OcclusionSpec>,
}

impl ExperimentCase {
    pub fn new(name: impl Into<String>, initial: [f64; 6], dof_mask: DofMask) -> Self {
        Self {
            name: name.into(),
            initial,
            dof_mask,
            texture: TextureId::Default,
            resolution: 50,
            occlusion: None,
        }
    }
}

pub fn table1_cases() -> Vec<ExperimentCase> {
    TABLE1
        .iter()
        .enumerate()
        .map(|(i, &(tx, ty, g))| {
            let z = DESIRED_POSE[2];
            ExperimentCase::new(format!("table1_exp{}", i + 1), [tx, ty, z, 0.0, 0.0, g], DofMask::PLANAR)
        })
        .collect()
}

pub fn table2_cases() -> Vec<ExperimentCase> {
    TABLE2
        .iter()
        .enumerate()
        .map(|(i, &p)| ExperimentCase::new(format!("table2_exp{}", i + 1), p, DofMask::FULL))
        .collect()
}
