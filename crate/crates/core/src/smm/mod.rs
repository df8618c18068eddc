//! Student's t mixture model (SMM) of a grayscale image.
//!
//! Every pixel contributes one bivariate t-component whose mean is the pixel
//! center in normalized image coordinates and whose spread grows with the
//! pixel intensity. The SMM feature is the mixture density evaluated on a
//! pixel grid.

mod density;
mod mixture;

pub use density::{gaussian_pdf, nu_from_sigma, student_t_pdf};
pub use mixture::{
    components_from_image, smm_gradient_analytic, smm_gradient_filter, smm_transform,
    mixture_density_at, smm_transform_with_gradient, truncation_error, SmmEncoder,
};

use nalgebra::Vector2;

use crate::geometry::Intrinsics;
use crate::{Error, Result};

/// One mixture component. `variance` is the isotropic covariance scalar in
/// squared normalized coordinates derived from the dimensionless `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TComponent {
    pub mean: Vector2<f64>,
    pub sigma: f64,
    pub nu: f64,
    pub weight: f64,
    pub variance: f64,
}

/// How component contributions are summed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    /// Every component at every pixel.
    Full,
    /// Skip a component where `delta / nu > radius^2`.
    Radius(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    Analytic,
    Filter,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmmConfig {
    /// Sigma assigned to intensity 0. Must exceed 1.
    pub sigma_min: f64,
    /// Sigma assigned to intensity 255.
    pub sigma_max: f64,
    /// Standard spread, in pixels, of a `sigma_min` component.
    pub spread_px: f64,
    pub truncation: Truncation,
    /// Relative deviation from the full sum the cutoff is meant to stay under.
    pub truncation_tolerance: f64,
    pub gradient: GradientMode,
    /// Divide features by the maximum of the desired SMM.
    pub normalize: bool,
    /// Extra pixels rendered around the view; they feed components but are
    /// not part of the feature vector.
    pub guard_band: usize,
}

pub const DEFAULT_TRUNCATION_RADIUS: f64 = 7.0;

impl Default for SmmConfig {
    fn default() -> Self {
        Self {
            sigma_min: 1.5,
            sigma_max: 5.0,
            spread_px: 1.5,
            truncation: Truncation::Radius(DEFAULT_TRUNCATION_RADIUS),
            truncation_tolerance: 1e-6,
            gradient: GradientMode::Analytic,
            normalize: false,
            guard_band: 0,
        }
    }
}

impl SmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_min > 1.0) || !self.sigma_min.is_finite() {
            return Err(Error::invalid(
                "sigma_min",
                format!(
                    "must exceed 1: nu = 2 sigma / (sigma - 1) has a pole at sigma = 1 (got {})",
                    self.sigma_min
                ),
            ));
        }
        if !(self.sigma_max >= self.sigma_min) || !self.sigma_max.is_finite() {
            return Err(Error::invalid("sigma_max", "must be finite and at least sigma_min"));
        }
        if !(self.spread_px > 0.0) || !self.spread_px.is_finite() {
            return Err(Error::invalid("spread_px", "must be positive"));
        }
        if let Truncation::Radius(r) = self.truncation {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::invalid("truncation_radius", "must be positive"));
            }
        }
        if !(self.truncation_tolerance > 0.0) {
            return Err(Error::invalid("truncation_tolerance", "must be positive"));
        }
        Ok(())
    }

    /// Sigma for an intensity in `[0, 255]`.
    pub fn sigma_for_intensity(&self, intensity: f64) -> f64 {
        self.sigma_min + intensity / 255.0 * (self.sigma_max - self.sigma_min)
    }

    /// Factor turning a dimensionless sigma into a variance in squared
    /// normalized coordinates for camera `k`.
    pub fn variance_scale(&self, k: &Intrinsics) -> f64 {
        self.spread_px * self.spread_px / (self.sigma_min * k.focal_u * k.focal_v)
    }
}

/// Mixture density sampled on a pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SmmImage {
    pub intrinsics: Intrinsics,
    pub values: Vec<f64>,
    pub components: Vec<TComponent>,
}

impl SmmImage {
    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[v * self.width() + u]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Spatial gradient of the mixture density, per normalized coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct SmmGradient {
    pub width: usize,
    pub height: usize,
    pub du: Vec<f64>,
    pub dv: Vec<f64>,
}

impl SmmGradient {
    pub fn at(&self, u: usize, v: usize) -> (f64, f64) {
        let i = v * self.width + u;
        (self.du[i], self.dv[i])
    }

    pub fn scaled(&self, k: f64) -> SmmGradient {
        SmmGradient {
            width: self.width,
            height: self.height,
            du: self.du.iter().map(|g| g * k).collect(),
            dv: self.dv.iter().map(|g| g * k).collect(),
        }
    }
}
