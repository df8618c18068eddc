//! Rigid camera poses, twists, pinhole intrinsics and velocity integration.
//!
//! Euler convention: `R = Rx(alpha) * Ry(beta) * Rz(gamma)`, applied in that
//! order. Every pose in this crate (configs, traces, reports) uses it.
//!
//! A pose maps camera coordinates into world coordinates,
//! `p_world = R * p_cam + T`. Twists are expressed in the camera frame and
//! integrated by right-composition with the SE(3) exponential, which is the
//! eye-in-hand convention of image-based visual servoing.

use nalgebra::{Matrix3, Vector3, Vector6};

use crate::{Error, Result};

/// Rotation angles below this use the series expansion of the exponential.
const SMALL_ANGLE: f64 = 1e-8;
/// Orthonormality drift tolerated before re-projecting onto SO(3).
const ORTHO_DRIFT: f64 = 1e-9;

/// Camera pose in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for CameraPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl CameraPose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Build a pose from a rotation matrix, rejecting anything that is not a
    /// proper rotation within `1e-9` elementwise.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("pose"));
        }
        let gram = rotation.transpose() * rotation - Matrix3::identity();
        if gram.amax() > ORTHO_DRIFT || (rotation.determinant() - 1.0).abs() > ORTHO_DRIFT {
            return Err(Error::invalid("rotation", "matrix is not orthonormal with det +1"));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Camera optical axis (camera `+z`) expressed in the world frame.
    pub fn optical_axis(&self) -> Vector3<f64> {
        self.rotation.column(2).into_owned()
    }

    /// Transform a camera-frame point into the world frame.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Transform a world-frame point into this frame.
    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    /// `self * other`.
    pub fn compose(&self, other: &CameraPose) -> CameraPose {
        CameraPose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> CameraPose {
        let rt = self.rotation.transpose();
        CameraPose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Same rotation, translation shifted by `delta` in the world frame.
    pub fn translated(&self, delta: &Vector3<f64>) -> CameraPose {
        CameraPose {
            rotation: self.rotation,
            translation: self.translation + delta,
        }
    }

    /// Euler angles `(alpha, beta, gamma)` in radians such that
    /// `R = Rx(alpha) Ry(beta) Rz(gamma)`.
    pub fn euler_angles(&self) -> (f64, f64, f64) {
        let r = &self.rotation;
        let beta = r[(0, 2)].clamp(-1.0, 1.0).asin();
        if r[(0, 2)].abs() < 1.0 - 1e-12 {
            let alpha = (-r[(1, 2)]).atan2(r[(2, 2)]);
            let gamma = (-r[(0, 1)]).atan2(r[(0, 0)]);
            (alpha, beta, gamma)
        } else {
            // gimbal lock: fold everything into alpha
            let alpha = r[(2, 1)].atan2(r[(1, 1)]);
            (alpha, beta, 0.0)
        }
    }

    /// `(tx, ty, tz, alpha, beta, gamma)` with angles in degrees, the layout
    /// used by trace files and reports.
    pub fn to_euler_degrees(&self) -> [f64; 6] {
        let (a, b, g) = self.euler_angles();
        [
            self.translation.x,
            self.translation.y,
            self.translation.z,
            a.to_degrees(),
            b.to_degrees(),
            g.to_degrees(),
        ]
    }

    /// Pose error of `self` relative to `reference`: translation difference
    /// in the world frame and Euler angles (degrees) of `R_ref^T R`.
    pub fn error_relative_to(&self, reference: &CameraPose) -> [f64; 6] {
        let dt = self.translation - reference.translation;
        let rel = CameraPose {
            rotation: reference.rotation.transpose() * self.rotation,
            translation: Vector3::zeros(),
        };
        let (a, b, g) = rel.euler_angles();
        [dt.x, dt.y, dt.z, a.to_degrees(), b.to_degrees(), g.to_degrees()]
    }

    /// Rotation angle (radians) of `R_a^T R_b`.
    pub fn rotation_angle_to(&self, other: &CameraPose) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Pose from a translation (meters) and Euler angles (radians),
/// `R = Rx(alpha) Ry(beta) Rz(gamma)`.
pub fn pose_from_euler(tx: f64, ty: f64, tz: f64, alpha: f64, beta: f64, gamma: f64) -> CameraPose {
    CameraPose {
        rotation: rot_x(alpha) * rot_y(beta) * rot_z(gamma),
        translation: Vector3::new(tx, ty, tz),
    }
}

/// [`pose_from_euler`] with angles in degrees.
pub fn pose_from_euler_degrees(values: [f64; 6]) -> CameraPose {
    let [tx, ty, tz, a, b, g] = values;
    pose_from_euler(tx, ty, tz, a.to_radians(), b.to_radians(), g.to_radians())
}

/// Camera velocity `(v, w)` in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
}

impl Twist {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(linear: Vector3<f64>, angular: Vector3<f64>) -> Self {
        Self { linear, angular }
    }

    /// Unit twist along one of the six axes `(vx, vy, vz, wx, wy, wz)`.
    pub fn basis(axis: usize) -> Self {
        let mut v = Vector6::zeros();
        v[axis] = 1.0;
        Self::from_vector(&v)
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            linear: Vector3::new(v[0], v[1], v[2]),
            angular: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.linear.x,
            self.linear.y,
            self.linear.z,
            self.angular.x,
            self.angular.y,
            self.angular.z,
        )
    }

    pub fn to_array(&self) -> [f64; 6] {
        self.to_vector().into()
    }

    pub fn is_finite(&self) -> bool {
        self.linear.iter().chain(self.angular.iter()).all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.linear.iter().chain(self.angular.iter()).all(|&v| v == 0.0)
    }

    pub fn scaled(&self, k: f64) -> Twist {
        Twist {
            linear: self.linear * k,
            angular: self.angular * k,
        }
    }
}

fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// SE(3) exponential of a camera-frame twist, as a relative pose.
pub fn exp_se3(xi: &Twist) -> CameraPose {
    let w = xi.angular;
    let theta = w.norm();
    let k = skew(&w);
    let k2 = k * k;
    // Rodrigues: R = I + a K + b K^2, V = I + b K + c K^2
    let (a, b, c) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let t2 = theta * theta;
        let (s, co) = theta.sin_cos();
        (s / theta, (1.0 - co) / t2, (theta - s) / (t2 * theta))
    };
    let rotation = Matrix3::identity() + k * a + k2 * b;
    let v = Matrix3::identity() + k * b + k2 * c;
    CameraPose {
        rotation,
        translation: v * xi.linear,
    }
}

fn reorthonormalize(r: Matrix3<f64>) -> Matrix3<f64> {
    let drift = (r.transpose() * r - Matrix3::identity()).amax();
    if drift <= ORTHO_DRIFT && (r.determinant() - 1.0).abs() <= ORTHO_DRIFT {
        return r;
    }
    let svd = r.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut out = u * vt;
    if out.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        out = u * vt;
    }
    out
}

/// Advance `pose` by the camera-frame `twist` held for `dt` seconds:
/// `pose * exp(dt * twist)`.
pub fn integrate_twist(pose: &CameraPose, twist: &Twist, dt: f64) -> Result<CameraPose> {
    if !twist.is_finite() {
        return Err(Error::NonFinite("twist"));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
    }
    if twist.is_zero() {
        return Ok(*pose);
    }
    let step = exp_se3(&twist.scaled(dt));
    let mut next = pose.compose(&step);
    next.rotation = reorthonormalize(next.rotation);
    Ok(next)
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub focal_u: f64,
    pub focal_v: f64,
    pub center_u: f64,
    pub center_v: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(
        focal_u: f64,
        focal_v: f64,
        center_u: f64,
        center_v: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let k = Self {
            focal_u,
            focal_v,
            center_u,
            center_v,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Square pixels with the principal point at the geometric image center.
    pub fn centered(width: usize, height: usize, focal: f64) -> Result<Self> {
        Self::new(
            focal,
            focal,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal_u > 0.0 && self.focal_v > 0.0) || !self.focal_u.is_finite() || !self.focal_v.is_finite() {
            return Err(Error::invalid("focal", "focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("width/height", "image dimensions must be non-zero"));
        }
        if !(0.0..self.width as f64).contains(&self.center_u) || !(0.0..self.height as f64).contains(&self.center_v) {
            return Err(Error::invalid("center", "principal point must lie inside the image"));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Geometric mean focal length, used to express isotropic pixel spreads
    /// in normalized coordinates.
    pub fn mean_focal(&self) -> f64 {
        (self.focal_u * self.focal_v).sqrt()
    }

    pub fn pixel_to_normalized(&self, u: f64, v: f64) -> (f64, f64) {
        pixel_to_normalized(u, v, self)
    }

    pub fn normalized_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        (x * self.focal_u + self.center_u, y * self.focal_v + self.center_v)
    }

    /// Same camera with a `margin`-pixel band added on every side.
    pub fn expanded(&self, margin: usize) -> Intrinsics {
        Intrinsics {
            center_u: self.center_u + margin as f64,
            center_v: self.center_v + margin as f64,
            width: self.width + 2 * margin,
            height: self.height + 2 * margin,
            ..*self
        }
    }

    /// Inverse of [`Intrinsics::expanded`]; fails when the margin eats the image.
    pub fn inset(&self, margin: usize) -> Result<Intrinsics> {
        if 2 * margin >= self.width || 2 * margin >= self.height {
            return Err(Error::invalid("guard_band", "guard band leaves no pixels to evaluate"));
        }
        Intrinsics::new(
            self.focal_u,
            self.focal_v,
            self.center_u - margin as f64,
            self.center_v - margin as f64,
            self.width - 2 * margin,
            self.height - 2 * margin,
        )
    }

    /// Normalized coordinates of every pixel center, row-major.
    pub fn normalized_grid(&self) -> Vec<(f64, f64)> {
        (0..self.height)
            .flat_map(|v| (0..self.width).map(move |u| (u, v)))
            .map(|(u, v)| self.pixel_to_normalized(u as f64, v as f64))
            .collect()
    }
}

pub fn pixel_to_normalized(u: f64, v: f64, k: &Intrinsics) -> (f64, f64) {
    ((u - k.center_u) / k.focal_u, (v - k.center_v) / k.focal_v)
}
