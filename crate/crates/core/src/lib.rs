//! Visual servoing on Student's t mixture model (SMM) image features.
//!
//! A grayscale image is turned into a dense feature by placing one bivariate
//! t-distribution on every pixel, with its spread driven by the pixel
//! intensity, and evaluating the mixture density back on the pixel grid.
//! The interaction matrix of that feature is derived analytically from the
//! mixture gradient and drives a simulated 6-DOF pinhole camera toward a
//! desired view of a textured planar scene.
//!
//! Module map:
//!
//! - [`geometry`]: poses, twists, intrinsics and the SE(3) exponential.
//! - [`image`]: grayscale rasters and PGM/PNG/CSV I/O.
//! - [`smm`]: t-densities, the mixture transform and its gradients.
//! - [`scene`]: planar-scene renderer and occlusion injection.
//! - [`servo`]: interaction matrix, pseudoinverse, control law, servo loop.
//! - [`experiments`]: scripted positioning and robustness studies.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod geometry;
pub mod image;
pub mod scene;
pub mod servo;
pub mod smm;

pub use error::{Error, Result};
pub use geometry::{CameraPose, Intrinsics, Twist};
pub use image::Image;
