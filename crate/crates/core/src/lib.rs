//! Doppler-based acoustic direction finding and indoor localization.
//!
//! The crate synthesizes received audio and inertial data for scripted phone
//! motion, runs the phase-tracking and estimation pipeline on it, and
//! measures the result against ground truth.

// range checks are written `!(x > 0.0)` on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acoustic;
pub mod angles;
pub mod direction;
pub mod dsp;
pub mod harness;
pub mod imu;
pub mod localization;
mod error;
pub mod scenario;

pub use error::{Error, ErrorCategory, Result};

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;
