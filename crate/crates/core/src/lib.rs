//! Position-sensing error analysis for permanent magnet synchronous motor drives.
//!
//! The crate models a dq-frame PMSM driven by a discrete current controller
//! whose position feedback carries a static offset and a sensing delay. It
//! simulates the loop to steady state, evaluates the closed-form steady-state
//! predictions for feedforward and feedback current control, and extracts
//! offset and delay from zero-current voltage data.
//!
//! Modules, bottom up:
//!
//! - [`frame`]: dq vectors and planar rotations.
//! - [`machine`]: electrical model, torque, saturation scheduling, presets.
//! - [`sensing`]: position error model, quadrature decode, current estimation.
//! - [`control`]: static/dynamic feedforward and PI feedback controllers.
//! - [`simloop`]: fixed-step closed-loop simulation and speed sweeps.
//! - [`oracle`]: closed-form steady-state predictions.
//! - [`calibration`]: offset and delay extraction.
//! - [`config`] and [`report`]: scenario files and CSV/metadata output.

pub mod calibration;
pub mod config;
pub mod control;
mod error;
pub mod frame;
pub mod machine;
pub mod oracle;
pub mod report;
pub mod sensing;
pub mod simloop;

pub use error::{Error, Result};
pub use frame::{Dq, Rotation};

/// Electrical angular velocity (rad/s) for a mechanical speed in RPM.
pub fn omega_e_from_rpm(rpm: f64, pole_pairs: u32) -> f64 {
    rpm * (2.0 * std::f64::consts::PI / 60.0) * f64::from(pole_pairs)
}

/// Mechanical speed in RPM for an electrical angular velocity.
pub fn rpm_from_omega_e(omega_e: f64, pole_pairs: u32) -> f64 {
    omega_e / f64::from(pole_pairs) / (2.0 * std::f64::consts::PI / 60.0)
}
