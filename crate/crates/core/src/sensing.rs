//! Position measurement errors and the erroneous frame transform they cause.

use serde::{Deserialize, Serialize};

use crate::frame::{wrap_2pi, Dq, Rotation};
use crate::{Error, Result};

/// Static position-sensing errors and their compensation estimates.
///
/// Angles are electrical radians, delays seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PositionErrorModel {
    pub delta_theta0: f64,
    pub t_d: f64,
    pub delta_theta0_hat: f64,
    pub t_d_hat: f64,
}

impl PositionErrorModel {
    /// Uncompensated offset and delay.
    pub fn uncompensated(delta_theta0: f64, t_d: f64) -> Self {
        Self {
            delta_theta0,
            t_d,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("delta_theta0", self.delta_theta0),
            ("t_d", self.t_d),
            ("delta_theta0_hat", self.delta_theta0_hat),
            ("t_d_hat", self.t_d_hat),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::config(format!("errors.{name} must be finite")));
        }
        if self.t_d < 0.0 || self.t_d_hat < 0.0 {
            return Err(Error::config("errors.t_d and errors.t_d_hat must be non-negative"));
        }
        Ok(())
    }

    /// Total position error at speed `omega_e`, with the speed estimate
    /// taken equal to the true speed.
    pub fn total_error(&self, omega_e: f64) -> f64 {
        omega_e * self.t_d + self.delta_theta0 - omega_e * self.t_d_hat - self.delta_theta0_hat
    }
}

/// Corrected sine/cosine sensor channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSample {
    pub u_s: f64,
    pub u_c: f64,
}

impl QuadratureSample {
    pub fn new(u_s: f64, u_c: f64) -> Result<Self> {
        if u_s == 0.0 && u_c == 0.0 {
            return Err(Error::DegenerateSignal);
        }
        Ok(Self { u_s, u_c })
    }
}

/// Electrical position from a quadrature sample, in `[0, 2π)`.
pub fn decode_position(sample: QuadratureSample, pole_pairs: u32) -> Result<f64> {
    if sample.u_s == 0.0 && sample.u_c == 0.0 {
        return Err(Error::DegenerateSignal);
    }
    let mech = sample.u_s.atan2(sample.u_c);
    Ok(wrap_2pi(f64::from(pole_pairs) * mech))
}

/// Compensated position estimate under constant speed, in `[0, 2π)`.
pub fn measured_position(theta_e_true: f64, omega_e: f64, model: &PositionErrorModel) -> f64 {
    wrap_2pi(theta_e_true + model.total_error(omega_e))
}

/// Reconstructs phase A from the two in-line measurements.
pub fn phase_currents_from_two(ib: f64, ic: f64) -> (f64, f64, f64) {
    (-ib - ic, ib, ic)
}

/// Synchronous-frame currents as seen through a frame misaligned by
/// `delta_theta_e`: `[cos, -sin; sin, cos] · I`.
pub fn estimate_sync_currents(actual: Dq, delta_theta_e: f64) -> Dq {
    Rotation::new(delta_theta_e).apply(actual)
}
