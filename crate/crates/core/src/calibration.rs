//! Sensor offset and delay extraction.
//!
//! Under feedback control with zero current commands the regulator holds
//! zero current, so the voltage command is the BEMF vector rotated back by
//! the total forward-path error `Δθ'e = we·(t_d + Tp) + δθ0`. Its angle at
//! several speeds gives an affine fit whose slope is the delay (plus the
//! known PWM period) and whose intercept is the offset.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::frame::{Dq, Rotation};
use crate::machine::{steady_state_currents, MachineParams};
use crate::{Error, Result};

/// Voltage magnitude below which the BEMF angle is not trusted (V).
pub const EXCITATION_FLOOR: f64 = 0.1;

/// Current magnitude below which the feedforward residual angle is not
/// trusted (A).
pub const CURRENT_FLOOR: f64 = 0.5;

/// Condition number of the column-normalized design matrix above which the
/// fit is flagged.
pub const CONDITION_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub omega_e: f64,
    pub vd_cmd: f64,
    pub vq_cmd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub delta_theta0_est: f64,
    pub t_d_est: f64,
    /// RMS of the affine-fit residual (rad).
    pub residual_rms: f64,
    /// `(we, Δθ'e)` per sample after unwrapping, sorted by speed.
    pub per_speed_errors: Vec<(f64, f64)>,
    pub condition_number: f64,
    pub ill_conditioned: bool,
}

/// Total forward-path angle error from one zero-current voltage command.
pub fn total_error_from_voltages(sample: &CalibrationSample, lambda_m: f64) -> Result<f64> {
    let magnitude = sample.vd_cmd.hypot(sample.vq_cmd);
    if magnitude.is_nan() || magnitude < EXCITATION_FLOOR {
        return Err(Error::InsufficientExcitation {
            magnitude,
            floor: EXCITATION_FLOOR,
        });
    }
    // the BEMF vector points along -q when we·λm < 0
    if sample.omega_e * lambda_m < 0.0 {
        Ok((-sample.vd_cmd).atan2(-sample.vq_cmd))
    } else {
        Ok(sample.vd_cmd.atan2(sample.vq_cmd))
    }
}

/// Least-squares fit of `Δθ'e(we) = we·(t_d + Tp) + δθ0`.
pub fn fit_offset_and_delay(samples: &[CalibrationSample], t_p: f64, lambda_m: f64) -> Result<CalibrationResult> {
    let mut points = samples
        .iter()
        .map(|s| total_error_from_voltages(s, lambda_m).map(|a| (s.omega_e, a)))
        .collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut distinct = points.iter().map(|p| p.0).collect::<Vec<_>>();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::UnderDetermined {
            distinct: distinct.len(),
        });
    }

    // unwrap onto the branch nearest the previous speed's value
    for i in 1..points.len() {
        let prev = points[i - 1].1;
        let a = &mut points[i].1;
        *a -= TAU * ((*a - prev + PI) / TAU).floor();
    }

    let n = points.len() as f64;
    let mean_w = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_a = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sww: f64 = points.iter().map(|p| (p.0 - mean_w).powi(2)).sum();
    let swa: f64 = points.iter().map(|p| (p.0 - mean_w) * (p.1 - mean_a)).sum();
    let slope = swa / sww;
    let intercept = mean_a - slope * mean_w;
    let residual_rms = (points
        .iter()
        .map(|p| (p.1 - (slope * p.0 + intercept)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();

    let condition_number = design_condition(&points);
    Ok(CalibrationResult {
        delta_theta0_est: intercept,
        t_d_est: slope - t_p,
        residual_rms,
        per_speed_errors: points,
        condition_number,
        ill_conditioned: condition_number.is_nan() || condition_number > CONDITION_LIMIT,
    })
}

/// 2-norm condition number of `[we, 1]` with unit-norm columns.
fn design_condition(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let norm_w = points.iter().map(|p| p.0 * p.0).sum::<f64>().sqrt();
    if norm_w == 0.0 {
        return f64::INFINITY;
    }
    // Gram matrix [[1, g], [g, 1]] has eigenvalues 1 ± |g|
    let g = points.iter().map(|p| p.0).sum::<f64>() / (norm_w * n.sqrt());
    let g = g.abs().min(1.0);
    ((1.0 + g) / (1.0 - g)).sqrt()
}

/// Angle of the rotation taking the currents the plant should carry for
/// `cmd_voltages` (inverse steady-state model) onto the estimated currents.
pub fn ff_residual_errors(estimated: Dq, cmd_voltages: Dq, omega_e: f64, params: &MachineParams) -> Result<f64> {
    let ideal = steady_state_currents(cmd_voltages, omega_e, &params.base());
    let magnitude = ideal.norm().min(estimated.norm());
    if magnitude.is_nan() || magnitude < CURRENT_FLOOR {
        return Err(Error::InsufficientExcitation {
            magnitude,
            floor: CURRENT_FLOOR,
        });
    }
    Ok(ideal.cross(estimated).atan2(ideal.dot(estimated)))
}

/// Total position error `Δθe` under feedforward control, found by inverting
/// the loop model: the command is rotated by `we·Tp + Δθe` on its way to the
/// plant and the resulting currents are seen rotated by `Δθe`.
pub fn ff_position_error(
    estimated: Dq,
    cmd_voltages: Dq,
    omega_e: f64,
    t_p: f64,
    params: &MachineParams,
) -> Result<f64> {
    if estimated.norm().is_nan() || estimated.norm() < CURRENT_FLOOR {
        return Err(Error::InsufficientExcitation {
            magnitude: estimated.norm(),
            floor: CURRENT_FLOOR,
        });
    }
    let p = params.base();
    let residual = |delta: f64| {
        let applied = Rotation::new(omega_e * t_p + delta).apply(cmd_voltages);
        let seen = Rotation::new(delta).apply(steady_state_currents(applied, omega_e, &p));
        (seen - estimated).norm()
    };

    const GRID: usize = 720;
    let step = TAU / GRID as f64;
    let best = (0..GRID)
        .map(|i| -PI + i as f64 * step)
        .min_by(|a, b| residual(*a).total_cmp(&residual(*b)))
        .expect("non-empty grid");

    // golden-section refinement inside the bracketing cells
    let (mut lo, mut hi) = (best - step, best + step);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (residual(x1), residual(x2));
    for _ in 0..100 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = residual(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = residual(x2);
        }
    }
    Ok(0.5 * (lo + hi))
}
