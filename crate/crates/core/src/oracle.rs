//! Closed-form steady-state predictions.
//!
//! All predictions assume constant machine parameters and a controller whose
//! plant estimate is exact. `Δθe` is the total position error; `Δθ'e` adds
//! the PWM transport-lag rotation `we·Tp`.

use serde::{Deserialize, Serialize};

use crate::control::ControlMode;
use crate::frame::{Dq, Rotation};
use crate::machine::{steady_state_voltage, torque_const, EffectiveParams, MachineParams};
use crate::simloop::Scenario;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleSource {
    /// Feedforward steady state; torque from the non-salient closed form.
    FeedforwardNonSalient,
    /// Feedforward steady state; torque from the machine model at the
    /// predicted currents.
    FeedforwardSalient,
    /// Feedback steady state.
    Feedback,
    /// Zero-current voltage commands under feedback.
    ZeroCurrentVoltages,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OraclePrediction {
    pub id: f64,
    pub iq: f64,
    pub torque: f64,
    /// Predicted steady-state voltage command.
    pub vd_cmd: Option<f64>,
    pub vq_cmd: Option<f64>,
    pub source: OracleSource,
}

impl OraclePrediction {
    pub fn currents(&self) -> Dq {
        Dq::new(self.id, self.iq)
    }
}

fn constant_params(params: &MachineParams) -> Result<EffectiveParams> {
    if params.has_saturation() {
        return Err(Error::config(
            "closed-form predictions require constant parameters; disable saturation maps",
        ));
    }
    params.validate()?;
    Ok(params.base())
}

/// Steady-state currents under feedforward control with exact parameter
/// estimates and total forward-path angle error `delta_theta_prime`.
///
/// The diagonal terms carry the saliency correction
/// `we R (Lq - Ld)/(R² + we² Ld Lq) · sin Δθ'e`; the off-diagonal terms are
/// `∓ sin Δθ'e · (R² + we² L²)/(R² + we² Ld Lq)`, which reduce to `∓ sin Δθ'e`
/// for a non-salient machine.
pub fn ff_steady_currents(cmd: Dq, omega_e: f64, delta_theta_prime: f64, params: &MachineParams) -> Result<Dq> {
    let p = constant_params(params)?;
    let (s, c) = delta_theta_prime.sin_cos();
    let (r, w, ld, lq) = (p.r, omega_e, p.ld, p.lq);
    let den = r * r + w * w * ld * lq;
    let k = w * r * (lq - ld) / den;
    let a11 = c - k * s;
    let a12 = -s * (r * r + w * w * lq * lq) / den;
    let a21 = s * (r * r + w * w * ld * ld) / den;
    let a22 = c + k * s;
    let bemf = w * p.lambda_m / den;
    Ok(Dq::new(
        a11 * cmd.d + a12 * cmd.q + bemf * (-r * s + w * lq * (1.0 - c)),
        a21 * cmd.d + a22 * cmd.q + bemf * (-r * (1.0 - c) - w * ld * s),
    ))
}

/// Feedforward steady-state torque for a non-salient machine (`Ld = Lq = L0`).
pub fn ff_torque_nonsalient(cmd: Dq, omega_e: f64, delta_theta_prime: f64, params: &MachineParams) -> Result<f64> {
    let p = constant_params(params)?;
    if params.is_salient() {
        return Err(Error::Salient { ld: p.ld, lq: p.lq });
    }
    let (s, c) = delta_theta_prime.sin_cos();
    let (r, w, l0, lm) = (p.r, omega_e, p.ld, p.lambda_m);
    let den = r * r + w * w * l0 * l0;
    Ok(1.5
        * f64::from(p.pole_pairs)
        * lm
        * (cmd.q * c + cmd.d * s - w * w * l0 * lm / den * s - w * lm * r / den * (1.0 - c)))
}

/// Feedback steady-state currents: `[cos, sin; -sin, cos] · I*`.
pub fn fb_steady_currents(cmd: Dq, delta_theta_e: f64) -> Dq {
    Rotation::new(delta_theta_e).apply_transpose(cmd)
}

/// Feedback steady-state torque: the machine torque at the rotated currents,
/// expanded in the commands.
pub fn fb_torque(cmd: Dq, delta_theta_e: f64, params: &MachineParams) -> Result<f64> {
    let p = constant_params(params)?;
    let (s, c) = delta_theta_e.sin_cos();
    let (s2, c2) = (2.0 * delta_theta_e).sin_cos();
    let magnet = p.lambda_m * (cmd.q * c - cmd.d * s);
    let reluctance = (p.lq - p.ld) * (cmd.d * cmd.q * c2 + 0.5 * (cmd.q * cmd.q - cmd.d * cmd.d) * s2);
    Ok(1.5 * f64::from(p.pole_pairs) * (magnet + reluctance))
}

/// Voltage commands that hold zero current under feedback:
/// `[cos, sin; -sin, cos] · (0, we λm)`.
pub fn fb_zero_current_voltages(omega_e: f64, delta_theta_prime: f64, params: &MachineParams) -> Dq {
    let bemf = omega_e * params.effective(0.0, 0.0).lambda_m;
    Rotation::new(delta_theta_prime).apply_transpose(Dq::new(0.0, bemf))
}

/// Torque the controller intends, from its own parameter estimates.
pub fn commanded_torque(cmd: Dq, estimated: &MachineParams) -> f64 {
    torque_const(cmd, &estimated.effective(cmd.d, cmd.q))
}

/// Prediction for one sweep point, or an error if the scenario violates the
/// closed forms' assumptions (scheduled parameters, inexact estimates).
pub fn predict(scenario: &Scenario, omega_e: f64) -> Result<OraclePrediction> {
    let plant = constant_params(&scenario.machine)?;
    let est = constant_params(&scenario.controller.estimated_params)?;
    if plant != est {
        return Err(Error::config(
            "closed-form predictions assume the controller's parameter estimates equal the plant",
        ));
    }
    let cmd = scenario.command;
    let delta = scenario.errors.total_error(omega_e);
    let delta_prime = omega_e * scenario.sim.t_p + delta;
    let machine = &scenario.machine;

    let prediction = match scenario.controller.mode {
        ControlMode::StaticFf | ControlMode::DynamicFf => {
            let i = ff_steady_currents(cmd, omega_e, delta_prime, machine)?;
            let (torque, source) = if machine.is_salient() {
                (torque_const(i, &plant), OracleSource::FeedforwardSalient)
            } else {
                (
                    ff_torque_nonsalient(cmd, omega_e, delta_prime, machine)?,
                    OracleSource::FeedforwardNonSalient,
                )
            };
            let v = steady_state_voltage(cmd, omega_e, &plant);
            OraclePrediction {
                id: i.d,
                iq: i.q,
                torque,
                vd_cmd: Some(v.d),
                vq_cmd: Some(v.q),
                source,
            }
        }
        ControlMode::Feedback => {
            let i = fb_steady_currents(cmd, delta);
            let applied = steady_state_voltage(i, omega_e, &plant);
            let v = Rotation::new(delta_prime).apply_transpose(applied);
            OraclePrediction {
                id: i.d,
                iq: i.q,
                torque: fb_torque(cmd, delta, machine)?,
                vd_cmd: Some(v.d),
                vq_cmd: Some(v.q),
                source: OracleSource::Feedback,
            }
        }
    };
    Ok(prediction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControllerConfig;
    use crate::machine::{steady_state_currents, SaturationMaps};
    use crate::sensing::estimate_sync_currents;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn spm() -> MachineParams {
        MachineParams::spmsm_9s6p()
    }

    fn ipm() -> MachineParams {
        MachineParams::ipmsm_9s6p()
    }

    /// Loop solved directly at s = 0: the inverse model's voltage, rotated on
    /// the way to the plant, then the plant's steady-state response.
    fn ff_by_substitution(cmd: Dq, w: f64, dp: f64, m: &MachineParams) -> Dq {
        let p = m.base();
        let v_cmd = steady_state_voltage(cmd, w, &p);
        steady_state_currents(Rotation::new(dp).apply(v_cmd), w, &p)
    }

    #[test]
    fn ff_zero_angle_is_identity() {
        for m in [spm(), ipm()] {
            let cmd = Dq::new(-50.0, 100.0);
            let i = ff_steady_currents(cmd, 1234.0, 0.0, &m).unwrap();
            assert!((i - cmd).norm() < 1e-12);
        }
    }

    #[test]
    fn ff_nonsalient_has_no_saliency_terms() {
        let m = spm();
        let (w, dp) = (900.0, 0.2f64);
        let (s, c) = dp.sin_cos();
        let ex = ff_steady_currents(Dq::new(1.0, 0.0), w, dp, &m).unwrap()
            - ff_steady_currents(Dq::ZERO, w, dp, &m).unwrap();
        let ey = ff_steady_currents(Dq::new(0.0, 1.0), w, dp, &m).unwrap()
            - ff_steady_currents(Dq::ZERO, w, dp, &m).unwrap();
        assert!((ex - Dq::new(c, s)).norm() < 1e-14);
        assert!((ey - Dq::new(-s, c)).norm() < 1e-14);
    }

    #[test]
    fn ff_zero_command_torque_sign() {
        let t = ff_torque_nonsalient(Dq::ZERO, 2000.0, 0.01, &spm()).unwrap();
        assert!(t < 0.0);
        let t = ff_torque_nonsalient(Dq::ZERO, 2000.0, 0.05, &spm()).unwrap();
        let i = ff_steady_currents(Dq::ZERO, 2000.0, 0.05, &spm()).unwrap();
        assert!((t - 1.5 * 3.0 * 7.69e-3 * i.q).abs() < 1e-12 * t.abs());
    }

    #[test]
    fn ff_torque_rejects_salient() {
        assert!(matches!(
            ff_torque_nonsalient(Dq::ZERO, 100.0, 0.1, &ipm()),
            Err(Error::Salient { .. })
        ));
    }

    #[test]
    fn fb_examples() {
        let cmd = Dq::new(0.0, 100.0);
        assert_eq!(fb_steady_currents(cmd, 0.0), cmd);
        let i = fb_steady_currents(cmd, 15f64.to_radians());
        assert!((i.d - 25.882).abs() < 1e-3 && (i.q - 96.593).abs() < 1e-3);

        let t = fb_torque(cmd, 15f64.to_radians(), &spm()).unwrap();
        assert!((t - 3.3426).abs() < 1e-4, "{t}");

        let cmd = Dq::new(-50.0, 100.0);
        let t0 = fb_torque(cmd, 0.0, &ipm()).unwrap();
        assert!((t0 - commanded_torque(cmd, &ipm())).abs() < 1e-12);
    }

    #[test]
    fn zero_current_voltage_example() {
        let mut m = spm();
        m.lambda_m = 7.69e-3;
        assert!((fb_zero_current_voltages(1000.0, 0.0, &m) - Dq::new(0.0, 7.69)).norm() < 1e-12);
        let v = fb_zero_current_voltages(1000.0, 0.1, &m);
        assert!((v.d - 0.7677).abs() < 1e-4 && (v.q - 7.6516).abs() < 1e-4, "{v:?}");
    }

    #[test]
    fn commanded_torque_examples() {
        assert_eq!(commanded_torque(Dq::new(-20.0, 0.0), &ipm()), 0.0);
        assert!((commanded_torque(Dq::new(0.0, 100.0), &spm()) - 3.4605).abs() < 1e-12);
        assert!((commanded_torque(Dq::new(-50.0, 100.0), &ipm()) - 2.117).abs() < 1e-3);
    }

    #[test]
    fn saturation_rejected() {
        let maps = SaturationMaps {
            grid_id: vec![0.0],
            grid_iq: vec![0.0],
            lambda_m_of_iq: vec![7e-3],
            ld_of_idiq: vec![vec![1e-4]],
            lq_of_idiq: vec![vec![1e-4]],
        };
        let m = spm().with_saturation(maps).unwrap();
        assert!(matches!(ff_steady_currents(Dq::ZERO, 1.0, 0.1, &m), Err(Error::Config(_))));
        assert!(matches!(fb_torque(Dq::ZERO, 0.1, &m), Err(Error::Config(_))));
    }

    #[test]
    fn predict_rejects_mismatched_estimates() {
        let mut est = spm();
        est.r *= 1.1;
        let sc = Scenario::new(spm(), ControllerConfig::new(ControlMode::StaticFf, est));
        assert!(predict(&sc, 100.0).is_err());
        let sc = Scenario::new(spm(), ControllerConfig::new(ControlMode::StaticFf, spm()));
        assert!(predict(&sc, 100.0).is_ok());
    }

    #[test]
    fn predicted_feedback_voltage_at_zero_command() {
        let mut sc = Scenario::new(spm(), ControllerConfig::new(ControlMode::Feedback, spm()));
        sc.errors = crate::sensing::PositionErrorModel::uncompensated(0.2, 52.5e-6);
        let w = 800.0;
        let p = predict(&sc, w).unwrap();
        let dp = w * sc.sim.t_p + sc.errors.total_error(w);
        let v = fb_zero_current_voltages(w, dp, &spm());
        assert!((p.vd_cmd.unwrap() - v.d).abs() < 1e-12 && (p.vq_cmd.unwrap() - v.q).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn ff_matches_substitution(
            d in -200.0..200.0f64, q in -200.0..200.0f64, w in -3000.0..3000.0f64,
            dp in -1.0..1.0f64, salient in any::<bool>(),
        ) {
            let m = if salient { ipm() } else { spm() };
            let cmd = Dq::new(d, q);
            let a = ff_steady_currents(cmd, w, dp, &m).unwrap();
            let b = ff_by_substitution(cmd, w, dp, &m);
            prop_assert!((a - b).norm() <= 1e-9 * b.norm().max(1.0), "{:?} vs {:?}", a, b);
        }

        #[test]
        fn fb_is_inverse_of_measurement(d in -300.0..300.0f64, q in -300.0..300.0f64, a in -4.0..4.0f64) {
            let cmd = Dq::new(d, q);
            let seen = estimate_sync_currents(fb_steady_currents(cmd, a), a);
            prop_assert!((seen - cmd).norm() <= 1e-12 * cmd.norm().max(1.0));
        }

        #[test]
        fn fb_torque_equals_machine_torque(d in -200.0..200.0f64, q in -200.0..200.0f64, a in -4.0..4.0f64) {
            for m in [spm(), ipm()] {
                let cmd = Dq::new(d, q);
                let closed = fb_torque(cmd, a, &m).unwrap();
                let direct = torque_const(fb_steady_currents(cmd, a), &m.base());
                prop_assert!((closed - direct).abs() <= 1e-10 * direct.abs().max(1e-3));
            }
        }

        #[test]
        fn outputs_periodic_in_angle(d in -200.0..200.0f64, q in -200.0..200.0f64, w in 0.0..3000.0f64, a in -3.0..3.0f64) {
            let cmd = Dq::new(d, q);
            let m = ipm();
            let tol = |x: f64| 1e-9 * x.abs().max(1.0);
            let i0 = ff_steady_currents(cmd, w, a, &m).unwrap();
            let i1 = ff_steady_currents(cmd, w, a + TAU, &m).unwrap();
            prop_assert!((i0 - i1).norm() <= tol(i0.norm()));
            let f0 = fb_torque(cmd, a, &m).unwrap();
            prop_assert!((f0 - fb_torque(cmd, a + TAU, &m).unwrap()).abs() <= tol(f0));
            let z0 = fb_zero_current_voltages(w, a, &m);
            prop_assert!((z0 - fb_zero_current_voltages(w, a + TAU, &m)).norm() <= tol(z0.norm()));
            let t0 = ff_torque_nonsalient(cmd, w, a, &spm()).unwrap();
            prop_assert!((t0 - ff_torque_nonsalient(cmd, w, a + TAU, &spm()).unwrap()).abs() <= tol(t0));
        }

        #[test]
        fn zero_current_voltage_norm(w in -3000.0..3000.0f64, a in -7.0..7.0f64) {
            let v = fb_zero_current_voltages(w, a, &spm());
            let bemf = w * 7.69e-3;
            prop_assert!((v.norm() - bemf.abs()).abs() <= 1e-12 * bemf.abs().max(1.0));
        }
    }
}
