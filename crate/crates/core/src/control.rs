//! Discrete-time current controllers.
//!
//! Three modes share one configuration type:
//!
//! - static feedforward: inverse steady-state machine model,
//! - dynamic feedforward: static plus `L̂·ŝ(I*)`, with `ŝ = s/(τf s + 1)`
//!   discretized by the Tustin transform,
//! - feedback: per-axis PI on the estimated current error plus a BEMF
//!   feedforward term on the q axis. No decoupling network.

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::frame::Dq;
use crate::machine::{EffectiveParams, MachineParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlMode {
    #[serde(alias = "StaticFF", alias = "static_ff")]
    StaticFf,
    #[serde(alias = "DynamicFF", alias = "dynamic_ff")]
    DynamicFf,
    #[serde(alias = "FeedbackPI", alias = "feedback_pi")]
    Feedback,
}

impl ControlMode {
    pub fn name(self) -> &'static str {
        match self {
            ControlMode::StaticFf => "static-ff",
            ControlMode::DynamicFf => "dynamic-ff",
            ControlMode::Feedback => "feedback",
        }
    }

    pub fn is_feedforward(self) -> bool {
        matches!(self, ControlMode::StaticFf | ControlMode::DynamicFf)
    }
}

impl fmt::Display for ControlMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const DEFAULT_TAU_F: f64 = 1e-3;
pub const DEFAULT_BANDWIDTH: f64 = TAU * 400.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub mode: ControlMode,
    /// Derivative-filter time constant (s), dynamic feedforward only.
    pub tau_f: f64,
    /// Target closed-loop bandwidth (rad/s), feedback only.
    pub bandwidth: f64,
    /// The controller's estimate of the plant.
    pub estimated_params: MachineParams,
}

impl ControllerConfig {
    pub fn new(mode: ControlMode, estimated_params: MachineParams) -> Self {
        Self {
            mode,
            tau_f: DEFAULT_TAU_F,
            bandwidth: DEFAULT_BANDWIDTH,
            estimated_params,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.estimated_params.validate()?;
        if self.mode == ControlMode::DynamicFf && !(self.tau_f.is_finite() && self.tau_f > 0.0) {
            return Err(Error::config(format!("controller.tau_f must be > 0 in dynamic-ff mode, got {}", self.tau_f)));
        }
        if self.mode == ControlMode::Feedback && !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(Error::config(format!(
                "controller.bandwidth must be > 0 in feedback mode, got {}",
                self.bandwidth
            )));
        }
        Ok(())
    }

    fn estimates_at(&self, cmd: Dq) -> EffectiveParams {
        self.estimated_params.effective(cmd.d, cmd.q)
    }
}

/// Controller memory. Zero at simulation start.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControllerState {
    /// PI integrator outputs (V).
    pub integrator: Dq,
    /// Filtered derivative of the current command (A/s).
    pub deriv_filter: Dq,
    /// Previous current command, input memory of the derivative filter.
    pub prev_cmd: Dq,
}

impl ControllerState {
    pub fn is_finite(&self) -> bool {
        self.integrator.is_finite() && self.deriv_filter.is_finite() && self.prev_cmd.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiGains {
    pub kp_d: f64,
    pub ki_d: f64,
    pub kp_q: f64,
    pub ki_q: f64,
}

/// Pole placement against the estimated plant: the PI zero cancels the
/// `R/L` pole so each axis closes as a first-order loop at `bandwidth`.
pub fn tune_pi(cfg: &ControllerConfig) -> Result<PiGains> {
    if cfg.mode != ControlMode::Feedback {
        return Err(wrong_mode("feedback", cfg.mode));
    }
    cfg.validate()?;
    let est = cfg.estimated_params.base();
    let bw = cfg.bandwidth;
    Ok(PiGains {
        kp_d: est.ld * bw,
        ki_d: est.r * bw,
        kp_q: est.lq * bw,
        ki_q: est.r * bw,
    })
}

fn wrong_mode(expected: &'static str, actual: ControlMode) -> Error {
    Error::WrongMode {
        expected,
        actual: actual.name(),
    }
}

fn static_ff(cmd: Dq, omega_e: f64, est: &EffectiveParams) -> Dq {
    Dq::new(
        est.r * cmd.d + omega_e * est.lq * cmd.q,
        -omega_e * est.ld * cmd.d + est.r * cmd.q + omega_e * est.lambda_m,
    )
}

/// One Tustin step of `s/(τf s + 1)`.
fn tustin_derivative(input: f64, prev_input: f64, prev_output: f64, tau_f: f64, dt: f64) -> f64 {
    (2.0 * (input - prev_input) - (dt - 2.0 * tau_f) * prev_output) / (2.0 * tau_f + dt)
}

/// Feedforward voltage command for one controller period.
pub fn feedforward_voltage(
    cmd: Dq,
    omega_e: f64,
    cfg: &ControllerConfig,
    state: &mut ControllerState,
    dt: f64,
) -> Result<Dq> {
    let est = cfg.estimates_at(cmd);
    match cfg.mode {
        ControlMode::StaticFf => Ok(static_ff(cmd, omega_e, &est)),
        ControlMode::DynamicFf => {
            let deriv = Dq::new(
                tustin_derivative(cmd.d, state.prev_cmd.d, state.deriv_filter.d, cfg.tau_f, dt),
                tustin_derivative(cmd.q, state.prev_cmd.q, state.deriv_filter.q, cfg.tau_f, dt),
            );
            state.deriv_filter = deriv;
            state.prev_cmd = cmd;
            Ok(static_ff(cmd, omega_e, &est) + Dq::new(est.ld * deriv.d, est.lq * deriv.q))
        }
        ControlMode::Feedback => Err(wrong_mode("feedforward", cfg.mode)),
    }
}

/// PI feedback voltage command for one controller period.
pub fn feedback_voltage(
    cmd: Dq,
    measured: Dq,
    omega_e: f64,
    cfg: &ControllerConfig,
    state: &mut ControllerState,
    dt: f64,
) -> Result<Dq> {
    let gains = tune_pi(cfg)?;
    Ok(pi_step(&gains, cmd, measured, omega_e, cfg.estimated_params.lambda_m, state, dt))
}

fn pi_step(
    gains: &PiGains,
    cmd: Dq,
    measured: Dq,
    omega_e: f64,
    lambda_m_hat: f64,
    state: &mut ControllerState,
    dt: f64,
) -> Dq {
    let err = cmd - measured;
    // backward Euler: the integrator includes the current error
    state.integrator.d += gains.ki_d * dt * err.d;
    state.integrator.q += gains.ki_q * dt * err.q;
    Dq::new(
        gains.kp_d * err.d + state.integrator.d,
        gains.kp_q * err.q + state.integrator.q + omega_e * lambda_m_hat,
    )
}

/// A configured controller with its own state.
#[derive(Debug, Clone)]
pub struct Controller {
    cfg: ControllerConfig,
    gains: Option<PiGains>,
    state: ControllerState,
}

impl Controller {
    pub fn new(cfg: ControllerConfig) -> Result<Self> {
        cfg.validate()?;
        let gains = match cfg.mode {
            ControlMode::Feedback => Some(tune_pi(&cfg)?),
            _ => None,
        };
        Ok(Self {
            cfg,
            gains,
            state: ControllerState::default(),
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn gains(&self) -> Option<PiGains> {
        self.gains
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    /// Computes the voltage command. `measured` is ignored in feedforward modes.
    pub fn step(&mut self, cmd: Dq, measured: Dq, omega_e: f64, dt: f64) -> Dq {
        match self.gains {
            Some(g) => pi_step(
                &g,
                cmd,
                measured,
                omega_e,
                self.cfg.estimated_params.lambda_m,
                &mut self.state,
                dt,
            ),
            None => feedforward_voltage(cmd, omega_e, &self.cfg, &mut self.state, dt)
                .expect("feedforward mode checked at construction"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DT: f64 = 62.5e-6;

    fn cfg(mode: ControlMode) -> ControllerConfig {
        ControllerConfig::new(mode, MachineParams::spmsm_9s6p())
    }

    #[test]
    fn static_ff_pure_bemf() {
        let mut st = ControllerState::default();
        let v = feedforward_voltage(Dq::ZERO, 500.0, &cfg(ControlMode::StaticFf), &mut st, DT).unwrap();
        assert_eq!(v.d, 0.0);
        assert!((v.q - 3.845).abs() < 1e-12);
    }

    #[test]
    fn static_ff_resistive_at_standstill() {
        let mut st = ControllerState::default();
        let v = feedforward_voltage(Dq::new(0.0, 100.0), 0.0, &cfg(ControlMode::StaticFf), &mut st, DT).unwrap();
        assert_eq!(v.d, 0.0);
        assert!((v.q - 0.872).abs() < 1e-12);
    }

    #[test]
    fn dynamic_ff_settles_to_static() {
        let c = ControllerConfig {
            estimated_params: MachineParams::ipmsm_9s6p(),
            ..cfg(ControlMode::DynamicFf)
        };
        let s = ControllerConfig {
            mode: ControlMode::StaticFf,
            ..c.clone()
        };
        let cmd = Dq::new(-40.0, 75.0);
        let w = 800.0;
        let mut st = ControllerState::default();
        let first = feedforward_voltage(cmd, w, &c, &mut st, DT).unwrap();
        let target = feedforward_voltage(cmd, w, &s, &mut ControllerState::default(), DT).unwrap();
        assert!((first - target).norm() > 1.0, "step should excite the derivative path");
        let steps = (10.0 * c.tau_f / DT).ceil() as usize;
        let mut v = first;
        for _ in 0..steps {
            v = feedforward_voltage(cmd, w, &c, &mut st, DT).unwrap();
        }
        assert!((v - target).norm() < 1e-3 * target.norm(), "{v:?} vs {target:?}");
    }

    #[test]
    fn tustin_tracks_ramp_slope() {
        // a ramp of slope k has filtered derivative k in steady state
        let (tau, k) = (1e-3, 250.0);
        let (mut y, mut prev) = (0.0, 0.0);
        for n in 1..2000 {
            let u = k * n as f64 * DT;
            y = tustin_derivative(u, prev, y, tau, DT);
            prev = u;
        }
        assert!((y - k).abs() < 1e-9);
    }

    #[test]
    fn feedforward_rejects_feedback_mode() {
        let mut st = ControllerState::default();
        let e = feedforward_voltage(Dq::ZERO, 0.0, &cfg(ControlMode::Feedback), &mut st, DT);
        assert!(matches!(e, Err(Error::WrongMode { .. })));
        let e = feedback_voltage(Dq::ZERO, Dq::ZERO, 0.0, &cfg(ControlMode::StaticFf), &mut st, DT);
        assert!(matches!(e, Err(Error::WrongMode { .. })));
    }

    #[test]
    fn feedback_zero_error_outputs() {
        let c = cfg(ControlMode::Feedback);
        let mut st = ControllerState::default();
        let i = Dq::new(3.0, 40.0);
        assert_eq!(feedback_voltage(i, i, 0.0, &c, &mut st, DT).unwrap(), Dq::ZERO);
        let v = feedback_voltage(i, i, 1000.0, &c, &mut st, DT).unwrap();
        assert_eq!(v.d, 0.0);
        assert!((v.q - 7.69).abs() < 1e-12);
    }

    #[test]
    fn feedback_integrates_backward_euler() {
        let c = cfg(ControlMode::Feedback);
        let g = tune_pi(&c).unwrap();
        let mut st = ControllerState::default();
        let v = feedback_voltage(Dq::new(0.0, 1.0), Dq::ZERO, 0.0, &c, &mut st, DT).unwrap();
        assert!((v.q - (g.kp_q + g.ki_q * DT)).abs() < 1e-15);
        assert!((st.integrator.q - g.ki_q * DT).abs() < 1e-18);
    }

    #[test]
    fn pi_gains() {
        let g = tune_pi(&cfg(ControlMode::Feedback)).unwrap();
        assert!((g.kp_q - 0.14942).abs() < 1e-5);
        assert_eq!(g.kp_d, g.kp_q);
        assert!((g.ki_q - 8.72e-3 * DEFAULT_BANDWIDTH).abs() < 1e-12);

        let mut zero = cfg(ControlMode::Feedback);
        zero.bandwidth = 0.0;
        assert!(matches!(tune_pi(&zero), Err(Error::Config(_))));

        let ip = ControllerConfig::new(ControlMode::Feedback, MachineParams::ipmsm_9s6p());
        let g = tune_pi(&ip).unwrap();
        assert_ne!(g.kp_d, g.kp_q);
    }

    #[test]
    fn dynamic_ff_requires_positive_tau() {
        let mut c = cfg(ControlMode::DynamicFf);
        c.tau_f = 0.0;
        assert!(Controller::new(c).is_err());
    }
}
