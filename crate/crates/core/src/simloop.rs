//! Fixed-step closed-loop simulation.
//!
//! Timing per PWM period `k` of length `Tp`:
//!
//! 1. currents and position are sampled at the start of the period,
//! 2. the controller computes a voltage command from those samples,
//! 3. the inverter applies the command from period `k - 1`, rotated by
//!    `we·Tp + Δθe`, held constant over the period,
//! 4. the plant is integrated with classical RK4 in `substeps` sub-intervals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{Controller, ControllerConfig};
use crate::frame::{wrap_2pi, wrap_pi, Dq, Rotation};
use crate::machine::{electrical_derivatives, torque, DriveState, MachineParams};
use crate::oracle::{self, OraclePrediction};
use crate::sensing::{estimate_sync_currents, measured_position, PositionErrorModel};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// PWM period (s).
    pub t_p: f64,
    /// RK4 sub-intervals per PWM period.
    pub substeps: u32,
    /// Time simulated before the averaging window starts (s).
    pub settle_time: f64,
    /// Averaging window, in electrical periods.
    pub window: f64,
    /// DC supply (V). Runs whose command exceeds the linear SPWM range
    /// (half the supply) are flagged, never clamped.
    pub supply_voltage: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            t_p: 62.5e-6,
            substeps: 8,
            settle_time: 0.2,
            window: 1.0,
            supply_voltage: 12.0,
        }
    }
}

/// Averaging window used when the machine is at standstill (s).
const STANDSTILL_WINDOW: f64 = 10e-3;
const RIPPLE_REL: f64 = 5e-3;
const RIPPLE_ABS: f64 = 1e-3;
const MAX_SETTLE_FACTOR: f64 = 10.0;

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_p.is_finite() && self.t_p > 0.0) {
            return Err(Error::config(format!("sim.t_p must be > 0, got {}", self.t_p)));
        }
        if self.substeps < 1 {
            return Err(Error::config("sim.substeps must be at least 1"));
        }
        if !(self.settle_time.is_finite() && self.settle_time > 0.0) {
            return Err(Error::config(format!("sim.settle_time must be > 0, got {}", self.settle_time)));
        }
        if !(self.window.is_finite() && self.window > 0.0) {
            return Err(Error::config(format!("sim.window must be > 0, got {}", self.window)));
        }
        if !(self.supply_voltage.is_finite() && self.supply_voltage > 0.0) {
            return Err(Error::config("sim.supply_voltage must be > 0"));
        }
        Ok(())
    }

    pub fn voltage_limit(&self) -> f64 {
        0.5 * self.supply_voltage
    }

    fn window_periods(&self, omega_e: f64) -> usize {
        let duration = if omega_e == 0.0 {
            STANDSTILL_WINDOW
        } else {
            self.window * std::f64::consts::TAU / omega_e.abs()
        };
        ((duration / self.t_p).ceil() as usize).max(2)
    }
}

/// Window-averaged steady state at one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateResult {
    pub omega_e: f64,
    pub delta_theta_e: f64,
    pub id: f64,
    pub iq: f64,
    pub id_hat: f64,
    pub iq_hat: f64,
    pub vd_cmd: f64,
    pub vq_cmd: f64,
    pub torque: f64,
    pub converged: bool,
    /// Largest commanded voltage magnitude in the window (V).
    pub peak_voltage: f64,
    pub voltage_warning: bool,
    /// Simulated time when the result was taken (s).
    pub elapsed: f64,
}

impl SteadyStateResult {
    pub fn currents(&self) -> Dq {
        Dq::new(self.id, self.iq)
    }

    pub fn estimated_currents(&self) -> Dq {
        Dq::new(self.id_hat, self.iq_hat)
    }

    pub fn voltage_command(&self) -> Dq {
        Dq::new(self.vd_cmd, self.vq_cmd)
    }
}

/// One-period inverter delay line.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TransportLag {
    pending: Dq,
}

impl TransportLag {
    pub fn pending(&self) -> Dq {
        self.pending
    }
}

/// Voltage applied during the current period: the previous command rotated
/// by `we·Tp + Δθe`. Stores `cmd` for the next period.
pub fn apply_transport_lag(cmd: Dq, omega_e: f64, delta_theta_e: f64, t_p: f64, lag: &mut TransportLag) -> Dq {
    let applied = Rotation::new(omega_e * t_p + delta_theta_e).apply(lag.pending);
    lag.pending = cmd;
    applied
}

/// Everything needed to run one operating point except the speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub machine: MachineParams,
    pub errors: PositionErrorModel,
    pub controller: ControllerConfig,
    pub sim: SimConfig,
    /// Current command `(Id*, Iq*)` (A).
    pub command: Dq,
}

impl Scenario {
    pub fn new(machine: MachineParams, controller: ControllerConfig) -> Self {
        Self {
            machine,
            errors: PositionErrorModel::default(),
            controller,
            sim: SimConfig::default(),
            command: Dq::ZERO,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.machine.validate()?;
        self.errors.validate()?;
        self.controller.validate()?;
        self.sim.validate()?;
        if !self.command.is_finite() {
            return Err(Error::config("command must be finite"));
        }
        Ok(())
    }
}

/// Quantities captured at one sampling instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub time: f64,
    pub currents: Dq,
    pub estimated: Dq,
    pub voltage_cmd: Dq,
    pub applied: Dq,
    pub torque: f64,
}

/// A running closed-loop simulation at constant speed.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    scenario: &'a Scenario,
    controller: Controller,
    lag: TransportLag,
    state: DriveState,
    period: u64,
}

impl<'a> Simulation<'a> {
    pub fn new(scenario: &'a Scenario, omega_e: f64) -> Result<Self> {
        scenario.validate()?;
        if !omega_e.is_finite() {
            return Err(Error::config("omega_e must be finite"));
        }
        Ok(Self {
            scenario,
            controller: Controller::new(scenario.controller.clone())?,
            lag: TransportLag::default(),
            state: DriveState::new(0.0, omega_e, 0.0, 0.0),
            period: 0,
        })
    }

    pub fn state(&self) -> &DriveState {
        &self.state
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn time(&self) -> f64 {
        self.period as f64 * self.scenario.sim.t_p
    }

    /// Runs one PWM period with the scenario's command.
    pub fn step(&mut self) -> Sample {
        self.step_with(self.scenario.command)
    }

    /// Runs one PWM period with an explicit current command.
    pub fn step_with(&mut self, command: Dq) -> Sample {
        let sc = self.scenario;
        let t_p = sc.sim.t_p;
        let w = self.state.omega_e;

        let theta_hat = measured_position(self.state.theta_e, w, &sc.errors);
        let delta = wrap_pi(theta_hat - self.state.theta_e);
        let currents = self.state.currents();
        let estimated = estimate_sync_currents(currents, delta);
        let voltage_cmd = self.controller.step(command, estimated, w, t_p);
        let applied = apply_transport_lag(voltage_cmd, w, delta, t_p, &mut self.lag);
        let sample = Sample {
            time: self.time(),
            currents,
            estimated,
            voltage_cmd,
            applied,
            torque: torque(&self.state, &sc.machine),
        };

        let h = t_p / f64::from(sc.sim.substeps);
        for _ in 0..sc.sim.substeps {
            rk4_substep(&mut self.state, applied, h, &sc.machine);
        }
        self.period += 1;
        self.state.theta_e = wrap_2pi(w * self.period as f64 * t_p);
        sample
    }
}

fn rk4_substep(state: &mut DriveState, v: Dq, h: f64, machine: &MachineParams) {
    let f = |id: f64, iq: f64| {
        let s = DriveState { id, iq, ..*state };
        electrical_derivatives(&s, v, &machine.effective(id, iq))
    };
    let (id, iq) = (state.id, state.iq);
    let k1 = f(id, iq);
    let k2 = f(id + 0.5 * h * k1.d, iq + 0.5 * h * k1.q);
    let k3 = f(id + 0.5 * h * k2.d, iq + 0.5 * h * k2.q);
    let k4 = f(id + h * k3.d, iq + h * k3.q);
    state.id = id + h / 6.0 * (k1.d + 2.0 * k2.d + 2.0 * k3.d + k4.d);
    state.iq = iq + h / 6.0 * (k1.q + 2.0 * k2.q + 2.0 * k3.q + k4.q);
}

#[derive(Default)]
struct WindowStats {
    fields: [Vec<f64>; 7],
    peak_voltage: f64,
}

impl WindowStats {
    fn push(&mut self, s: &Sample) {
        let values = [
            s.currents.d,
            s.currents.q,
            s.estimated.d,
            s.estimated.q,
            s.voltage_cmd.d,
            s.voltage_cmd.q,
            s.torque,
        ];
        for (field, v) in self.fields.iter_mut().zip(values) {
            field.push(v);
        }
        self.peak_voltage = self.peak_voltage.max(s.voltage_cmd.norm());
    }

    fn means(&self) -> [f64; 7] {
        self.fields
            .each_ref()
            .map(|f| f.iter().sum::<f64>() / f.len() as f64)
    }

    fn converged(&self, means: &[f64; 7]) -> bool {
        self.fields.iter().zip(means).all(|(f, mean)| {
            let (lo, hi) = f
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            (hi - lo).is_finite() && hi - lo < (RIPPLE_REL * mean.abs()).max(RIPPLE_ABS)
        })
    }
}

/// Simulates one operating point to steady state.
///
/// After `settle_time`, successive averaging windows are checked for ripple
/// until one converges or `10 × settle_time` has elapsed.
pub fn run_to_steady_state(scenario: &Scenario, omega_e: f64) -> Result<SteadyStateResult> {
    let mut sim = Simulation::new(scenario, omega_e)?;
    let cfg = &scenario.sim;
    let settle_periods = (cfg.settle_time / cfg.t_p).ceil() as u64;
    let limit_periods = (MAX_SETTLE_FACTOR * cfg.settle_time / cfg.t_p).ceil() as u64;
    let window = cfg.window_periods(omega_e);

    for _ in 0..settle_periods {
        sim.step();
    }
    loop {
        let mut stats = WindowStats::default();
        for _ in 0..window {
            stats.push(&sim.step());
        }
        let means = stats.means();
        let converged = stats.converged(&means);
        let result = SteadyStateResult {
            omega_e,
            delta_theta_e: scenario.errors.total_error(omega_e),
            id: means[0],
            iq: means[1],
            id_hat: means[2],
            iq_hat: means[3],
            vd_cmd: means[4],
            vq_cmd: means[5],
            torque: means[6],
            converged,
            peak_voltage: stats.peak_voltage,
            voltage_warning: stats.peak_voltage > cfg.voltage_limit(),
            elapsed: sim.time(),
        };
        if converged {
            return Ok(result);
        }
        if sim.period >= limit_periods || !result.currents().is_finite() {
            return Err(Error::NonConvergence {
                elapsed: result.elapsed,
                partial: Box::new(result),
            });
        }
    }
}

/// One sweep row: the simulated point and the closed-form prediction for it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub omega_e: f64,
    /// Simulated steady state; `converged == false` when the run failed.
    pub result: SteadyStateResult,
    /// Failure description when the run did not converge.
    pub error: Option<String>,
    /// `None` when the scenario is outside the oracle's assumptions.
    pub oracle: Option<OraclePrediction>,
}

/// Runs one independent simulation per speed, in parallel, preserving order.
pub fn sweep(speeds: &[f64], scenario: &Scenario) -> Result<Vec<SweepPoint>> {
    if speeds.is_empty() {
        return Err(Error::config("sweep needs at least one speed"));
    }
    scenario.validate()?;
    Ok(speeds
        .par_iter()
        .map(|&w| {
            let (result, error) = match run_to_steady_state(scenario, w) {
                Ok(r) => (r, None),
                Err(Error::NonConvergence { partial, .. }) => {
                    let msg = format!("did not converge within {} s", partial.elapsed);
                    (*partial, Some(msg))
                }
                Err(e) => unreachable!("scenario validated before the sweep: {e}"),
            };
            SweepPoint {
                omega_e: w,
                result,
                error,
                oracle: oracle::predict(scenario, w).ok(),
            }
        })
        .collect())
}
