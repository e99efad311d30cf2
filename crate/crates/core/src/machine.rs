//! dq-frame PMSM electrical model.
//!
//! Voltage equation in the synchronous frame (zero sequence omitted):
//!
//! ```text
//! vd = R id + Ld did/dt + we Lq iq
//! vq = R iq + Lq diq/dt - we Ld id + we lm
//! Te = 3/2 p (lm + (Lq - Ld) id) iq
//! ```
//!
//! Speed is an exogenous input; there is no mechanical model.

use serde::{Deserialize, Serialize};

use crate::frame::{wrap_2pi, Dq};
use crate::{Error, Result};

/// Electrical parameters of a PMSM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineParams {
    /// Loop resistance seen by the inverter: phase plus switch (ohm).
    pub r: f64,
    /// d-axis inductance (H).
    pub ld: f64,
    /// q-axis inductance (H).
    pub lq: f64,
    /// Permanent-magnet flux linkage (Wb).
    pub lambda_m: f64,
    pub pole_pairs: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation: Option<SaturationMaps>,
}

/// Current-dependent parameter tables.
///
/// `lambda_m_of_iq` is indexed by `grid_iq`; the 2-D inductance tables are
/// row-major with rows along `grid_id` and columns along `grid_iq`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaturationMaps {
    pub grid_id: Vec<f64>,
    pub grid_iq: Vec<f64>,
    pub lambda_m_of_iq: Vec<f64>,
    pub ld_of_idiq: Vec<Vec<f64>>,
    pub lq_of_idiq: Vec<Vec<f64>>,
}

/// Parameters in effect at one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams {
    pub r: f64,
    pub ld: f64,
    pub lq: f64,
    pub lambda_m: f64,
    pub pole_pairs: u32,
}

/// Instantaneous plant state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DriveState {
    /// Electrical position, kept in `[0, 2π)`.
    pub theta_e: f64,
    pub omega_e: f64,
    pub id: f64,
    pub iq: f64,
}

impl DriveState {
    pub fn new(theta_e: f64, omega_e: f64, id: f64, iq: f64) -> Self {
        Self {
            theta_e: wrap_2pi(theta_e),
            omega_e,
            id,
            iq,
        }
    }

    pub fn currents(&self) -> Dq {
        Dq::new(self.id, self.iq)
    }
}

const SALIENCY_REL_TOL: f64 = 1e-12;

impl MachineParams {
    pub fn new(r: f64, ld: f64, lq: f64, lambda_m: f64, pole_pairs: u32) -> Result<Self> {
        let params = Self {
            r,
            ld,
            lq,
            lambda_m,
            pole_pairs,
            saturation: None,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_saturation(mut self, maps: SaturationMaps) -> Result<Self> {
        maps.validate()?;
        self.saturation = Some(maps);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("r", self.r),
            ("ld", self.ld),
            ("lq", self.lq),
            ("lambda_m", self.lambda_m),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("machine.{name} must be positive and finite, got {v}")));
            }
        }
        if self.pole_pairs < 1 {
            return Err(Error::config("machine.pole_pairs must be at least 1"));
        }
        if let Some(maps) = &self.saturation {
            maps.validate()?;
        }
        Ok(())
    }

    pub fn is_salient(&self) -> bool {
        (self.ld - self.lq).abs() > SALIENCY_REL_TOL * self.ld.max(self.lq)
    }

    pub fn has_saturation(&self) -> bool {
        self.saturation.is_some()
    }

    /// Base (unscheduled) parameters.
    pub fn base(&self) -> EffectiveParams {
        EffectiveParams {
            r: self.r,
            ld: self.ld,
            lq: self.lq,
            lambda_m: self.lambda_m,
            pole_pairs: self.pole_pairs,
        }
    }

    /// Scheduled parameters at `(id, iq)`. Assumes the maps were validated.
    pub fn effective(&self, id: f64, iq: f64) -> EffectiveParams {
        let mut eff = self.base();
        if let Some(maps) = &self.saturation {
            eff.lambda_m = maps.lambda_m(iq);
            eff.ld = maps.ld(id, iq);
            eff.lq = maps.lq(id, iq);
        }
        eff
    }

    /// Looks up a built-in preset by name.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "spmsm_9s6p" => Some(Self::spmsm_9s6p()),
            "ipmsm_9s6p" => Some(Self::ipmsm_9s6p()),
            _ => None,
        }
    }

    pub const PRESETS: [&'static str; 2] = ["spmsm_9s6p", "ipmsm_9s6p"];

    /// 9-slot 6-pole surface-magnet machine, constant parameters.
    pub fn spmsm_9s6p() -> Self {
        Self {
            r: 6.92e-3 + 1.80e-3,
            ld: 59.45e-6,
            lq: 59.45e-6,
            lambda_m: 7.69e-3,
            pole_pairs: 3,
            saturation: None,
        }
    }

    /// 9-slot 6-pole interior-magnet machine, constant parameters.
    pub fn ipmsm_9s6p() -> Self {
        Self {
            r: 9.66e-3 + 1.30e-3,
            ld: 102.02e-6,
            lq: 155.52e-6,
            lambda_m: 7.38e-3,
            pole_pairs: 3,
            saturation: None,
        }
    }
}

impl SaturationMaps {
    pub fn validate(&self) -> Result<()> {
        check_grid("grid_id", &self.grid_id)?;
        check_grid("grid_iq", &self.grid_iq)?;
        let (n_id, n_iq) = (self.grid_id.len(), self.grid_iq.len());
        if self.lambda_m_of_iq.len() != n_iq {
            return Err(Error::config(format!(
                "saturation.lambda_m_of_iq has {} entries, grid_iq has {n_iq}",
                self.lambda_m_of_iq.len()
            )));
        }
        check_positive("lambda_m_of_iq", &self.lambda_m_of_iq)?;
        for (name, table) in [("ld_of_idiq", &self.ld_of_idiq), ("lq_of_idiq", &self.lq_of_idiq)] {
            if table.len() != n_id || table.iter().any(|row| row.len() != n_iq) {
                return Err(Error::config(format!(
                    "saturation.{name} must be {n_id} x {n_iq} (grid_id x grid_iq)"
                )));
            }
            for row in table {
                check_positive(name, row)?;
            }
        }
        Ok(())
    }

    pub fn lambda_m(&self, iq: f64) -> f64 {
        let (j, u) = locate(&self.grid_iq, iq);
        lerp(self.lambda_m_of_iq[j], self.lambda_m_of_iq[(j + 1).min(self.grid_iq.len() - 1)], u)
    }

    pub fn ld(&self, id: f64, iq: f64) -> f64 {
        bilinear(&self.grid_id, &self.grid_iq, &self.ld_of_idiq, id, iq)
    }

    pub fn lq(&self, id: f64, iq: f64) -> f64 {
        bilinear(&self.grid_id, &self.grid_iq, &self.lq_of_idiq, id, iq)
    }
}

fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::config(format!("saturation.{name} is empty")));
    }
    if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config(format!("saturation.{name} must be finite and strictly increasing")));
    }
    Ok(())
}

fn check_positive(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::config(format!("saturation.{name} values must be positive")));
    }
    Ok(())
}

/// Lower breakpoint index and fraction towards the next one, clamped to the grid.
fn locate(grid: &[f64], x: f64) -> (usize, f64) {
    let n = grid.len();
    if n == 1 || x <= grid[0] {
        return (0, 0.0);
    }
    if x >= grid[n - 1] {
        return (n - 1, 0.0);
    }
    // first index with grid[i] > x; x is strictly inside so 1 <= i <= n-1
    let i = grid.partition_point(|&g| g <= x);
    let lo = i - 1;
    (lo, (x - grid[lo]) / (grid[i] - grid[lo]))
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

fn bilinear(grid_x: &[f64], grid_y: &[f64], table: &[Vec<f64>], x: f64, y: f64) -> f64 {
    let (i, u) = locate(grid_x, x);
    let (j, v) = locate(grid_y, y);
    let i1 = (i + 1).min(grid_x.len() - 1);
    let j1 = (j + 1).min(grid_y.len() - 1);
    let lo = lerp(table[i][j], table[i][j1], v);
    let hi = lerp(table[i1][j], table[i1][j1], v);
    lerp(lo, hi, u)
}

/// Effective `(R, Ld, Lq, λm)` at `(id, iq)`; `R` is never scheduled.
pub fn evaluate_params(base: &MachineParams, id: f64, iq: f64) -> Result<EffectiveParams> {
    if let Some(maps) = &base.saturation {
        maps.validate()?;
    }
    Ok(base.effective(id, iq))
}

/// Current derivatives `(did/dt, diq/dt)` for applied voltage `v`.
pub fn electrical_derivatives(state: &DriveState, v: Dq, params: &EffectiveParams) -> Dq {
    let w = state.omega_e;
    Dq::new(
        (v.d - params.r * state.id - w * params.lq * state.iq) / params.ld,
        (v.q - params.r * state.iq + w * params.ld * state.id - w * params.lambda_m) / params.lq,
    )
}

/// Steady-state (`s = 0`) currents for constant applied voltage `v`.
pub fn steady_state_currents(v: Dq, omega_e: f64, params: &EffectiveParams) -> Dq {
    let (r, w) = (params.r, omega_e);
    let det = r * r + w * w * params.ld * params.lq;
    let rhs = Dq::new(v.d, v.q - w * params.lambda_m);
    Dq::new(
        (r * rhs.d - w * params.lq * rhs.q) / det,
        (w * params.ld * rhs.d + r * rhs.q) / det,
    )
}

/// Steady-state voltage that holds currents `i` at speed `omega_e`.
pub fn steady_state_voltage(i: Dq, omega_e: f64, params: &EffectiveParams) -> Dq {
    let w = omega_e;
    Dq::new(
        params.r * i.d + w * params.lq * i.q,
        -w * params.ld * i.d + params.r * i.q + w * params.lambda_m,
    )
}

/// Torque from constant parameters.
pub fn torque_const(i: Dq, params: &EffectiveParams) -> f64 {
    1.5 * f64::from(params.pole_pairs) * (params.lambda_m + (params.lq - params.ld) * i.d) * i.q
}

/// Electromagnetic torque using parameters scheduled at the state's currents.
pub fn torque(state: &DriveState, params: &MachineParams) -> f64 {
    torque_const(state.currents(), &params.effective(state.id, state.iq))
}
