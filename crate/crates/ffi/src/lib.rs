//! C ABI for the poserr toolkit.
//!
//! Every fallible call returns a [`PoserrStatus`]. On failure the message is
//! kept per thread and can be read with [`poserr_last_error_message`].
//! Scenarios are opaque handles created by `poserr_scenario_new_*` and
//! released with [`poserr_scenario_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use poserr::calibration::{fit_offset_and_delay, CalibrationSample};
use poserr::config::load_config;
use poserr::control::{ControlMode, ControllerConfig};
use poserr::machine::MachineParams;
use poserr::oracle;
use poserr::sensing::PositionErrorModel;
use poserr::simloop::{run_to_steady_state, Scenario, SteadyStateResult};
use poserr::{Dq, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoserrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    NonConvergence = 4,
    InsufficientData = 5,
    Io = 6,
    Panic = 7,
}

/// Control modes accepted by [`poserr_scenario_new_preset`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoserrMode {
    StaticFf = 0,
    DynamicFf = 1,
    Feedback = 2,
}

impl PoserrMode {
    fn from_raw(raw: u32) -> Option<ControlMode> {
        match raw {
            0 => Some(ControlMode::StaticFf),
            1 => Some(ControlMode::DynamicFf),
            2 => Some(ControlMode::Feedback),
            _ => None,
        }
    }
}

/// Opaque scenario handle.
pub struct PoserrScenario {
    inner: Scenario,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PoserrSteadyState {
    pub omega_e: f64,
    pub delta_theta_e: f64,
    pub id: f64,
    pub iq: f64,
    pub id_hat: f64,
    pub iq_hat: f64,
    pub vd_cmd: f64,
    pub vq_cmd: f64,
    pub torque: f64,
    pub peak_voltage: f64,
    pub elapsed: f64,
    pub converged: bool,
    pub voltage_warning: bool,
}

impl From<&SteadyStateResult> for PoserrSteadyState {
    fn from(r: &SteadyStateResult) -> Self {
        Self {
            omega_e: r.omega_e,
            delta_theta_e: r.delta_theta_e,
            id: r.id,
            iq: r.iq,
            id_hat: r.id_hat,
            iq_hat: r.iq_hat,
            vd_cmd: r.vd_cmd,
            vq_cmd: r.vq_cmd,
            torque: r.torque,
            peak_voltage: r.peak_voltage,
            elapsed: r.elapsed,
            converged: r.converged,
            voltage_warning: r.voltage_warning,
        }
    }
}

/// Closed-form prediction. `vd_cmd`/`vq_cmd` are NaN when not available.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PoserrPrediction {
    pub id: f64,
    pub iq: f64,
    pub torque: f64,
    pub vd_cmd: f64,
    pub vq_cmd: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PoserrCalibration {
    /// Sensor offset (rad).
    pub delta_theta0: f64,
    /// Sensing delay (s).
    pub t_d: f64,
    pub residual_rms: f64,
    pub condition_number: f64,
    pub ill_conditioned: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> PoserrStatus {
    match err {
        Error::Config(_) | Error::WrongMode { .. } | Error::Salient { .. } | Error::Parse { .. } => {
            PoserrStatus::InvalidConfig
        }
        Error::NonConvergence { .. } => PoserrStatus::NonConvergence,
        Error::DegenerateSignal | Error::InsufficientExcitation { .. } | Error::UnderDetermined { .. } => {
            PoserrStatus::InsufficientData
        }
        Error::Schema(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => PoserrStatus::Io,
    }
}

fn fail(status: PoserrStatus, msg: impl Into<String>) -> PoserrStatus {
    set_last_error(msg);
    status
}

fn from_error(err: Error) -> PoserrStatus {
    let status = status_of(&err);
    fail(status, err.to_string())
}

/// Runs `f`, turning a panic into [`PoserrStatus::Panic`].
fn guard(f: impl FnOnce() -> PoserrStatus) -> PoserrStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_owned());
            fail(PoserrStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, PoserrStatus> {
    if p.is_null() {
        return Err(fail(PoserrStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(PoserrStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a>(h: *mut PoserrScenario) -> Result<&'a mut Scenario, PoserrStatus> {
    h.as_mut()
        .map(|s| &mut s.inner)
        .ok_or_else(|| fail(PoserrStatus::NullPointer, "scenario handle is null"))
}

fn store(inner: Scenario, out: *mut *mut PoserrScenario) -> PoserrStatus {
    if let Err(e) = inner.validate() {
        return from_error(e);
    }
    // SAFETY: checked non-null by the caller of `store`
    unsafe { *out = Box::into_raw(Box::new(PoserrScenario { inner })) };
    PoserrStatus::Ok
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

/// Static description of a status code. Never null.
#[no_mangle]
pub extern "C" fn poserr_status_str(status: PoserrStatus) -> *const c_char {
    let s: &'static CStr = match status {
        PoserrStatus::Ok => c"ok",
        PoserrStatus::NullPointer => c"null pointer argument",
        PoserrStatus::InvalidArgument => c"invalid argument",
        PoserrStatus::InvalidConfig => c"invalid configuration",
        PoserrStatus::NonConvergence => c"simulation did not converge",
        PoserrStatus::InsufficientData => c"insufficient data",
        PoserrStatus::Io => c"i/o or schema error",
        PoserrStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Message for the last failed call on this thread, or null.
///
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn poserr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn poserr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Electrical angular velocity (rad/s) for a mechanical speed in RPM.
#[no_mangle]
pub extern "C" fn poserr_omega_e_from_rpm(rpm: f64, pole_pairs: u32) -> f64 {
    poserr::omega_e_from_rpm(rpm, pole_pairs)
}

/// Creates a scenario from a built-in machine preset (`"spmsm_9s6p"`,
/// `"ipmsm_9s6p"`) with exact parameter estimates, no position error and a
/// zero current command. `mode` is a [`PoserrMode`] value.
///
/// # Safety
///
/// `preset` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn poserr_scenario_new_preset(
    preset: *const c_char,
    mode: u32,
    out: *mut *mut PoserrScenario,
) -> PoserrStatus {
    guard(|| {
        if out.is_null() {
            return fail(PoserrStatus::NullPointer, "out is null");
        }
        let name = tri!(c_str(preset, "preset"));
        let Some(mode) = PoserrMode::from_raw(mode) else {
            return fail(PoserrStatus::InvalidArgument, format!("unknown mode {mode}"));
        };
        let Some(machine) = MachineParams::preset(name) else {
            return fail(PoserrStatus::InvalidArgument, format!("unknown preset {name:?}"));
        };
        store(Scenario::new(machine.clone(), ControllerConfig::new(mode, machine)), out)
    })
}

/// Creates a scenario from a TOML or JSON scenario file, using its first
/// current command.
///
/// # Safety
///
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn poserr_scenario_from_file(path: *const c_char, out: *mut *mut PoserrScenario) -> PoserrStatus {
    guard(|| {
        if out.is_null() {
            return fail(PoserrStatus::NullPointer, "out is null");
        }
        let path = tri!(c_str(path, "path"));
        let cfg = match load_config(path) {
            Ok(c) => c,
            Err(e) => return from_error(e),
        };
        store(cfg.scenario(cfg.commands[0]), out)
    })
}

/// Releases a scenario. Null is ignored.
///
/// # Safety
///
/// `scenario` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn poserr_scenario_free(scenario: *mut PoserrScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Sets the position error model: offset (rad), delay (s) and their
/// compensation values.
///
/// # Safety
///
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn poserr_scenario_set_errors(
    scenario: *mut PoserrScenario,
    delta_theta0: f64,
    t_d: f64,
    delta_theta0_hat: f64,
    t_d_hat: f64,
) -> PoserrStatus {
    guard(|| {
        let sc = tri!(handle(scenario));
        let model = PositionErrorModel {
            delta_theta0,
            t_d,
            delta_theta0_hat,
            t_d_hat,
        };
        if let Err(e) = model.validate() {
            return from_error(e);
        }
        sc.errors = model;
        PoserrStatus::Ok
    })
}

/// Sets the current command (A).
///
/// # Safety
///
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn poserr_scenario_set_command(scenario: *mut PoserrScenario, id: f64, iq: f64) -> PoserrStatus {
    guard(|| {
        let sc = tri!(handle(scenario));
        if !(id.is_finite() && iq.is_finite()) {
            return fail(PoserrStatus::InvalidArgument, "command must be finite");
        }
        sc.command = Dq::new(id, iq);
        PoserrStatus::Ok
    })
}

/// Sets the PWM period (s), RK4 substeps per period and settle time (s).
///
/// # Safety
///
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn poserr_scenario_set_sim(
    scenario: *mut PoserrScenario,
    t_p: f64,
    substeps: u32,
    settle_time: f64,
) -> PoserrStatus {
    guard(|| {
        let sc = tri!(handle(scenario));
        let mut sim = sc.sim.clone();
        sim.t_p = t_p;
        sim.substeps = substeps;
        sim.settle_time = settle_time;
        if let Err(e) = sim.validate() {
            return from_error(e);
        }
        sc.sim = sim;
        PoserrStatus::Ok
    })
}

/// Simulates one operating point to steady state.
///
/// On [`PoserrStatus::NonConvergence`] `out` still holds the last window,
/// with `converged == false`.
///
/// # Safety
///
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn poserr_run(
    scenario: *const PoserrScenario,
    omega_e: f64,
    out: *mut PoserrSteadyState,
) -> PoserrStatus {
    guard(|| {
        let Some(sc) = scenario.as_ref() else {
            return fail(PoserrStatus::NullPointer, "scenario handle is null");
        };
        let Some(out) = out.as_mut() else {
            return fail(PoserrStatus::NullPointer, "out is null");
        };
        match run_to_steady_state(&sc.inner, omega_e) {
            Ok(r) => {
                *out = (&r).into();
                PoserrStatus::Ok
            }
            Err(Error::NonConvergence { partial, elapsed }) => {
                *out = partial.as_ref().into();
                fail(
                    PoserrStatus::NonConvergence,
                    format!("simulation did not converge within {elapsed} s"),
                )
            }
            Err(e) => from_error(e),
        }
    })
}

/// Closed-form steady-state prediction for the scenario at `omega_e`.
///
/// # Safety
///
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn poserr_predict(
    scenario: *const PoserrScenario,
    omega_e: f64,
    out: *mut PoserrPrediction,
) -> PoserrStatus {
    guard(|| {
        let Some(sc) = scenario.as_ref() else {
            return fail(PoserrStatus::NullPointer, "scenario handle is null");
        };
        let Some(out) = out.as_mut() else {
            return fail(PoserrStatus::NullPointer, "out is null");
        };
        match oracle::predict(&sc.inner, omega_e) {
            Ok(p) => {
                *out = PoserrPrediction {
                    id: p.id,
                    iq: p.iq,
                    torque: p.torque,
                    vd_cmd: p.vd_cmd.unwrap_or(f64::NAN),
                    vq_cmd: p.vq_cmd.unwrap_or(f64::NAN),
                };
                PoserrStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Fits sensor offset and delay to zero-current voltage commands measured
/// under feedback control at `n` speeds.
///
/// # Safety
///
/// `omega_e`, `vd_cmd` and `vq_cmd` must each point to `n` doubles and `out`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn poserr_fit_offset_and_delay(
    omega_e: *const f64,
    vd_cmd: *const f64,
    vq_cmd: *const f64,
    n: usize,
    t_p: f64,
    lambda_m: f64,
    out: *mut PoserrCalibration,
) -> PoserrStatus {
    guard(|| {
        if omega_e.is_null() || vd_cmd.is_null() || vq_cmd.is_null() || out.is_null() {
            return fail(PoserrStatus::NullPointer, "null array or output pointer");
        }
        let w = std::slice::from_raw_parts(omega_e, n);
        let vd = std::slice::from_raw_parts(vd_cmd, n);
        let vq = std::slice::from_raw_parts(vq_cmd, n);
        let samples: Vec<CalibrationSample> = (0..n)
            .map(|i| CalibrationSample {
                omega_e: w[i],
                vd_cmd: vd[i],
                vq_cmd: vq[i],
            })
            .collect();
        match fit_offset_and_delay(&samples, t_p, lambda_m) {
            Ok(r) => {
                *out = PoserrCalibration {
                    delta_theta0: r.delta_theta0_est,
                    t_d: r.t_d_est,
                    residual_rms: r.residual_rms,
                    condition_number: r.condition_number,
                    ill_conditioned: r.ill_conditioned,
                };
                PoserrStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Feedback steady-state currents for command `(id_cmd, iq_cmd)` and
/// position error `delta_theta_e` (rad).
///
/// # Safety
///
/// `id` and `iq` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn poserr_fb_steady_currents(
    id_cmd: f64,
    iq_cmd: f64,
    delta_theta_e: f64,
    id: *mut f64,
    iq: *mut f64,
) -> PoserrStatus {
    guard(|| {
        if id.is_null() || iq.is_null() {
            return fail(PoserrStatus::NullPointer, "output pointer is null");
        }
        let i = oracle::fb_steady_currents(Dq::new(id_cmd, iq_cmd), delta_theta_e);
        *id = i.d;
        *iq = i.q;
        PoserrStatus::Ok
    })
}

/// Machine parameters of a scenario's plant.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PoserrMachine {
    pub r: f64,
    pub ld: f64,
    pub lq: f64,
    pub lambda_m: f64,
    pub pole_pairs: u32,
}

/// Copies the plant parameters of a scenario.
///
/// # Safety
///
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn poserr_scenario_machine(scenario: *const PoserrScenario, out: *mut PoserrMachine) -> PoserrStatus {
    guard(|| {
        let (Some(sc), Some(out)) = (scenario.as_ref(), out.as_mut()) else {
            return fail(PoserrStatus::NullPointer, "null argument");
        };
        let m = &sc.inner.machine;
        *out = PoserrMachine {
            r: m.r,
            ld: m.ld,
            lq: m.lq,
            lambda_m: m.lambda_m,
            pole_pairs: m.pole_pairs,
        };
        PoserrStatus::Ok
    })
}
