use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use poserr_ffi::*;

fn last_error() -> String {
    let p = poserr_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn new_scenario(preset: &str, mode: PoserrMode) -> *mut PoserrScenario {
    let name = CString::new(preset).unwrap();
    let mut h = ptr::null_mut();
    let status = unsafe { poserr_scenario_new_preset(name.as_ptr(), mode as u32, &mut h) };
    assert_eq!(status, PoserrStatus::Ok);
    assert!(!h.is_null());
    h
}

#[test]
fn feedback_run_matches_prediction() {
    let h = new_scenario("spmsm_9s6p", PoserrMode::Feedback);
    unsafe {
        assert_eq!(poserr_scenario_set_command(h, 0.0, 100.0), PoserrStatus::Ok);
        assert_eq!(
            poserr_scenario_set_errors(h, 15f64.to_radians(), 0.0, 0.0, 0.0),
            PoserrStatus::Ok
        );
        let mut m = PoserrMachine::default();
        assert_eq!(poserr_scenario_machine(h, &mut m), PoserrStatus::Ok);
        assert_eq!(m.pole_pairs, 3);
        let w = poserr_omega_e_from_rpm(1000.0, m.pole_pairs);

        let mut ss = PoserrSteadyState::default();
        assert_eq!(poserr_run(h, w, &mut ss), PoserrStatus::Ok);
        assert!(ss.converged);
        let mut pred = PoserrPrediction::default();
        assert_eq!(poserr_predict(h, w, &mut pred), PoserrStatus::Ok);
        assert!((ss.id - pred.id).abs() < 1.0, "{ss:?} vs {pred:?}");
        assert!((ss.iq - pred.iq).abs() < 1.0);
        assert!((ss.torque - pred.torque).abs() < 0.01);

        let (mut id, mut iq) = (0.0, 0.0);
        assert_eq!(
            poserr_fb_steady_currents(0.0, 100.0, 15f64.to_radians(), &mut id, &mut iq),
            PoserrStatus::Ok
        );
        assert!((id - pred.id).abs() < 1e-12 && (iq - pred.iq).abs() < 1e-12);
        poserr_scenario_free(h);
    }
}

#[test]
fn calibration_over_arrays() {
    let h = new_scenario("ipmsm_9s6p", PoserrMode::Feedback);
    let (offset, t_d, t_p) = (15f64.to_radians(), 40e-6, 62.5e-6);
    let mut w = Vec::new();
    let mut vd = Vec::new();
    let mut vq = Vec::new();
    unsafe {
        assert_eq!(poserr_scenario_set_errors(h, offset, t_d, 0.0, 0.0), PoserrStatus::Ok);
        let mut m = PoserrMachine::default();
        poserr_scenario_machine(h, &mut m);
        for rpm in [1000.0, 2000.0, 3000.0, 4000.0] {
            let omega = poserr_omega_e_from_rpm(rpm, m.pole_pairs);
            let mut ss = PoserrSteadyState::default();
            assert_eq!(poserr_run(h, omega, &mut ss), PoserrStatus::Ok);
            w.push(omega);
            vd.push(ss.vd_cmd);
            vq.push(ss.vq_cmd);
        }
        let mut cal = PoserrCalibration::default();
        let status = poserr_fit_offset_and_delay(w.as_ptr(), vd.as_ptr(), vq.as_ptr(), w.len(), t_p, m.lambda_m, &mut cal);
        assert_eq!(status, PoserrStatus::Ok);
        assert!((cal.delta_theta0 - offset).abs() < 1e-4);
        assert!((cal.t_d - t_d).abs() < 1e-7);

        // a single speed cannot separate offset from delay
        let status = poserr_fit_offset_and_delay(w.as_ptr(), vd.as_ptr(), vq.as_ptr(), 1, t_p, m.lambda_m, &mut cal);
        assert_eq!(status, PoserrStatus::InsufficientData);
        assert!(last_error().contains("under-determined"));
        poserr_scenario_free(h);
    }
}

#[test]
fn error_codes() {
    let mut h = ptr::null_mut();
    let bogus = CString::new("nope").unwrap();
    unsafe {
        assert_eq!(
            poserr_scenario_new_preset(bogus.as_ptr(), PoserrMode::Feedback as u32, &mut h),
            PoserrStatus::InvalidArgument
        );
        assert!(last_error().contains("nope"));
        assert!(h.is_null());

        let spm = CString::new("spmsm_9s6p").unwrap();
        assert_eq!(poserr_scenario_new_preset(spm.as_ptr(), 9, &mut h), PoserrStatus::InvalidArgument);
        assert_eq!(
            poserr_scenario_new_preset(ptr::null(), 0, &mut h),
            PoserrStatus::NullPointer
        );
        assert_eq!(poserr_scenario_set_command(ptr::null_mut(), 0.0, 0.0), PoserrStatus::NullPointer);

        let h = new_scenario("spmsm_9s6p", PoserrMode::StaticFf);
        assert_eq!(poserr_scenario_set_sim(h, -1.0, 8, 0.2), PoserrStatus::InvalidConfig);
        assert_eq!(poserr_scenario_set_command(h, f64::NAN, 0.0), PoserrStatus::InvalidArgument);
        assert_eq!(poserr_scenario_set_errors(h, f64::INFINITY, 0.0, 0.0, 0.0), PoserrStatus::InvalidConfig);

        // a successful call clears the message
        assert_eq!(poserr_scenario_set_command(h, 0.0, 10.0), PoserrStatus::Ok);
        assert!(poserr_last_error_message().is_null());

        let missing = CString::new("/nonexistent/scenario.toml").unwrap();
        let mut g = ptr::null_mut();
        assert_eq!(poserr_scenario_from_file(missing.as_ptr(), &mut g), PoserrStatus::Io);
        poserr_scenario_free(h);
        poserr_scenario_free(ptr::null_mut());
    }
    let s = unsafe { CStr::from_ptr(poserr_status_str(PoserrStatus::NonConvergence)) };
    assert_eq!(s.to_str().unwrap(), "simulation did not converge");
    let v = unsafe { CStr::from_ptr(poserr_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn scenario_from_file() {
    let dir = std::env::temp_dir().join(format!("poserr-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("s.toml");
    std::fs::write(
        &path,
        "commands = [[0.0, 50.0]]\nspeeds_rpm = [1000]\n[machine]\npreset = \"ipmsm_9s6p\"\n[controller]\nmode = \"static-ff\"\n",
    )
    .unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    unsafe {
        assert_eq!(poserr_scenario_from_file(c.as_ptr(), &mut h), PoserrStatus::Ok);
        let mut pred = PoserrPrediction::default();
        assert_eq!(poserr_predict(h, 0.0, &mut pred), PoserrStatus::Ok);
        assert!((pred.iq - 50.0).abs() < 1e-9);
        poserr_scenario_free(h);
    }
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn header_compiles_as_c() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(include.join("poserr.h").exists());
    let Ok(out) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c", "-"])
        .arg("-I")
        .arg(&include)
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .stderr(std::process::Stdio::piped())
        .spawn()
        .and_then(|mut child| {
            use std::io::Write;
            child.stdin.take().unwrap().write_all(
                b"#include \"poserr.h\"\nint main(void) {\n  PoserrScenario *h = 0;\n  PoserrSteadyState s;\n  PoserrStatus st = poserr_scenario_new_preset(\"spmsm_9s6p\", POSERR_MODE_FEEDBACK, &h);\n  st = poserr_run(h, 100.0, &s);\n  poserr_scenario_free(h);\n  return st == POSERR_STATUS_OK ? 0 : 1;\n}\n",
            )?;
            child.wait_with_output()
        })
    else {
        eprintln!("no C compiler found; skipping header check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
