use poserr::calibration::ff_position_error;
use poserr::control::{ControlMode, ControllerConfig};
use poserr::machine::MachineParams;
use poserr::sensing::PositionErrorModel;
use poserr::simloop::{sweep, Scenario};
use poserr::{omega_e_from_rpm, Dq};

#[test]
fn recovers_offset_from_feedforward_run() {
    for m in [MachineParams::spmsm_9s6p(), MachineParams::ipmsm_9s6p()] {
        for deg in [-15.0f64, 5.0, 15.0] {
            let mut sc = Scenario::new(m.clone(), ControllerConfig::new(ControlMode::StaticFf, m.clone()));
            sc.errors = PositionErrorModel::uncompensated(deg.to_radians(), 0.0);
            sc.command = Dq::new(-20.0, 80.0);
            let speeds: Vec<f64> = [500.0, 1500.0, 3000.0].iter().map(|&n| omega_e_from_rpm(n, 3)).collect();
            for p in sweep(&speeds, &sc).unwrap() {
                let r = &p.result;
                assert!(r.converged);
                let est = ff_position_error(r.estimated_currents(), r.voltage_command(), p.omega_e, sc.sim.t_p, &m).unwrap();
                assert!(
                    (est.to_degrees() - deg).abs() < 1e-3,
                    "{deg} deg at {} rad/s: got {}",
                    p.omega_e,
                    est.to_degrees()
                );
            }
        }
    }
}
