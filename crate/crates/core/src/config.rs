//! Scenario files.
//!
//! A scenario is a TOML document (or JSON with the same schema when the
//! file ends in `.json`):
//!
//! ```toml
//! name = "spmsm-ff-delay"
//! output = "out/spmsm-ff-delay.csv"
//! commands = [[0.0, 0.0], [0.0, 100.0]]   # (Id*, Iq*) in A
//! speeds_rpm = [500, 1000, 1500]
//!
//! [machine]
//! preset = "spmsm_9s6p"        # any field below overrides the preset
//! # r = 8.72e-3, ld = 59.45e-6, lq = 59.45e-6, lambda_m = 7.69e-3, pole_pairs = 3
//!
//! [errors]
//! offset_deg = 0.0
//! delay_us = 52.5
//! offset_comp_deg = 0.0
//! delay_comp_us = 0.0
//!
//! [controller]
//! mode = "static-ff"            # static-ff | dynamic-ff | feedback
//! tau_f = 1e-3                  # s
//! bandwidth = 2513.2741228718346  # rad/s
//!
//! [sim]
//! t_p = 62.5e-6
//! substeps = 8
//! settle_time = 0.2
//! window = 1
//! supply_voltage = 12.0
//! ```
//!
//! An optional `[estimated]` table, with the same keys as `[machine]`, sets
//! the controller's plant estimate; it defaults to the machine itself.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::{ControlMode, ControllerConfig, DEFAULT_BANDWIDTH, DEFAULT_TAU_F};
use crate::frame::Dq;
use crate::machine::{MachineParams, SaturationMaps};
use crate::sensing::PositionErrorModel;
use crate::simloop::{Scenario, SimConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineSpec {
    pub preset: Option<String>,
    pub r: Option<f64>,
    pub ld: Option<f64>,
    pub lq: Option<f64>,
    pub lambda_m: Option<f64>,
    pub pole_pairs: Option<u32>,
    pub saturation: Option<SaturationMaps>,
}

impl MachineSpec {
    pub fn preset(name: &str) -> Self {
        Self {
            preset: Some(name.to_owned()),
            ..Self::default()
        }
    }

    pub fn resolve(&self, section: &str) -> Result<MachineParams> {
        let base = match &self.preset {
            Some(name) => Some(MachineParams::preset(name).ok_or_else(|| {
                Error::config(format!(
                    "{section}.preset: unknown preset {name:?} (available: {})",
                    MachineParams::PRESETS.join(", ")
                ))
            })?),
            None => None,
        };
        let field = |v: Option<f64>, from_base: Option<f64>, key: &str| {
            v.or(from_base)
                .ok_or_else(|| Error::config(format!("{section}.{key} is required when no preset is given")))
        };
        let params = MachineParams {
            r: field(self.r, base.as_ref().map(|b| b.r), "r")?,
            ld: field(self.ld, base.as_ref().map(|b| b.ld), "ld")?,
            lq: field(self.lq, base.as_ref().map(|b| b.lq), "lq")?,
            lambda_m: field(self.lambda_m, base.as_ref().map(|b| b.lambda_m), "lambda_m")?,
            pole_pairs: self
                .pole_pairs
                .or(base.as_ref().map(|b| b.pole_pairs))
                .ok_or_else(|| Error::config(format!("{section}.pole_pairs is required when no preset is given")))?,
            saturation: self.saturation.clone(),
        };
        params.validate()?;
        Ok(params)
    }
}

/// Position errors in the units used on the command line.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorSpec {
    pub offset_deg: f64,
    pub delay_us: f64,
    pub offset_comp_deg: f64,
    pub delay_comp_us: f64,
}

impl ErrorSpec {
    pub fn to_model(self) -> PositionErrorModel {
        PositionErrorModel {
            delta_theta0: self.offset_deg.to_radians(),
            t_d: self.delay_us * 1e-6,
            delta_theta0_hat: self.offset_comp_deg.to_radians(),
            t_d_hat: self.delay_comp_us * 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSpec {
    pub mode: ControlMode,
    pub tau_f: f64,
    pub bandwidth: f64,
}

impl Default for ControllerSpec {
    fn default() -> Self {
        Self {
            mode: ControlMode::Feedback,
            tau_f: DEFAULT_TAU_F,
            bandwidth: DEFAULT_BANDWIDTH,
        }
    }
}

/// On-disk form of a scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: Option<String>,
    pub output: Option<PathBuf>,
    pub machine: Option<MachineSpec>,
    pub estimated: Option<MachineSpec>,
    #[serde(default)]
    pub errors: ErrorSpec,
    #[serde(default)]
    pub controller: ControllerSpec,
    #[serde(default)]
    pub sim: SimConfig,
    pub commands: Option<Vec<[f64; 2]>>,
    pub speeds_rpm: Option<Vec<f64>>,
}

/// A validated scenario with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub machine: MachineParams,
    pub errors: PositionErrorModel,
    pub error_spec: ErrorSpec,
    pub controller: ControllerConfig,
    pub sim: SimConfig,
    pub commands: Vec<Dq>,
    pub speeds_rpm: Vec<f64>,
    pub output: Option<PathBuf>,
}

impl ScenarioFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let parsed = if is_json {
            serde_json::from_str(text).map_err(|e| e.to_string())
        } else {
            toml::from_str(text).map_err(|e| e.to_string())
        };
        parsed.map_err(|message| Error::Parse {
            path: path.display().to_string(),
            message,
        })
    }

    pub fn resolve(&self) -> Result<ScenarioConfig> {
        let machine = self
            .machine
            .as_ref()
            .ok_or_else(|| Error::config("[machine] section is missing"))?
            .resolve("machine")?;
        let estimated = match &self.estimated {
            Some(spec) => spec.resolve("estimated")?,
            None => machine.clone(),
        };
        let errors = self.errors.to_model();
        errors.validate()?;
        let controller = ControllerConfig {
            mode: self.controller.mode,
            tau_f: self.controller.tau_f,
            bandwidth: self.controller.bandwidth,
            estimated_params: estimated,
        };
        controller.validate()?;
        self.sim.validate()?;

        let commands = self
            .commands
            .as_ref()
            .ok_or_else(|| Error::config("commands list is missing"))?;
        if commands.is_empty() {
            return Err(Error::config("commands list is empty"));
        }
        if commands.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::config("commands must be finite"));
        }
        let speeds_rpm = self
            .speeds_rpm
            .clone()
            .ok_or_else(|| Error::config("speeds_rpm list is missing"))?;
        if speeds_rpm.is_empty() {
            return Err(Error::config("speeds_rpm list is empty"));
        }
        if speeds_rpm.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("speeds_rpm must be finite"));
        }

        Ok(ScenarioConfig {
            name: self.name.clone().unwrap_or_else(|| "scenario".to_owned()),
            machine,
            errors,
            error_spec: self.errors,
            controller,
            sim: self.sim.clone(),
            commands: commands.iter().map(|&[d, q]| Dq::new(d, q)).collect(),
            speeds_rpm,
            output: self.output.clone(),
        })
    }
}

/// Reads, parses and validates a scenario file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    ScenarioFile::parse(&text, path)?.resolve()
}

impl ScenarioConfig {
    pub fn omega_e(&self, rpm: f64) -> f64 {
        crate::omega_e_from_rpm(rpm, self.machine.pole_pairs)
    }

    pub fn scenario(&self, command: Dq) -> Scenario {
        Scenario {
            machine: self.machine.clone(),
            errors: self.errors,
            controller: self.controller.clone(),
            sim: self.sim.clone(),
            command,
        }
    }

    /// Replaces the error model, keeping `error_spec` in sync.
    pub fn set_errors(&mut self, spec: ErrorSpec) -> Result<()> {
        let model = spec.to_model();
        model.validate()?;
        self.errors = model;
        self.error_spec = spec;
        Ok(())
    }

    pub fn set_mode(&mut self, mode: ControlMode) -> Result<()> {
        self.controller.mode = mode;
        self.controller.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ScenarioConfig> {
        ScenarioFile::parse(text, Path::new("test.toml"))?.resolve()
    }

    const MINIMAL: &str = r#"
        commands = [[0.0, 100.0]]
        speeds_rpm = [500, 1000]
        [machine]
        preset = "spmsm_9s6p"
    "#;

    #[test]
    fn presets_resolve() {
        let cfg = parse(MINIMAL).unwrap();
        let m = &cfg.machine;
        assert!((m.r - 8.72e-3).abs() < 1e-15);
        assert_eq!((m.ld, m.lq, m.lambda_m, m.pole_pairs), (59.45e-6, 59.45e-6, 7.69e-3, 3));

        let cfg = parse(&MINIMAL.replace("spmsm", "ipmsm")).unwrap();
        let m = &cfg.machine;
        assert!((m.r - 10.96e-3).abs() < 1e-15);
        assert_eq!((m.ld, m.lq, m.lambda_m, m.pole_pairs), (102.02e-6, 155.52e-6, 7.38e-3, 3));
    }

    #[test]
    fn defaults_filled() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.sim.t_p, 62.5e-6);
        assert_eq!(cfg.sim.substeps, 8);
        assert_eq!(cfg.controller.bandwidth, std::f64::consts::TAU * 400.0);
        assert_eq!(cfg.controller.mode, ControlMode::Feedback);
        assert_eq!(cfg.controller.estimated_params, cfg.machine);
        assert_eq!(cfg.errors, PositionErrorModel::default());
    }

    #[test]
    fn missing_speed_list() {
        let text = MINIMAL.replace("speeds_rpm = [500, 1000]", "");
        let err = parse(&text).unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("speeds_rpm")), "{err}");
    }

    #[test]
    fn unknown_preset() {
        let err = parse(&MINIMAL.replace("spmsm_9s6p", "bogus")).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn parse_error_has_line() {
        let err = parse("commands = [[0.0, 1.0]]\nspeeds_rpm = [1,\n[machine]\n").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Parse { .. }));
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn inline_machine_and_overrides() {
        let text = r#"
            commands = [[0.0, 0.0]]
            speeds_rpm = [100]
            [machine]
            r = 0.01
            ld = 1e-4
            lq = 2e-4
            lambda_m = 5e-3
            pole_pairs = 4
            [estimated]
            preset = "ipmsm_9s6p"
            r = 0.02
            [errors]
            offset_deg = 15
            delay_us = 40
            [controller]
            mode = "dynamic-ff"
        "#;
        let cfg = parse(text).unwrap();
        assert_eq!(cfg.machine.pole_pairs, 4);
        assert_eq!(cfg.controller.estimated_params.r, 0.02);
        assert_eq!(cfg.controller.estimated_params.lq, 155.52e-6);
        assert!((cfg.errors.delta_theta0 - 15f64.to_radians()).abs() < 1e-15);
        assert!((cfg.errors.t_d - 40e-6).abs() < 1e-18);
        assert_eq!(cfg.controller.mode, ControlMode::DynamicFf);

        let partial = text.replace("pole_pairs = 4", "");
        assert!(parse(&partial).unwrap_err().to_string().contains("pole_pairs"));
    }

    #[test]
    fn validation_names_invariant() {
        let err = parse(&format!("{MINIMAL}\n[sim]\nsubsteps = 0\n")).unwrap_err();
        assert!(err.to_string().contains("substeps"));
        let err = parse(&format!("{MINIMAL}\n[errors]\ndelay_us = -3\n")).unwrap_err();
        assert!(err.to_string().contains("t_d"));
        let err = parse(&format!("{MINIMAL}\n[controller]\nbandwidth = 0\n")).unwrap_err();
        assert!(err.to_string().contains("bandwidth"));
    }

    #[test]
    fn json_encoding() {
        let text = r#"{"commands": [[0, 100]], "speeds_rpm": [500],
                       "machine": {"preset": "ipmsm_9s6p"},
                       "controller": {"mode": "static-ff"}}"#;
        let cfg = ScenarioFile::parse(text, Path::new("s.json")).unwrap().resolve().unwrap();
        assert_eq!(cfg.controller.mode, ControlMode::StaticFf);
        assert_eq!(cfg.commands, vec![Dq::new(0.0, 100.0)]);
        assert!(matches!(
            ScenarioFile::parse("{", Path::new("s.json")),
            Err(Error::Parse { .. })
        ));
    }
}
