//! Sweep execution over a scenario file, CSV and metadata output.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::calibration::CalibrationSample;
use crate::config::ScenarioConfig;
use crate::control::{tune_pi, ControlMode, PiGains};
use crate::frame::Dq;
use crate::simloop::{sweep, SweepPoint};
use crate::{Error, Result};

pub const CSV_COLUMNS: [&str; 16] = [
    "rpm",
    "omega_e_rad_s",
    "id_cmd",
    "iq_cmd",
    "id",
    "iq",
    "id_hat",
    "iq_hat",
    "vd_cmd",
    "vq_cmd",
    "torque_sim",
    "torque_oracle",
    "id_oracle",
    "iq_oracle",
    "delta_theta_e_rad",
    "converged",
];

/// One operating point of a scenario run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub rpm: f64,
    pub command: Dq,
    pub point: SweepPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub rows: Vec<Row>,
}

impl RunReport {
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.point.result.converged)
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_converged() {
            0
        } else {
            2
        }
    }
}

/// Runs every command at every speed. Rows are ordered by command, then speed.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunReport> {
    let speeds: Vec<f64> = cfg.speeds_rpm.iter().map(|&rpm| cfg.omega_e(rpm)).collect();
    let mut rows = Vec::with_capacity(cfg.commands.len() * speeds.len());
    for &command in &cfg.commands {
        let points = sweep(&speeds, &cfg.scenario(command))?;
        rows.extend(cfg.speeds_rpm.iter().zip(points).map(|(&rpm, point)| Row { rpm, command, point }));
    }
    Ok(RunReport { rows })
}

fn num(v: f64) -> String {
    // Display for f64 is the shortest representation that round-trips
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn write_csv<W: Write>(report: &RunReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for row in &report.rows {
        let r = &row.point.result;
        let o = row.point.oracle.as_ref();
        w.write_record([
            num(row.rpm),
            num(row.point.omega_e),
            num(row.command.d),
            num(row.command.q),
            num(r.id),
            num(r.iq),
            num(r.id_hat),
            num(r.iq_hat),
            num(r.vd_cmd),
            num(r.vq_cmd),
            num(r.torque),
            opt(o.map(|o| o.torque)),
            opt(o.map(|o| o.id)),
            opt(o.map(|o| o.iq)),
            num(r.delta_theta_e),
            r.converged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Sidecar written next to every sweep CSV.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: &'a ScenarioConfig,
    pub gains: Option<PiGains>,
    /// No random numbers are drawn; identical configs give identical output.
    pub deterministic: bool,
    pub seed: Option<u64>,
    pub points: usize,
    pub converged: usize,
    pub warnings: Vec<String>,
}

impl<'a> Metadata<'a> {
    pub fn new(config: &'a ScenarioConfig, report: &RunReport) -> Self {
        let gains = match config.controller.mode {
            ControlMode::Feedback => tune_pi(&config.controller).ok(),
            _ => None,
        };
        let mut warnings = Vec::new();
        for row in &report.rows {
            let r = &row.point.result;
            let at = format!("rpm={} cmd=({}, {})", row.rpm, row.command.d, row.command.q);
            if r.voltage_warning {
                warnings.push(format!(
                    "{at}: peak voltage command {:.3} V exceeds linear range {:.3} V (not clamped)",
                    r.peak_voltage,
                    config.sim.voltage_limit()
                ));
            }
            if let Some(e) = &row.point.error {
                warnings.push(format!("{at}: {e}"));
            }
        }
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            config,
            gains,
            deterministic: true,
            seed: None,
            points: report.rows.len(),
            converged: report.rows.iter().filter(|r| r.point.result.converged).count(),
            warnings,
        }
    }
}

/// `out.csv` → `out.meta.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

/// Writes the CSV, its metadata sidecar and optionally a gnuplot script.
pub fn write_outputs(cfg: &ScenarioConfig, report: &RunReport, csv_path: &Path, gnuplot: bool) -> Result<()> {
    if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_csv(report, std::fs::File::create(csv_path)?)?;
    let meta = Metadata::new(cfg, report);
    let mut f = std::fs::File::create(sidecar_path(csv_path))?;
    serde_json::to_writer_pretty(&mut f, &meta)?;
    writeln!(f)?;
    if gnuplot {
        std::fs::write(csv_path.with_extension("gp"), gnuplot_script(csv_path, &cfg.name))?;
    }
    Ok(())
}

pub fn gnuplot_script(csv_path: &Path, title: &str) -> String {
    let file = csv_path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set title '{title}'\n\
         set xlabel 'speed (rpm)'\n\
         set ylabel 'torque (N m)'\n\
         set grid\n\
         plot '{file}' using 1:11 with linespoints title 'simulated', \\\n     \
         '{file}' using 1:12 with lines dashtype 2 title 'closed form'\n"
    )
}

/// Reads zero-current-command rows from a sweep CSV.
///
/// Rows with a nonzero command or `converged == false` are skipped.
pub fn read_calibration_samples<R: Read>(input: R) -> Result<Vec<CalibrationSample>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing required column {name:?}")))
    };
    let (w, vd, vq) = (col("omega_e_rad_s")?, col("vd_cmd")?, col("vq_cmd")?);
    let optional = |name: &str| headers.iter().position(|h| h == name);
    let (idc, iqc, conv) = (optional("id_cmd"), optional("iq_cmd"), optional("converged"));

    let mut samples = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let field = |i: usize| -> Result<f64> {
            let raw = record.get(i).unwrap_or("");
            raw.trim().parse::<f64>().map_err(|_| {
                Error::Schema(format!("row {}: column {:?} is not a number: {raw:?}", line + 2, &headers[i]))
            })
        };
        let zero_cmd = [idc, iqc]
            .into_iter()
            .flatten()
            .map(field)
            .collect::<Result<Vec<_>>>()?
            .iter()
            .all(|&v| v == 0.0);
        let converged = conv.is_none_or(|i| record.get(i).map(str::trim) == Some("true"));
        if zero_cmd && converged {
            samples.push(CalibrationSample {
                omega_e: field(w)?,
                vd_cmd: field(vd)?,
                vq_cmd: field(vq)?,
            });
        }
    }
    Ok(samples)
}
