use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use poserr::calibration::{fit_offset_and_delay, CalibrationResult};
use poserr::config::{load_config, ScenarioConfig};
use poserr::control::ControlMode;
use poserr::machine::MachineParams;
use poserr::report::{read_calibration_samples, run_scenario, sidecar_path, write_outputs, RunReport};

#[derive(Parser)]
#[command(name = "poserr", version, about = "Position-sensing error analysis for PMSM current control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and print a table of steady states.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run a scenario and write CSV plus a metadata sidecar.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Also write a gnuplot script next to the CSV.
        #[arg(long)]
        gnuplot: bool,
    },
    /// Extract sensor offset and delay from a zero-current feedback sweep CSV.
    Calibrate {
        csv: PathBuf,
        /// PWM period in µs; defaults to the sidecar's value, else 62.5.
        #[arg(long)]
        tp_us: Option<f64>,
        /// Write the result record as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Built-in machine presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    StaticFf,
    DynamicFf,
    Feedback,
}

impl From<ModeArg> for ControlMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::StaticFf => ControlMode::StaticFf,
            ModeArg::DynamicFf => ControlMode::DynamicFf,
            ModeArg::Feedback => ControlMode::Feedback,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Sensor offset (electrical degrees).
    #[arg(long, allow_negative_numbers = true)]
    offset_deg: Option<f64>,
    /// Sensing delay (µs).
    #[arg(long)]
    delay_us: Option<f64>,
    /// Offset compensation (electrical degrees).
    #[arg(long, allow_negative_numbers = true)]
    offset_comp_deg: Option<f64>,
    /// Delay compensation (µs).
    #[arg(long)]
    delay_comp_us: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Output CSV path (overrides the config's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the sweep.
    #[arg(long)]
    jobs: Option<usize>,
}

impl RunArgs {
    fn apply(&self, cfg: &mut ScenarioConfig) -> poserr::Result<()> {
        let mut spec = cfg.error_spec;
        if let Some(v) = self.offset_deg {
            spec.offset_deg = v;
        }
        if let Some(v) = self.delay_us {
            spec.delay_us = v;
        }
        if let Some(v) = self.offset_comp_deg {
            spec.offset_comp_deg = v;
        }
        if let Some(v) = self.delay_comp_us {
            spec.delay_comp_us = v;
        }
        cfg.set_errors(spec)?;
        if let Some(m) = self.mode {
            cfg.set_mode(m.into())?;
        }
        if let Some(out) = &self.out {
            cfg.output = Some(out.clone());
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> poserr::Result<u8> {
    match cli.command {
        Command::Simulate { config, run } => {
            let (cfg, report) = execute(&config, &run)?;
            print_table(&report);
            if let Some(out) = &run.out {
                write_outputs(&cfg, &report, out, false)?;
            }
            Ok(report.exit_code() as u8)
        }
        Command::Sweep { config, run, gnuplot } => {
            let (cfg, report) = execute(&config, &run)?;
            let out = cfg
                .output
                .clone()
                .ok_or_else(|| poserr::Error::Config("no output path: set `output` or pass --out".into()))?;
            write_outputs(&cfg, &report, &out, gnuplot)?;
            let converged = report.rows.iter().filter(|r| r.point.result.converged).count();
            println!("{}: {converged}/{} points converged -> {}", cfg.name, report.rows.len(), out.display());
            Ok(report.exit_code() as u8)
        }
        Command::Calibrate { csv, tp_us, out } => {
            let (sidecar_tp, lambda_m) = read_sidecar(&csv);
            let t_p = tp_us.map(|us| us * 1e-6).or(sidecar_tp).unwrap_or(62.5e-6);
            let samples = read_calibration_samples(std::fs::File::open(&csv)?)?;
            let result = fit_offset_and_delay(&samples, t_p, lambda_m.unwrap_or(1.0))?;
            let record = CalibrationRecord::new(&result, t_p, samples.len());
            println!("offset      {:.4} deg ({:.6} rad)", record.offset_deg, record.offset_rad);
            println!("delay       {:.3} us", record.delay_us);
            println!("residual    {:.3e} rad rms over {} samples", record.residual_rms, record.samples);
            if result.ill_conditioned {
                eprintln!("warning: ill-conditioned fit (condition number {:.3e})", result.condition_number);
            }
            if let Some(out) = out {
                std::fs::write(out, serde_json::to_string_pretty(&record)? + "\n")?;
            }
            Ok(0)
        }
        Command::Presets { action: PresetAction::List } => {
            for name in MachineParams::PRESETS {
                let m = MachineParams::preset(name).expect("listed preset exists");
                println!(
                    "{name}: R={} ohm, Ld={} H, Lq={} H, lambda_m={} Wb, p={}",
                    m.r, m.ld, m.lq, m.lambda_m, m.pole_pairs
                );
            }
            Ok(0)
        }
    }
}

fn execute(config: &Path, run: &RunArgs) -> poserr::Result<(ScenarioConfig, RunReport)> {
    let mut cfg = load_config(config)?;
    run.apply(&mut cfg)?;
    let report = match run.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| poserr::Error::Config(e.to_string()))?
            .install(|| run_scenario(&cfg))?,
        None => run_scenario(&cfg)?,
    };
    Ok((cfg, report))
}

fn print_table(report: &RunReport) {
    println!(
        "{:>8} {:>9} {:>9} {:>10} {:>10} {:>11} {:>11} {:>5}",
        "rpm", "id_cmd", "iq_cmd", "id", "iq", "torque", "oracle", "conv"
    );
    for row in &report.rows {
        let r = &row.point.result;
        let oracle = row
            .point
            .oracle
            .as_ref()
            .map_or_else(|| "-".to_owned(), |o| format!("{:.5}", o.torque));
        println!(
            "{:>8} {:>9.3} {:>9.3} {:>10.4} {:>10.4} {:>11.5} {:>11} {:>5}",
            row.rpm, row.command.d, row.command.q, r.id, r.iq, r.torque, oracle, r.converged
        );
    }
}

/// PWM period and flux linkage recorded by `sweep`, if a sidecar exists.
fn read_sidecar(csv: &Path) -> (Option<f64>, Option<f64>) {
    let Ok(text) = std::fs::read_to_string(sidecar_path(csv)) else {
        return (None, None);
    };
    let Ok(meta) = serde_json::from_str::<serde_json::Value>(&text) else {
        return (None, None);
    };
    let config = &meta["config"];
    (
        config["sim"]["t_p"].as_f64(),
        config["controller"]["estimated_params"]["lambda_m"].as_f64(),
    )
}

#[derive(Serialize)]
struct CalibrationRecord {
    offset_deg: f64,
    offset_rad: f64,
    delay_us: f64,
    delay_s: f64,
    residual_rms: f64,
    samples: usize,
    t_p: f64,
    condition_number: f64,
    ill_conditioned: bool,
    per_speed_errors: Vec<(f64, f64)>,
}

impl CalibrationRecord {
    fn new(r: &CalibrationResult, t_p: f64, samples: usize) -> Self {
        Self {
            offset_deg: r.delta_theta0_est.to_degrees(),
            offset_rad: r.delta_theta0_est,
            delay_us: r.t_d_est * 1e6,
            delay_s: r.t_d_est,
            residual_rms: r.residual_rms,
            samples,
            t_p,
            condition_number: r.condition_number,
            ill_conditioned: r.ill_conditioned,
            per_speed_errors: r.per_speed_errors.clone(),
        }
    }
}
