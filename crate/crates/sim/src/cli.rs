//! Command-line interface.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pmsm_smo::analysis::{compare_report, scenario_summary, Report, ScenarioSummary};
use pmsm_smo::engine::RunLog;

use crate::config::{ConfigError, ConfigFile};
use crate::output::{report_csv, report_text, sig9, summary_text, write_atomic, write_log_csv};

/// Exit status for a configuration that cannot be read, parsed or validated.
pub const EXIT_CONFIG: u8 = 2;
/// Exit status for a run whose log or metrics violate an invariant.
pub const EXIT_INVARIANT: u8 = 3;
/// Exit status for a numerical fault during integration.
pub const EXIT_SIMULATION: u8 = 4;
/// Exit status for output I/O failures.
pub const EXIT_IO: u8 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "pmsm-smo-sim",
    version,
    about = "Sensorless FOC simulation of a PMSM with a sliding-mode observer",
    after_help = "\
Outputs:
  <out>/<name>.csv          log, one row per logged step, 9 significant digits.
                            Columns: t, i_d, i_q, omega_m, theta_e, u_d_ref, u_q_ref,
                            theta_hat, omega_e_hat, e_alpha_hat, e_beta_hat,
                            omega_m_ref, i_q_ref, load_torque (SI units, angles in rad)
  <out>/<name>.summary.txt  per-event step metrics, load recovery, tracking error
  <out>/report.txt|csv      sweep only: overshoot, settling, steady-state error and
                            speed ripple per value

Exit codes: 0 ok, 2 config error, 3 invariant violation, 4 simulation fault, 5 I/O error"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario/config file (TOML), merged over presets/default.toml.
    #[arg(long)]
    pub config: PathBuf,
    /// Override sim.log_every.
    #[arg(long)]
    pub log_every: Option<usize>,
    /// Write the effective configuration as TOML to PATH, or stdout when no PATH is given.
    #[arg(long, value_name = "PATH", num_args = 0..=1, default_missing_value = "-")]
    pub dump_effective_config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and write its log and summary.
    Run {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run once per value of a parameter and compare the runs.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// One of: speed, k, omega_c, beta, a.
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. 600,800,1000.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the synthesised speed- and current-loop gains.
    PrintGains {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("simulation fault: {0}")]
    Simulation(pmsm_smo::Error),
    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Invariant(_) => EXIT_INVARIANT,
            CliError::Simulation(_) => EXIT_SIMULATION,
            CliError::Io { .. } => EXIT_IO,
        }
    }
}

impl From<pmsm_smo::Error> for CliError {
    fn from(e: pmsm_smo::Error) -> Self {
        match e {
            pmsm_smo::Error::NonFinite { .. } => CliError::Simulation(e),
            other => CliError::Invariant(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Parse arguments, execute, and map failures to exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run { common, out } => {
            let cfg = load(common)?;
            cmd_run(&cfg, &label_of(&common.config), out)
        }
        Command::Sweep {
            common,
            param,
            values,
            out,
        } => {
            let cfg = load(common)?;
            let values = parse_values(values)?;
            let report = cmd_sweep(&cfg, &label_of(&common.config), param, &values, out)?;
            emit(&report_text(&report));
            Ok(())
        }
        Command::PrintGains { common } => {
            let cfg = load(common)?;
            emit(&gains_text(&cfg)?);
            Ok(())
        }
    }
}

/// Write to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn label_of(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("run").to_string()
}

fn load(common: &Common) -> Result<ConfigFile, CliError> {
    let mut cfg = ConfigFile::from_path(&common.config)?;
    if let Some(n) = common.log_every {
        cfg.sim.log_every = n;
        cfg.setup()?;
    }
    if let Some(path) = &common.dump_effective_config {
        let text = cfg.to_toml_string();
        if path.as_os_str() == "-" {
            emit(&text);
        } else {
            write_atomic(path, text.as_bytes()).map_err(|e| io_err(path, e))?;
        }
    }
    Ok(cfg)
}

pub fn parse_values(s: &str) -> Result<Vec<f64>, CliError> {
    let values = s
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse::<f64>()
                .map_err(|e| ConfigError::Other(format!("sweep value `{v}`: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(ConfigError::Other("sweep needs at least one value".into()).into());
    }
    Ok(values)
}

/// Check the structural invariants of a finished log.
pub fn check_log(log: &RunLog, cfg: &ConfigFile) -> Result<(), CliError> {
    let sim = cfg.sim_config();
    let expected = sim.steps() / sim.log_every + 1;
    if log.len() != expected {
        return Err(CliError::Invariant(format!(
            "log has {} records, expected {expected}",
            log.len()
        )));
    }
    if log.records.windows(2).any(|w| w[1].t <= w[0].t) {
        return Err(CliError::Invariant("log time is not strictly increasing".into()));
    }
    Ok(())
}

/// Run one configuration and return its log and summary.
pub fn simulate(cfg: &ConfigFile) -> Result<(RunLog, ScenarioSummary), CliError> {
    let setup = cfg.setup()?;
    let log = setup.run()?;
    check_log(&log, cfg)?;
    let summary = scenario_summary(&log, &setup.scenario, setup.event_window);
    Ok((log, summary))
}

fn write_run(out: &Path, name: &str, log: &RunLog, summary: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let mut csv = Vec::new();
    write_log_csv(log, &mut csv).map_err(|e| io_err(out, e))?;
    let csv_path = out.join(format!("{name}.csv"));
    write_atomic(&csv_path, &csv).map_err(|e| io_err(&csv_path, e))?;
    let txt = out.join(format!("{name}.summary.txt"));
    write_atomic(&txt, summary.as_bytes()).map_err(|e| io_err(&txt, e))
}

pub fn cmd_run(cfg: &ConfigFile, label: &str, out: &Path) -> Result<(), CliError> {
    let (log, summary) = simulate(cfg)?;
    let text = summary_text(label, &log, &summary, cfg.analysis.event_window);
    write_run(out, label, &log, &text)?;
    emit(&text);
    Ok(())
}

/// Run every value in parallel, write per-run outputs and the comparison
/// report, and return the report.
pub fn cmd_sweep(cfg: &ConfigFile, label: &str, param: &str, values: &[f64], out: &Path) -> Result<Report, CliError> {
    if values.is_empty() {
        return Err(ConfigError::Other("sweep needs at least one value".into()).into());
    }
    let configs = values
        .iter()
        .map(|&v| cfg.with_param(param, v))
        .collect::<Result<Vec<_>, _>>()?;
    let names: Vec<String> = values.iter().map(|v| format!("{label}_{param}_{}", sig9(*v))).collect();

    let results: Vec<Result<RunLog, CliError>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .zip(&names)
            .map(|(c, name)| {
                s.spawn(move || {
                    let (log, summary) = simulate(c)?;
                    let text = summary_text(name, &log, &summary, c.analysis.event_window);
                    write_run(out, name, &log, &text)?;
                    Ok(log)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let logs = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let step_time = cfg.scenario.speed.first().map_or(0.0, |e| e.time);
    let labelled: Vec<(&str, &RunLog)> = names.iter().map(String::as_str).zip(&logs).collect();
    let report = if labelled.len() >= 2 {
        compare_report(&labelled, step_time)?
    } else {
        Report::default()
    };
    let text = report_text(&report);
    let csv = report_csv(&report).map_err(|e| io_err(out, e))?;
    let txt_path = out.join("report.txt");
    write_atomic(&txt_path, text.as_bytes()).map_err(|e| io_err(&txt_path, e))?;
    let csv_path = out.join("report.csv");
    write_atomic(&csv_path, csv.as_bytes()).map_err(|e| io_err(&csv_path, e))?;
    Ok(report)
}

pub fn gains_text(cfg: &ConfigFile) -> Result<String, CliError> {
    let s = cfg.speed_design()?;
    let c = cfg.current_design()?;
    Ok(format!(
        "speed loop:\n  beta = {}\n  kp = {}\n  ki = {}\n  xi_a = {}\n\
         current loop:\n  a = {}\n  kp_d = {}\n  ki_d = {}\n  kp_q = {}\n  ki_q = {}\n  decoupling = {:?} ({:?})\n",
        sig9(s.beta),
        sig9(s.kp),
        sig9(s.ki),
        sig9(s.xi_a),
        sig9(c.a),
        sig9(c.kp_d),
        sig9(c.ki_d),
        sig9(c.kp_q),
        sig9(c.ki_q),
        c.decoupling,
        c.decoupling_sign,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_value_list_is_a_config_error() {
        assert_eq!(parse_values("").unwrap_err().exit_code(), EXIT_CONFIG);
        assert_eq!(parse_values("600,x").unwrap_err().exit_code(), EXIT_CONFIG);
        assert_eq!(parse_values("600, 800,1000").unwrap(), vec![600.0, 800.0, 1000.0]);
    }
}
