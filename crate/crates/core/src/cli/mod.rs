//! Command-line front end: scenario runs, parameter sweeps, the system
//! registry and the acceptance self-test.
//!
//! Exit codes: 0 success, 1 a hard diagnostic missed its tolerance,
//! 2 configuration error, 3 solver failure.

pub mod report;
pub mod runner;
pub mod scenario;

use crate::error::GflError;
use clap::{Parser, Subcommand};
use report::{to_json, write_csv, ConvergenceTable, Status};
use runner::SweepParam;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DIAGNOSTIC: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}{}: {message}", path.display(), line.map(|l| format!(":{l}")).unwrap_or_default())]
    Parse { path: PathBuf, line: Option<usize>, field: Option<String>, message: String },
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("solver failure ({context}): {source}")]
    Solver { context: String, source: GflError },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver { .. } => EXIT_SOLVER,
            _ => EXIT_CONFIG,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "gfl", version, about = "Minimizing-movement runs and variational diagnostics for gradient systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write trajectory.csv and report.json.
    Run {
        file: PathBuf,
        /// Output directory (overrides `out` in the scenario).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record wall time in the report (breaks bit-identical output).
        #[arg(long)]
        timing: bool,
    },
    /// Rerun a scenario for several values of one parameter.
    Sweep {
        file: PathBuf,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values; fractions such as 1/16 are accepted.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the registered systems.
    ListSystems,
    /// Run the acceptance suite.
    SelfTest,
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Normal output goes to `out`, errors to `err`.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    let pool = match thread_pool() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return e.exit_code();
        }
    };
    let mut buf = Vec::new();
    let result = pool.install(|| dispatch(cli.command, &mut buf));
    let _ = out.write_all(&buf);
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if let CliError::Parse { field: Some(f), .. } = &e {
                let _ = writeln!(err, "  field: {f}");
            }
            e.exit_code()
        }
    }
}

/// Worker pool capped by `GFL_THREADS` when set.
fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("GFL_THREADS") {
        let n: usize = v.trim().parse().ok().filter(|n| *n >= 1).ok_or_else(|| CliError::Validation(format!("GFL_THREADS must be a positive integer, got '{v}'")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Validation(format!("cannot start worker threads: {e}")))
}

fn dispatch(cmd: Command, out: &mut Vec<u8>) -> Result<i32, CliError> {
    match cmd {
        Command::Run { file, out: dir, timing } => run(&file, dir.as_deref(), timing, out),
        Command::Sweep { file, param, values, out: dir } => {
            let values = values.iter().map(|v| parse_value(v)).collect::<Result<Vec<_>, _>>()?;
            sweep(&file, param, &values, dir.as_deref(), out)
        }
        Command::ListSystems => {
            for (id, desc) in crate::model_zoo::list_systems() {
                writeln!(out, "{id:<14}{desc}").map_err(stdout_err)?;
            }
            Ok(EXIT_OK)
        }
        Command::SelfTest => {
            let results = crate::acceptance::run_all();
            for r in &results {
                writeln!(out, "{r}").map_err(stdout_err)?;
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            writeln!(out, "{} of {} criteria passed", results.len() - failed, results.len()).map_err(stdout_err)?;
            Ok(if failed == 0 { EXIT_OK } else { EXIT_DIAGNOSTIC })
        }
    }
}

fn stdout_err(e: std::io::Error) -> CliError {
    CliError::Io { path: PathBuf::from("<stdout>"), source: e }
}

fn parse_value(s: &str) -> Result<f64, CliError> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((a, b)) => a.trim().parse::<f64>().ok().zip(b.trim().parse::<f64>().ok()).map(|(a, b)| a / b),
        None => s.parse::<f64>().ok(),
    };
    v.filter(|x| x.is_finite()).ok_or_else(|| CliError::Validation(format!("cannot read sweep value '{s}'")))
}

fn base_dir(file: &Path) -> PathBuf {
    file.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io { path: dir.to_path_buf(), source: e })
}

/// `run <file>`.
pub fn run(file: &Path, out_dir: Option<&Path>, timing: bool, out: &mut dyn Write) -> Result<i32, CliError> {
    let start = Instant::now();
    let sc = scenario::load(file)?;
    let dir = sc.out_dir(out_dir);
    let prepared = runner::prepare(sc, &base_dir(file))?;
    let (mut report, rows, dim) = runner::run_report(prepared)?;
    if timing {
        report.wall_time_s = Some(start.elapsed().as_secs_f64());
    }
    create_dir(&dir)?;
    if report.trajectory.is_some() {
        let mut csv = Vec::new();
        write_csv(&mut csv, dim, &rows).expect("writing to memory");
        write_file(&dir.join("trajectory.csv"), &csv)?;
    }
    write_file(&dir.join("report.json"), to_json(&report).as_bytes())?;
    let mut text = String::new();
    if let Some(t) = &report.trajectory {
        text += &format!("{}: {} nodes, final energy {}\n", report.scenario.system, t.nodes, report::fmt_float(t.final_energy));
    }
    if let Some(table) = &report.convergence {
        text += &format_table(table);
    }
    for d in &report.diagnostics {
        let status = match d.status {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::Info => "info",
            Status::Skipped => "skipped",
        };
        let detail = match &d.reason {
            Some(r) => r.clone(),
            None => d.values.iter().map(|(k, v)| format!("{k}={v:.3e}")).collect::<Vec<_>>().join(" "),
        };
        text += &format!("  {:<18}{status:<8}{detail}\n", d.name);
    }
    text += &format!("wrote {}\n", dir.display());
    out.write_all(text.as_bytes()).map_err(stdout_err)?;
    Ok(if report.passed { EXIT_OK } else { EXIT_DIAGNOSTIC })
}

/// Plain-text convergence table.
pub fn format_table(t: &ConvergenceTable) -> String {
    let mut s = format!("{:<24}{:<10}{:<26}status\n", t.parameter, "nodes", "error");
    for r in &t.rows {
        let nodes = r.nodes.map(|n| n.to_string()).unwrap_or_else(|| "-".into());
        let err = r.error.map(report::fmt_float).unwrap_or_else(|| "n/a".into());
        s += &format!("{:<24}{nodes:<10}{err:<26}{}\n", report::fmt_float(r.value), r.status);
    }
    s += &format!("fitted order: {}\n", t.order.map(|o| format!("{o:.3}")).unwrap_or_else(|| "n/a".into()));
    s
}

#[derive(Serialize)]
struct SweepReport<'a> {
    scenario: &'a scenario::Scenario,
    table: &'a ConvergenceTable,
}

/// `sweep <file> --param p --values v1,v2,…`.
pub fn sweep(file: &Path, param: SweepParam, values: &[f64], out_dir: Option<&Path>, out: &mut dyn Write) -> Result<i32, CliError> {
    if values.is_empty() {
        return Err(CliError::Validation("no sweep values".into()));
    }
    let sc = scenario::load(file)?;
    let dir = sc.out_dir(out_dir);
    let base = base_dir(file);
    let prepared = runner::prepare(sc.clone(), &base)?;
    let horizon = runner::uniform_horizon(&prepared.partition);
    if param == SweepParam::Tau && horizon.is_none() {
        return Err(CliError::Validation("a τ sweep needs a uniform partition".into()));
    }
    let (table, outcomes) = runner::sweep_runs(&sc, &base, param, values, horizon);
    create_dir(&dir)?;
    let mut csv = String::from("value,nodes,error,status\n");
    for r in &table.rows {
        let nodes = r.nodes.map(|n| n.to_string()).unwrap_or_default();
        let err = r.error.map(report::fmt_float).unwrap_or_default();
        csv += &format!("{},{nodes},{err},{}\n", report::fmt_float(r.value), r.status.replace(',', ";"));
    }
    write_file(&dir.join("sweep.csv"), csv.as_bytes())?;
    write_file(&dir.join("sweep.json"), to_json(&SweepReport { scenario: &sc, table: &table }).as_bytes())?;
    let text = format_table(&table) + &format!("wrote {}\n", dir.display());
    out.write_all(text.as_bytes()).map_err(stdout_err)?;
    Ok(outcomes.iter().map(|o| o.exit).max().unwrap_or(EXIT_OK))
}
