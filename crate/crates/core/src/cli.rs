//! Command-line front end. `run` parses arguments, executes one command and
//! returns the process exit code.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::audit::{run_audit, AuditOptions};
use crate::diffdrive::CalibOptions;
use crate::error::Error;
use crate::estimation::SolveOptions;
use crate::pipeline::{load_or_simulate, run_ddcalib, run_eskf, run_sam, RunOutput};
use crate::sim::{simulate, write_csv, DiffDriveConfig, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;
pub const EXIT_CONFORMANCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "liekit", version, about = "Lie-group state estimation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON scenario file; defaults are used for anything it omits.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the scenario dimension.
    #[arg(long, global = true, value_parser = clap::builder::PossibleValuesParser::new(["2", "3"]))]
    pub dim: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Simulate,
    /// Error-state Kalman filter.
    Eskf,
    /// Batch smoothing and mapping.
    Sam,
    /// Smoothing and mapping with odometry bias estimation.
    Selfcal,
    /// Differential-drive wheel calibration.
    Ddcalib,
    /// Audit every analytic Jacobian against finite differences.
    Jaccheck {
        /// Negate the named block before comparison (repeatable).
        #[arg(long = "inject-fault")]
        inject_fault: Vec<String>,
        #[arg(long)]
        trials: Option<usize>,
    },
}

/// Maps a library error to its exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::RankDeficient { .. } | Error::NotConverged { .. } | Error::Singular(_) => EXIT_CONVERGENCE,
        _ => EXIT_VALIDATION,
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Invalid(format!("{}: {e}", path.display()))
}

fn load_scenario(cli: &Cli) -> Result<Scenario, Error> {
    let mut sc = match &cli.config {
        Some(p) => Scenario::from_json(&fs::read_to_string(p).map_err(|e| io_err(p, e))?)?,
        None => Scenario::default(),
    };
    if let Some(seed) = cli.seed {
        sc.seed = seed;
    }
    if let Some(d) = &cli.dim {
        sc.dim = d.parse().expect("validated by clap");
    }
    if matches!(cli.command, Command::Ddcalib) && sc.diffdrive.is_none() {
        sc.diffdrive = Some(DiffDriveConfig::default());
    }
    sc.validate()?;
    Ok(sc)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Error> {
    let s = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    fs::write(path, s + "\n").map_err(|e| io_err(path, e))
}

fn write_run(out: &Path, name: &str, mut run: RunOutput) -> Result<i32, Error> {
    write_csv(&out.join(format!("{name}_estimates.csv")), &run.estimates.header, &run.estimates.rows)?;
    for (extra, t) in &run.extra {
        write_csv(&out.join(format!("{name}_{extra}.csv")), &t.header, &t.rows)?;
    }
    run.summary.error = run.failure.as_ref().map(|e| e.to_string());
    write_json(&out.join(format!("{name}_summary.json")), &run.summary)?;
    println!("{}", serde_json::to_string(&run.summary).unwrap_or_default());
    Ok(match &run.failure {
        Some(e) => {
            eprintln!("liekit {name}: {e}");
            exit_code(e)
        }
        None => EXIT_OK,
    })
}

fn execute(cli: &Cli) -> Result<i32, Error> {
    let sc = load_scenario(cli)?;
    fs::create_dir_all(&cli.out).map_err(|e| io_err(&cli.out, e))?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Simulate => {
            let ds = simulate(&sc)?;
            ds.write(out)?;
            Ok(EXIT_OK)
        }
        Command::Eskf => write_run(out, "eskf", run_eskf(&load_or_simulate(&sc)?)?),
        Command::Sam => write_run(out, "sam", run_sam(&load_or_simulate(&sc)?, false, &SolveOptions::default())?),
        Command::Selfcal => write_run(out, "selfcal", run_sam(&load_or_simulate(&sc)?, true, &SolveOptions::default())?),
        Command::Ddcalib => write_run(out, "ddcalib", run_ddcalib(&load_or_simulate(&sc)?, &CalibOptions::default())?),
        Command::Jaccheck { inject_fault, trials } => {
            let mut faults = sc.jaccheck.inject_faults.clone();
            faults.extend(inject_fault.iter().cloned());
            let opts = AuditOptions {
                seed: sc.seed,
                trials: trials.unwrap_or(sc.jaccheck.trials),
                tolerance: sc.jaccheck.tolerance,
                inject_faults: faults,
            };
            if opts.trials == 0 || !(opts.tolerance > 0.0) {
                return Err(Error::Invalid("jaccheck needs trials > 0 and a positive tolerance".into()));
            }
            let rep = run_audit(&opts);
            write_json(&out.join("jaccheck.json"), &rep)?;
            if rep.passed {
                println!("jaccheck: {} blocks passed", rep.blocks.len());
                Ok(EXIT_OK)
            } else {
                eprintln!("jaccheck: failed blocks {:?}", rep.failed);
                Ok(EXIT_CONFORMANCE)
            }
        }
    }
}

/// Runs the command line and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("liekit: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_codes() {
        assert_eq!(exit_code(&Error::Invalid("x".into())), EXIT_VALIDATION);
        assert_eq!(exit_code(&Error::NonFinite("x")), EXIT_VALIDATION);
        assert_eq!(exit_code(&Error::RankDeficient { nullity: 1 }), EXIT_CONVERGENCE);
        assert_eq!(exit_code(&Error::NotConverged { iterations: 3 }), EXIT_CONVERGENCE);
    }

    #[test]
    fn bad_arguments_are_validation_errors() {
        assert_eq!(run(["liekit", "eskf", "--dim", "4"]), EXIT_VALIDATION);
        assert_eq!(run(["liekit", "frobnicate"]), EXIT_VALIDATION);
        assert_eq!(run(["liekit", "eskf", "--config", "/nonexistent/cfg.json"]), EXIT_VALIDATION);
    }
}
