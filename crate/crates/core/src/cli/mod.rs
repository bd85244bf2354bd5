//! Batch runner.
//!
//! A config file names a model file and an ordered list of commands. Each
//! command appends rows to `results.csv`; the run also writes
//! `manifest.json` (resolved config, version, wall time) and `summary.txt`.
//!
//! Exit codes: 0 success, 1 a required check failed, 2 configuration or
//! input error (including an empty command list), 3 numerical abort.

mod config;
mod exec;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use rand::Rng;
use serde::Serialize;

pub use config::{
    load_config, parse_config, AssCheck, Command, Enriched, ExperimentConfig, GuerraCheck, HjPoint, HjResidual,
    McFreeEnergy, Minimize, OneOrMany, ParisiEval, PerturbationStats, RemovalForm, RemoveCorrection, COMMANDS,
};

use crate::error::{Error, Result};
use crate::substream;

#[derive(Debug, Parser)]
#[command(
    name = "vecspin",
    version,
    about = "Parisi functionals and finite-N checks for vector spin glasses"
)]
pub struct Args {
    /// Experiment config (TOML or JSON).
    #[arg(long, required_unless_present = "list_commands")]
    pub config: Option<PathBuf>,
    /// Replaces the master seed of the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (overrides the config's `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the available commands and exit.
    #[arg(long)]
    pub list_commands: bool,
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub command: String,
    pub quantity: String,
    pub params: String,
    pub mean: f64,
    pub stderr: f64,
    pub reps: usize,
    pub seed: u64,
}

/// A hard assertion evaluated by a command.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub command: String,
    pub description: String,
    pub passed: bool,
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub rows: Vec<Row>,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config_file: String,
    config: &'a ExperimentConfig,
    wall_time_seconds: f64,
    exit_code: i32,
    error: Option<String>,
    checks: &'a [Check],
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numerical { .. } | Error::OrderViolation { .. } => 3,
        _ => 2,
    }
}

/// Fills every missing command seed from the master seed.
pub fn resolve_seeds(cfg: &mut ExperimentConfig) {
    let master = cfg.seed;
    for (i, c) in cfg.commands.iter_mut().enumerate() {
        let s = c.seed_mut();
        if s.is_none() {
            *s = Some(substream(master, i as u64).random());
        }
    }
}

/// Runs every command in order, stopping at the first error.
pub fn run_commands(cfg: &ExperimentConfig) -> (Outcome, Option<Error>) {
    let mut out = Outcome::default();
    let model = match crate::io::load_model(&cfg.model) {
        Ok(m) => m,
        Err(e) => return (out, Some(e)),
    };
    for c in &cfg.commands {
        if let Err(e) = exec::run(c, &model, &mut out) {
            return (out, Some(e));
        }
    }
    (out, None)
}

pub fn write_csv(path: &Path, rows: &[Row]) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(e.into()))?;
    if rows.is_empty() {
        w.write_record(["command", "quantity", "params", "mean", "stderr", "reps", "seed"])
            .map_err(|e| io_err(e.into()))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| io_err(e.into()))?;
    }
    w.flush().map_err(io_err)
}

fn summary(rows: &[Row], checks: &[Check], error: Option<&Error>) -> String {
    let mut s = String::new();
    for r in rows {
        let params = if r.params.is_empty() {
            String::new()
        } else {
            format!(" [{}]", r.params)
        };
        if r.stderr > 0.0 {
            s.push_str(&format!(
                "{} {}{}: {:.6} +- {:.2e}\n",
                r.command, r.quantity, params, r.mean, r.stderr
            ));
        } else {
            s.push_str(&format!("{} {}{}: {:.8}\n", r.command, r.quantity, params, r.mean));
        }
    }
    for c in checks {
        s.push_str(&format!(
            "check {} {}: {}\n",
            c.command,
            c.description,
            if c.passed { "pass" } else { "FAIL" }
        ));
    }
    if let Some(e) = error {
        s.push_str(&format!("error: {e}\n"));
    }
    s
}

/// Entry point with explicit arguments; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if args.list_commands {
        for (name, about) in COMMANDS {
            println!("{name:<20} {about}");
        }
        return 0;
    }
    let config_path = args.config.expect("clap enforces --config");
    let start = Instant::now();
    let mut cfg = match load_config(&config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    resolve_seeds(&mut cfg);
    let out_dir = args
        .out
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("vecspin-out"));
    if let Err(e) = fs::create_dir_all(&out_dir) {
        eprintln!("error: cannot create {}: {e}", out_dir.display());
        return 2;
    }

    let (outcome, error) = run_commands(&cfg);
    let code = match &error {
        Some(e) => exit_code(e),
        None if !outcome.passed() => 1,
        None => 0,
    };
    if let Some(e) = &error {
        eprintln!("error: {e}");
    }
    let manifest = Manifest {
        tool: "vecspin",
        version: env!("CARGO_PKG_VERSION"),
        config_file: config_path.display().to_string(),
        config: &cfg,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        exit_code: code,
        error: error.as_ref().map(|e| e.to_string()),
        checks: &outcome.checks,
    };
    let text = summary(&outcome.rows, &outcome.checks, error.as_ref());
    let written = write_csv(&out_dir.join("results.csv"), &outcome.rows).and_then(|_| {
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for (name, body) in [("manifest.json", json), ("summary.txt", text.clone())] {
            let p = out_dir.join(name);
            fs::write(&p, body).map_err(|source| Error::Io {
                path: p.display().to_string(),
                source,
            })?;
        }
        Ok(())
    });
    if let Err(e) = written {
        eprintln!("error: {e}");
        return 2;
    }
    print!("{text}");
    code
}

pub fn main() -> i32 {
    main_with_args(std::env::args_os())
}
