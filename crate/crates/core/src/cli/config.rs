use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cascade::QuadratureSpec;
use crate::error::{Error, Result};
use crate::io::{self, Format, MatrixRepr};
use crate::optimize::{MinimizeOptions, RemovalOptions};
use crate::simulate::{DeltaSpec, PerturbationSpec};

/// A whole batch: one model, a master seed and an ordered command list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Model file, relative to the config file.
    pub model: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub commands: Vec<Command>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    ParisiEval(ParisiEval),
    Minimize(Minimize),
    RemoveCorrection(RemoveCorrection),
    McFreeEnergy(McFreeEnergy),
    GuerraCheck(GuerraCheck),
    PerturbationStats(PerturbationStats),
    AssCheck(AssCheck),
    HjResidual(HjResidual),
    Enriched(Enriched),
}

pub const COMMANDS: [(&str, &str); 9] = [
    ("parisi-eval", "Parisi functional of a path file"),
    ("minimize", "minimize the Parisi functional over k-level paths"),
    (
        "remove-correction",
        "Hopf-Lax and Hopf formulas for the uncorrected limit",
    ),
    ("mc-free-energy", "corrected free energy by exact enumeration"),
    ("guerra-check", "Guerra interpolation curve and the finite-N bound"),
    (
        "perturbation-stats",
        "self-overlap concentration and Ghirlanda-Guerra gaps",
    ),
    ("ass-check", "cavity difference against A_N"),
    ("hj-residual", "finite-difference Hamilton-Jacobi residual"),
    ("enriched", "enriched variational functional at time t"),
];

impl Command {
    pub fn name(&self) -> &'static str {
        let i = match self {
            Command::ParisiEval(_) => 0,
            Command::Minimize(_) => 1,
            Command::RemoveCorrection(_) => 2,
            Command::McFreeEnergy(_) => 3,
            Command::GuerraCheck(_) => 4,
            Command::PerturbationStats(_) => 5,
            Command::AssCheck(_) => 6,
            Command::HjResidual(_) => 7,
            Command::Enriched(_) => 8,
        };
        COMMANDS[i].0
    }

    pub(crate) fn seed_mut(&mut self) -> &mut Option<u64> {
        match self {
            Command::ParisiEval(c) => &mut c.seed,
            Command::Minimize(c) => &mut c.seed,
            Command::RemoveCorrection(c) => &mut c.seed,
            Command::McFreeEnergy(c) => &mut c.seed,
            Command::GuerraCheck(c) => &mut c.seed,
            Command::PerturbationStats(c) => &mut c.seed,
            Command::AssCheck(c) => &mut c.seed,
            Command::HjResidual(c) => &mut c.seed,
            Command::Enriched(c) => &mut c.seed,
        }
    }
}

/// A single value or a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(usize),
    Many(Vec<usize>),
}

impl OneOrMany {
    pub fn to_vec(&self) -> Vec<usize> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

fn one() -> OneOrMany {
    OneOrMany::One(1)
}

fn six() -> OneOrMany {
    OneOrMany::One(6)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParisiEval {
    pub path: PathBuf,
    #[serde(default)]
    pub tilt: Option<MatrixRepr>,
    #[serde(default)]
    pub quadrature: Option<QuadratureSpec>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Minimize {
    #[serde(default = "one")]
    pub k: OneOrMany,
    #[serde(default)]
    pub tilt: Option<MatrixRepr>,
    #[serde(default)]
    pub quadrature: Option<QuadratureSpec>,
    #[serde(default)]
    pub options: MinimizeOptions,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemovalForm {
    HopfLax,
    Hopf,
    #[default]
    Both,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoveCorrection {
    #[serde(default)]
    pub form: RemovalForm,
    #[serde(default)]
    pub quadrature: Option<QuadratureSpec>,
    #[serde(default)]
    pub options: RemovalOptions,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn reps_default() -> usize {
    500
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McFreeEnergy {
    #[serde(default = "six")]
    pub n: OneOrMany,
    #[serde(default = "reps_default")]
    pub reps: usize,
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub x: Option<MatrixRepr>,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn r_grid_default() -> Vec<f64> {
    vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
}

fn branching_default() -> usize {
    256
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuerraCheck {
    #[serde(default = "six")]
    pub n: OneOrMany,
    #[serde(default = "reps_default")]
    pub reps: usize,
    #[serde(default = "r_grid_default")]
    pub r_grid: Vec<f64>,
    /// Path file; when absent the `k`-level minimizer is used.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default = "one_usize")]
    pub k: usize,
    #[serde(default = "branching_default")]
    pub branching: usize,
    #[serde(default)]
    pub quadrature: Option<QuadratureSpec>,
    /// Fail the run unless the curve is nonincreasing and `F_N <= P(pi)`,
    /// both within three standard errors.
    #[serde(default)]
    pub required: bool,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn one_usize() -> usize {
    1
}

fn cap_default() -> u32 {
    PerturbationSpec::DEFAULT_CAP
}

fn exponent_default() -> f64 {
    PerturbationSpec::DEFAULT_EXPONENT
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationStats {
    #[serde(default = "six")]
    pub n: OneOrMany,
    #[serde(default = "x_draws_default")]
    pub x_draws: usize,
    #[serde(default = "reps_default")]
    pub reps: usize,
    #[serde(default = "replicas_default")]
    pub n_replicas: usize,
    #[serde(default = "cap_default")]
    pub cap: u32,
    #[serde(default = "exponent_default")]
    pub exponent: f64,
    #[serde(default)]
    pub deltas: Vec<DeltaSpec>,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn x_draws_default() -> usize {
    4
}

fn replicas_default() -> usize {
    50
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssCheck {
    #[serde(default = "six")]
    pub n: OneOrMany,
    #[serde(default = "reps_default")]
    pub reps: usize,
    /// Draw `x` uniformly on `[1, 2]`; otherwise the perturbation is off.
    #[serde(default)]
    pub perturbed: bool,
    #[serde(default = "cap_default")]
    pub cap: u32,
    #[serde(default = "exponent_default")]
    pub exponent: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HjPoint {
    pub t: f64,
    #[serde(default)]
    pub x: Option<MatrixRepr>,
}

fn fd_step_default() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HjResidual {
    #[serde(default = "six")]
    pub n: OneOrMany,
    pub points: Vec<HjPoint>,
    #[serde(default = "fd_step_default")]
    pub fd_step: f64,
    #[serde(default = "reps_default")]
    pub reps: usize,
    /// Fail the run on a `fail` verdict.
    #[serde(default)]
    pub required: bool,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Enriched {
    pub t: f64,
    /// Path file for `mu`.
    pub mu: PathBuf,
    #[serde(default = "one_usize")]
    pub k: usize,
    #[serde(default)]
    pub quadrature: Option<QuadratureSpec>,
    #[serde(default)]
    pub options: MinimizeOptions,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Parses a config and resolves file paths against its directory.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = io::read_to_string(path)?;
    let file = path.display().to_string();
    let mut cfg = parse_config(&text, Format::from_path(path), &file)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let resolve = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    resolve(&mut cfg.model);
    for c in &mut cfg.commands {
        match c {
            Command::ParisiEval(c) => resolve(&mut c.path),
            Command::GuerraCheck(c) => {
                if let Some(p) = c.path.as_mut() {
                    resolve(p)
                }
            }
            Command::Enriched(c) => resolve(&mut c.mu),
            _ => {}
        }
    }
    Ok(cfg)
}

pub fn parse_config(text: &str, format: Format, file: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = io::deserialize(text, format, file)?;
    if cfg.commands.is_empty() {
        return Err(Error::Parse {
            file: file.to_string(),
            line: io::locate(text, "commands", None),
            message: "no commands".into(),
        });
    }
    for (i, c) in cfg.commands.iter().enumerate() {
        if let Err(e) = validate(c) {
            return Err(Error::Parse {
                file: file.to_string(),
                line: io::locate(text, "commands", Some(i)),
                message: format!("command {} ({}): {e}", i + 1, c.name()),
            });
        }
    }
    Ok(cfg)
}

fn validate(c: &Command) -> Result<()> {
    let bad = |msg: &str| Err(Error::InvalidArgument(msg.into()));
    let ns_ok = |n: &OneOrMany| !n.to_vec().is_empty() && n.to_vec().iter().all(|&v| v > 0);
    match c {
        Command::ParisiEval(c) => c.quadrature.map_or(Ok(()), |q| q.validate()),
        Command::Minimize(c) => {
            if c.k.to_vec().contains(&0) || c.k.to_vec().is_empty() {
                return bad("k must be a positive integer or a nonempty list of them");
            }
            c.quadrature.map_or(Ok(()), |q| q.validate())
        }
        Command::RemoveCorrection(c) => {
            if c.options.k == 0 {
                return bad("options.k must be positive");
            }
            c.quadrature.map_or(Ok(()), |q| q.validate())
        }
        Command::McFreeEnergy(c) if !ns_ok(&c.n) || c.reps == 0 => bad("n and reps must be positive"),
        Command::GuerraCheck(c) => {
            if !ns_ok(&c.n) || c.reps < 2 || c.k == 0 {
                return bad("n and k must be positive and reps at least 2");
            }
            if c.r_grid.is_empty() || c.r_grid.iter().any(|r| !(0.0..=1.0).contains(r)) {
                return bad("r_grid must be a nonempty list in [0, 1]");
            }
            if c.branching < 16 {
                return bad("branching must be at least 16");
            }
            Ok(())
        }
        Command::PerturbationStats(c) if !ns_ok(&c.n) || c.reps < 2 || c.x_draws == 0 => {
            bad("n and x_draws must be positive and reps at least 2")
        }
        Command::AssCheck(c) if !ns_ok(&c.n) || c.reps < 2 => bad("n must be positive and reps at least 2"),
        Command::HjResidual(c) => {
            if !ns_ok(&c.n) || c.reps < 2 || c.points.is_empty() {
                return bad("n must be positive, reps at least 2, and points nonempty");
            }
            if c.points.iter().any(|p| !(p.t > 2.0 * c.fd_step) || !(c.fd_step > 0.0)) {
                return bad("every point needs t > 2 fd_step > 0");
            }
            Ok(())
        }
        Command::Enriched(c) if !(c.t >= 0.0) || c.k == 0 => bad("t must be nonnegative and k positive"),
        _ => Ok(()),
    }
}
