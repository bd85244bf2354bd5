//! Minimization of the Parisi functional over step paths and the two
//! variational formulas that add the self-overlap correction back.
//!
//! Everything is derivative free: paths are encoded by [`PathParams`] and
//! searched with [`nelder_mead`] from several seeded starts.

mod nelder_mead;
mod params;

pub use nelder_mead::{nelder_mead, NelderMeadOptions, NelderMeadResult};
pub use params::PathParams;

use serde::{Deserialize, Serialize};

use crate::cascade::{map_indices, parisi_functional, ParisiPath, QuadratureSpec};
use crate::cone::{gram_from_lower, lower_from_psd, sym_dim, SymMatrix};
use crate::error::{Error, Result};
use crate::model::{ConjugateOptions, ModelXi, SpinMeasure};
use crate::substream;

/// Hull distance below which `pi(1)` counts as a member of `conv{tau tau^T}`.
pub const HULL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinimizeOptions {
    pub multistarts: usize,
    pub seed: u64,
    /// Penalize `tr q_k` above the largest `|tau|^2`.
    pub kappa_cap: bool,
    /// Typical trace of `q_k` at random starts.
    pub start_scale: f64,
    pub nelder_mead: NelderMeadOptions,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            multistarts: 8,
            seed: 0,
            kappa_cap: false,
            start_scale: 0.5,
            nelder_mead: NelderMeadOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimizeResult {
    /// `P(path, tilt)` re-evaluated at the returned path (no penalty).
    pub value: f64,
    pub path: ParisiPath,
    pub evaluations: usize,
    pub converged: bool,
    pub history: Vec<f64>,
    /// Index of the winning start.
    pub start: usize,
    /// Distance from `pi(1)` to `conv{tau tau^T}`.
    pub hull_distance: f64,
}

impl MinimizeResult {
    pub fn in_hull(&self) -> bool {
        self.hull_distance <= HULL_TOL
    }
}

struct MultistartOutcome {
    start: usize,
    best: NelderMeadResult,
    evaluations: usize,
}

/// Runs Nelder-Mead from every start (in parallel when enabled) and keeps
/// the lowest value, ties broken by start index.
fn multistart<F>(objective: &F, starts: &[Vec<f64>], nm: &NelderMeadOptions) -> MultistartOutcome
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let runs = map_indices(starts.len(), |i| nelder_mead(objective, &starts[i], nm));
    let evaluations = runs.iter().map(|r| r.evaluations).sum();
    let (start, best) = runs
        .into_iter()
        .enumerate()
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)))
        .expect("at least one start");
    MultistartOutcome {
        start,
        best,
        evaluations,
    }
}

fn starts_for(pp: &PathParams, opts: &MinimizeOptions, warm: Option<&ParisiPath>) -> Result<Vec<Vec<f64>>> {
    let n = opts.multistarts.max(1);
    let mut starts: Vec<Vec<f64>> = (0..n)
        .map(|i| pp.random(&mut substream(opts.seed, i as u64), opts.start_scale))
        .collect();
    if let Some(w) = warm {
        starts[0] = pp.encode(w)?;
    }
    Ok(starts)
}

/// `inf` of `P(pi, tilt)` over `k`-level paths.
pub fn minimize_parisi(
    m: &ModelXi,
    p1: &SpinMeasure,
    k: usize,
    tilt: &SymMatrix,
    quad: &QuadratureSpec,
    opts: &MinimizeOptions,
) -> Result<MinimizeResult> {
    minimize_parisi_from(m, p1, k, tilt, quad, opts, None)
}

/// As [`minimize_parisi`], with start 0 replaced by a `k`-level warm start.
pub fn minimize_parisi_from(
    m: &ModelXi,
    p1: &SpinMeasure,
    k: usize,
    tilt: &SymMatrix,
    quad: &QuadratureSpec,
    opts: &MinimizeOptions,
    warm: Option<&ParisiPath>,
) -> Result<MinimizeResult> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if let Some(w) = warm {
        if w.k() != k {
            return Err(Error::InvalidArgument(format!(
                "warm start has {} levels, expected {k}",
                w.k()
            )));
        }
    }
    let pp = PathParams::new(k, m.dim());
    let starts = starts_for(&pp, opts, warm)?;
    // Surface configuration errors (dimension mismatch, bad quadrature) once.
    let p0 = parisi_functional(m, p1, &pp.decode(&starts[0])?, tilt, quad)?;
    let cap = p1.max_trace();
    let weight = 1e3 * p0.abs().max(1.0);
    let objective = |raw: &[f64]| -> f64 {
        let Ok(path) = pp.decode(raw) else {
            return f64::INFINITY;
        };
        let v = parisi_functional(m, p1, &path, tilt, quad).unwrap_or(f64::INFINITY);
        if opts.kappa_cap {
            v + weight * (path.last().trace() - cap).max(0.0).powi(2)
        } else {
            v
        }
    };
    let out = multistart(&objective, &starts, &opts.nelder_mead);
    let path = pp.decode(&out.best.x)?;
    let value = parisi_functional(m, p1, &path, tilt, quad)?;
    let hull_distance = p1.hull_distance(path.last());
    Ok(MinimizeResult {
        value,
        evaluations: out.evaluations,
        converged: out.best.converged,
        history: out.best.history,
        start: out.start,
        hull_distance,
        path,
    })
}

/// Minimizes for each `k` in increasing order, warm-starting `k + 1` from
/// the `k` optimum with its last level split in two.
pub fn minimize_ladder(
    m: &ModelXi,
    p1: &SpinMeasure,
    ks: &[usize],
    tilt: &SymMatrix,
    quad: &QuadratureSpec,
    opts: &MinimizeOptions,
) -> Result<Vec<MinimizeResult>> {
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let mut out: Vec<MinimizeResult> = Vec::with_capacity(ks.len());
    for &k in &ks {
        let warm = match out.last() {
            Some(prev) => {
                let mut w = prev.path.clone();
                while w.k() < k {
                    let bp = w.breakpoints();
                    let s = 0.5 * (bp[w.k() - 1] + 1.0);
                    w = w.refine(s)?;
                }
                Some(w)
            }
            None => None,
        };
        out.push(minimize_parisi_from(m, p1, k, tilt, quad, opts, warm.as_ref())?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemovalOptions {
    pub k: usize,
    /// Inner minimization over paths (and over `y` for the Hopf form).
    pub inner: MinimizeOptions,
    /// Outer maximization.
    pub outer: NelderMeadOptions,
    /// Trace bound on `z` in the Hopf form; default `2 max |tau|^2`.
    pub z_box: Option<f64>,
    /// Trace bound on `y` in the Hopf form; default `10 (1 + xi(z_box I))`.
    pub y_box: Option<f64>,
}

impl Default for RemovalOptions {
    fn default() -> Self {
        RemovalOptions {
            k: 1,
            inner: MinimizeOptions {
                multistarts: 2,
                ..Default::default()
            },
            outer: NelderMeadOptions {
                max_evals: 400,
                ftol: 1e-10,
                xtol: 1e-6,
                initial_step: 0.2,
                restarts: 1,
            },
            z_box: None,
            y_box: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RemovalResult {
    pub value: f64,
    pub y: SymMatrix,
    /// Only set by the Hopf form.
    pub z: Option<SymMatrix>,
    pub path: ParisiPath,
    pub converged: bool,
    pub outer_evaluations: usize,
    pub inner_evaluations: usize,
}

/// `sup_{y >= 0} inf_pi { P(pi, y) - xi*(2y) / 2 }`.
pub fn remove_correction_hopflax(
    m: &ModelXi,
    p1: &SpinMeasure,
    quad: &QuadratureSpec,
    opts: &RemovalOptions,
) -> Result<RemovalResult> {
    require_coercive(m)?;
    let d = m.dim();
    let conj_opts = ConjugateOptions::default();
    let mut warm: Option<ParisiPath> = None;
    let mut best: Option<(f64, SymMatrix, ParisiPath)> = None;
    let mut inner_evals = 0;
    let mut first_err: Option<Error> = None;
    let y0 = lower_from_psd(&SymMatrix::identity(d).scale(0.1));
    let res = nelder_mead(
        |yp| {
            let y = gram_from_lower(yp, d);
            let step = m.conjugate(&y.scale(2.0), &conj_opts).and_then(|c| {
                minimize_parisi_from(m, p1, opts.k, &y, quad, &opts.inner, warm.as_ref()).map(|r| (c, r))
            });
            match step {
                Ok((conj, inner)) => {
                    inner_evals += inner.evaluations;
                    let v = inner.value - 0.5 * conj.value;
                    if best.as_ref().is_none_or(|b| v > b.0) {
                        best = Some((v, y, inner.path.clone()));
                    }
                    warm = Some(inner.path);
                    -v
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                    f64::INFINITY
                }
            }
        },
        &y0,
        &opts.outer,
    );
    let Some((value, y, path)) = best else {
        return Err(first_err.unwrap_or_else(|| Error::numerical("Hopf-Lax removal", "no finite evaluation")));
    };
    Ok(RemovalResult {
        value,
        y,
        z: None,
        path,
        converged: res.converged,
        outer_evaluations: res.evaluations,
        inner_evaluations: inner_evals,
    })
}

/// `sup_{z >= 0} inf_{y >= 0, pi} { P(pi, y) - y . z + xi(z) / 2 }`, with
/// `z` and `y` restricted to trace boxes (see [`RemovalOptions`]).
pub fn remove_correction_hopf(
    m: &ModelXi,
    p1: &SpinMeasure,
    quad: &QuadratureSpec,
    opts: &RemovalOptions,
) -> Result<RemovalResult> {
    require_coercive(m)?;
    let d = m.dim();
    let sd = sym_dim(d);
    let z_box = opts.z_box.unwrap_or(2.0 * p1.max_trace());
    let y_box = opts
        .y_box
        .unwrap_or_else(|| 10.0 * (1.0 + m.eval(&SymMatrix::identity(d).scale(z_box))));
    let pp = PathParams::new(opts.k, d);
    // Fail early on bad inputs rather than inside the search.
    parisi_functional(m, p1, &ParisiPath::zero(d), &SymMatrix::zeros(d), quad)?;

    let mut warm: Option<Vec<f64>> = None;
    let mut best: Option<(f64, SymMatrix, SymMatrix, ParisiPath)> = None;
    let mut inner_evals = 0;
    let z0 = lower_from_psd(&SymMatrix::identity(d).scale(0.5 * p1.max_trace() / d as f64));
    let res = nelder_mead(
        |zp| {
            let z = retract(gram_from_lower(zp, d), z_box);
            let inner = |raw: &[f64]| -> f64 {
                let (yp, rest) = raw.split_at(sd);
                let y = retract(gram_from_lower(yp, d), y_box);
                let Ok(path) = pp.decode(rest) else {
                    return f64::INFINITY;
                };
                parisi_functional(m, p1, &path, &y, quad).unwrap_or(f64::INFINITY) - y.dot(&z)
            };
            let mut starts: Vec<Vec<f64>> = (0..opts.inner.multistarts.max(1))
                .map(|i| {
                    let mut rng = substream(opts.inner.seed, i as u64);
                    let mut s = lower_from_psd(&SymMatrix::identity(d).scale(0.05));
                    s.extend(pp.random(&mut rng, opts.inner.start_scale));
                    s
                })
                .collect();
            if let Some(w) = &warm {
                starts[0] = w.clone();
            }
            let out = multistart(&inner, &starts, &opts.inner.nelder_mead);
            inner_evals += out.evaluations;
            let v = out.best.value + 0.5 * m.eval(&z);
            if !v.is_finite() {
                return f64::INFINITY;
            }
            let (yp, rest) = out.best.x.split_at(sd);
            if let Ok(path) = pp.decode(rest) {
                if best.as_ref().is_none_or(|b| v > b.0) {
                    best = Some((v, z, retract(gram_from_lower(yp, d), y_box), path));
                }
            }
            warm = Some(out.best.x);
            -v
        },
        &z0,
        &opts.outer,
    );
    let (value, z, y, path) = best.ok_or_else(|| Error::numerical("Hopf removal", "no finite evaluation"))?;
    Ok(RemovalResult {
        value,
        y,
        z: Some(z),
        path,
        converged: res.converged,
        outer_evaluations: res.evaluations,
        inner_evaluations: inner_evals,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HopfLaxResult {
    pub value: f64,
    pub y: SymMatrix,
    pub converged: bool,
}

/// `f(t, x) = sup_{y >= 0} { psi(x + y) - t xi*(y / t) }`.
pub fn hopflax_general<F>(psi: F, m: &ModelXi, t: f64, x: &SymMatrix, opts: &NelderMeadOptions) -> Result<HopfLaxResult>
where
    F: Fn(&SymMatrix) -> f64,
{
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("t = {t} must be nonnegative")));
    }
    let d = m.dim();
    if t == 0.0 {
        return Ok(HopfLaxResult {
            value: psi(x),
            y: SymMatrix::zeros(d),
            converged: true,
        });
    }
    require_coercive(m)?;
    let conj_opts = ConjugateOptions::default();
    let objective = |yp: &[f64]| {
        let y = gram_from_lower(yp, d);
        match m.conjugate(&y.scale(1.0 / t), &conj_opts) {
            Ok(c) => -(psi(&(x + &y)) - t * c.value),
            Err(_) => f64::INFINITY,
        }
    };
    let y0 = lower_from_psd(&SymMatrix::identity(d).scale(0.1 * t));
    let res = nelder_mead(objective, &y0, opts);
    let at_zero = psi(x);
    let (value, y) = if -res.value >= at_zero {
        (-res.value, gram_from_lower(&res.x, d))
    } else {
        (at_zero, SymMatrix::zeros(d))
    };
    Ok(HopfLaxResult {
        value,
        y,
        converged: res.converged,
    })
}

fn require_coercive(m: &ModelXi) -> Result<()> {
    if m.is_coercive() {
        Ok(())
    } else {
        Err(Error::UnsupportedModel(
            "correction removal needs a term with p >= 2".into(),
        ))
    }
}

/// Scales `g` down so that its trace is at most `bound`.
fn retract(g: SymMatrix, bound: f64) -> SymMatrix {
    let tr = g.trace();
    if tr > bound {
        g.scale(bound / tr)
    } else {
        g
    }
}
