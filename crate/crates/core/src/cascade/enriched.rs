use serde::Serialize;

use super::{psi_enriched, ParisiPath, QuadratureSpec};
use crate::error::{Error, Result};
use crate::model::{ConjugateOptions, ModelXi, SpinMeasure};
use crate::optimize::{nelder_mead, MinimizeOptions, PathParams};
use crate::substream;

#[derive(Debug, Clone, Serialize)]
pub struct EnrichedResult {
    pub value: f64,
    /// Minimizing `pi`; `None` when `t = 0`.
    pub path: Option<ParisiPath>,
    pub converged: bool,
    pub evaluations: usize,
}

/// `inf_pi { psi(mu + t grad xi o pi) + (t / 2) int xi*(grad xi(pi)) }` over
/// `k`-level paths `pi`, with `xi*` computed numerically.
pub fn enriched_variational(
    m: &ModelXi,
    p1: &SpinMeasure,
    t: f64,
    mu: &ParisiPath,
    k: usize,
    quad: &QuadratureSpec,
    opts: &MinimizeOptions,
) -> Result<EnrichedResult> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("t = {t} must be nonnegative")));
    }
    if t == 0.0 {
        return Ok(EnrichedResult {
            value: psi_enriched(p1, mu, quad)?,
            path: None,
            converged: true,
            evaluations: 1,
        });
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let conj_opts = ConjugateOptions::default();
    let objective_of = |path: &ParisiPath| -> Result<f64> {
        let grad_path = path.map(|q| m.grad(q))?;
        let shifted = mu.add_scaled(&grad_path, t)?;
        let mut conj_int = 0.0;
        for (l, q) in path.values().iter().enumerate() {
            let width = path.breakpoints()[l + 1] - path.breakpoints()[l];
            conj_int += width * m.conjugate(&m.grad(q), &conj_opts)?.value;
        }
        Ok(psi_enriched(p1, &shifted, quad)? + 0.5 * t * conj_int)
    };
    // Fail early on inconsistent inputs.
    objective_of(&ParisiPath::zero(m.dim()))?;

    let pp = PathParams::new(k, m.dim());
    let objective = |raw: &[f64]| match pp.decode(raw) {
        Ok(path) => objective_of(&path).unwrap_or(f64::INFINITY),
        Err(_) => f64::INFINITY,
    };
    let starts: Vec<Vec<f64>> = (0..opts.multistarts.max(1))
        .map(|i| pp.random(&mut substream(opts.seed, i as u64), opts.start_scale))
        .collect();
    let runs = super::map_indices(starts.len(), |i| nelder_mead(&objective, &starts[i], &opts.nelder_mead));
    let evaluations = runs.iter().map(|r| r.evaluations).sum();
    let best = runs
        .into_iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("at least one start");
    let path = pp.decode(&best.x)?;
    Ok(EnrichedResult {
        value: objective_of(&path)?,
        path: Some(path),
        converged: best.converged,
        evaluations,
    })
}
