//! Guerra's interpolation between the spin system and a cascade.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ConfigSpace, FieldKind, GaussianField};
use crate::cascade::{map_indices, sample_cascade_weights, ParisiPath};
use crate::cone::{psd_factor, SymMatrix};
use crate::error::{Error, Result};
use crate::model::ModelXi;
use crate::{logsumexp, substream, Estimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuerraOptions {
    /// Children per cascade node (paths with two or more levels).
    pub branching: usize,
}

impl Default for GuerraOptions {
    fn default() -> Self {
        GuerraOptions { branching: 256 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GuerraPoint {
    pub r: f64,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GuerraCurve {
    pub points: Vec<GuerraPoint>,
    /// `phi(r_{j+1}) - phi(r_j)` with paired standard errors.
    pub increments: Vec<Estimate>,
    /// Set when any replicate's cascade lost more than the tolerated tail.
    pub truncation_warning: bool,
    pub reps: usize,
}

impl GuerraCurve {
    /// Every increment is at most `slack` paired standard errors above zero.
    pub fn is_nonincreasing(&self, slack: f64) -> bool {
        self.increments.iter().all(|e| e.mean <= slack * e.stderr)
    }
}

/// Monte Carlo estimate of `phi(r)` on `r_grid`, with the spin Hamiltonian,
/// cascade fields, weights and `y` shared across the grid within each
/// replicate. Cascade weights are redrawn for every replicate.
#[allow(clippy::too_many_arguments)]
pub fn guerra_curve(
    m: &ModelXi,
    cs: &ConfigSpace,
    path: &ParisiPath,
    r_grid: &[f64],
    reps: usize,
    seed: u64,
    opts: &GuerraOptions,
) -> Result<GuerraCurve> {
    if path.dim() != m.dim() || cs.dim() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            found: if path.dim() != m.dim() { path.dim() } else { cs.dim() },
        });
    }
    if r_grid.iter().any(|r| !(0.0..=1.0).contains(r)) || r_grid.is_empty() {
        return Err(Error::InvalidArgument(
            "r grid must be a nonempty subset of [0, 1]".into(),
        ));
    }
    if reps < 2 {
        return Err(Error::InvalidArgument("need at least two replicates".into()));
    }
    let k = path.k();
    let d = m.dim();
    let n = cs.n();
    let nf = n as f64;
    let field = GaussianField::new(m, cs, FieldKind::Hamiltonian)?;

    let grads: Vec<SymMatrix> = path.values().iter().map(|q| m.grad(q)).collect();
    let thetas: Vec<f64> = path.values().iter().map(|q| m.theta(q)).collect();
    let tol = 1e-9 * grads[k - 1].norm().max(1.0);
    let mut factors = Vec::with_capacity(k);
    let mut theta_sd = Vec::with_capacity(k);
    for j in 0..k {
        let c = if j == 0 {
            grads[0].clone()
        } else {
            &grads[j] - &grads[j - 1]
        };
        factors.push(psd_factor(&c, tol)?);
        let dt = thetas[j] - if j == 0 { 0.0 } else { thetas[j - 1] };
        theta_sd.push(dt.max(0.0).sqrt());
    }
    let last_grad = &grads[k - 1];
    let theta_last = thetas[k - 1];
    let corr: Vec<f64> = (0..cs.len()).map(|c| nf * m.eval(&cs.self_overlap(c))).collect();
    let quad_last: Vec<f64> = (0..cs.len()).map(|c| last_grad.dot(cs.self_gram(c))).collect();
    let branching = opts.branching;

    let per_rep = map_indices(reps, |rep| -> Result<(Vec<f64>, bool)> {
        let mut rng = substream(seed, rep as u64);
        let h = field.sample(&mut rng);
        let (log_v, warn) = if k >= 2 {
            let cw = sample_cascade_weights(path, branching, rng.random::<u64>())?;
            (
                cw.weights().iter().map(|w| w.ln()).collect::<Vec<f64>>(),
                cw.truncation_warning(),
            )
        } else {
            (vec![0.0], false)
        };
        let leaves = log_v.len();
        // Node at depth j - 1 above leaf a: a / M^(k - j).
        let mut w = vec![0.0; leaves * n * d];
        let mut y = vec![0.0; leaves];
        for j in 1..=k {
            let nodes = branching.pow((j - 1) as u32).min(leaves);
            let span = leaves / nodes;
            for node in 0..nodes {
                for i in 0..n {
                    let g: Vec<f64> = (0..factors[j - 1].ncols())
                        .map(|_| rng.sample(StandardNormal))
                        .collect();
                    for kk in 0..d {
                        let z: f64 = (0..g.len()).map(|c| factors[j - 1][(kk, c)] * g[c]).sum();
                        for a in node * span..(node + 1) * span {
                            w[(a * n + i) * d + kk] += z;
                        }
                    }
                }
                let u = theta_sd[j - 1] * rng.sample::<f64, _>(StandardNormal);
                for ya in &mut y[node * span..(node + 1) * span] {
                    *ya += u;
                }
            }
        }
        // cross[a][c] = sum_i w_i(a) . sigma_i
        let mut cross = vec![0.0; leaves * cs.len()];
        for a in 0..leaves {
            for c in 0..cs.len() {
                let s = cs.spins(c);
                let mut acc = 0.0;
                for i in 0..n {
                    for kk in 0..d {
                        acc += w[(a * n + i) * d + kk] * s[(kk, i)];
                    }
                }
                cross[a * cs.len() + c] = acc;
            }
        }
        let phis = r_grid
            .iter()
            .map(|&r| {
                let (sr, s1r) = (r.sqrt(), (1.0 - r).sqrt());
                let mut terms = Vec::with_capacity(leaves * cs.len());
                for a in 0..leaves {
                    let alpha_part = log_v[a] + (r * nf).sqrt() * y[a] - 0.5 * r * nf * theta_last;
                    for c in 0..cs.len() {
                        terms.push(
                            alpha_part + cs.log_weights()[c] + sr * h[c] - 0.5 * r * corr[c]
                                + s1r * cross[a * cs.len() + c]
                                - 0.5 * (1.0 - r) * quad_last[c],
                        );
                    }
                }
                logsumexp(&terms) / nf
            })
            .collect();
        Ok((phis, warn))
    });
    let per_rep: Vec<(Vec<f64>, bool)> = per_rep.into_iter().collect::<Result<_>>()?;

    let column = |j: usize| per_rep.iter().map(|(p, _)| p[j]).collect::<Vec<f64>>();
    let points = r_grid
        .iter()
        .enumerate()
        .map(|(j, &r)| {
            let e = Estimate::from_samples(&column(j));
            GuerraPoint {
                r,
                mean: e.mean,
                stderr: e.stderr,
            }
        })
        .collect();
    let increments = (1..r_grid.len())
        .map(|j| {
            let diffs: Vec<f64> = per_rep.iter().map(|(p, _)| p[j] - p[j - 1]).collect();
            Estimate::from_samples(&diffs)
        })
        .collect();
    Ok(GuerraCurve {
        points,
        increments,
        truncation_warning: per_rep.iter().any(|(_, w)| *w),
        reps,
    })
}
