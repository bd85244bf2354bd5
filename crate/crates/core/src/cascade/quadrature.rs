//! Nested Gaussian expectations for the cascade recursion.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cone::{psd_factor, SymMatrix};
use crate::error::{Error, Result};
use crate::substream;

/// How the Gaussian expectations of the recursion are realized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum QuadratureSpec {
    /// Tensorized Gauss-Hermite rule with `nodes_per_dim^d` nodes per level.
    GaussHermite { nodes_per_dim: usize },
    /// Fresh standard normal draws at every level (`samples^k` leaves).
    MonteCarlo { samples: usize, seed: u64 },
}

impl QuadratureSpec {
    /// 40 nodes for scalar fields, 20 per dimension in dimension two, Monte
    /// Carlo beyond.
    pub fn default_for(field_dim: usize) -> Self {
        match field_dim {
            0 | 1 => QuadratureSpec::GaussHermite { nodes_per_dim: 40 },
            2 => QuadratureSpec::GaussHermite { nodes_per_dim: 20 },
            _ => QuadratureSpec::MonteCarlo { samples: 64, seed: 0 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            QuadratureSpec::GaussHermite { nodes_per_dim } if nodes_per_dim < 2 => Err(Error::InvalidArgument(
                "Gauss-Hermite needs at least 2 nodes per dimension".into(),
            )),
            QuadratureSpec::MonteCarlo { samples: 0, .. } => {
                Err(Error::InvalidArgument("Monte Carlo needs at least one sample".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Nodes and weights of the `n`-point rule for `E f(g)`, `g ~ N(0, 1)`,
/// computed by Golub-Welsch on the Jacobi matrix of the probabilists'
/// Hermite polynomials.
pub fn gauss_hermite(n: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    type Rule = Arc<(Vec<f64>, Vec<f64>)>;
    static CACHE: OnceLock<Mutex<HashMap<usize, Rule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().unwrap().get(&n) {
        return hit.clone();
    }
    let mut jac = DMatrix::zeros(n, n);
    for i in 0..n.saturating_sub(1) {
        let b = ((i + 1) as f64).sqrt();
        jac[(i, i + 1)] = b;
        jac[(i + 1, i)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let nodes = pairs.iter().map(|p| p.0).collect();
    let weights = pairs.iter().map(|p| p.1 / total).collect();
    let rule = Arc::new((nodes, weights));
    cache.lock().unwrap().insert(n, rule.clone());
    rule
}

/// Gaussian levels of a cascade: level `l` carries an independent centered
/// increment with covariance `C_l = L_l L_l^T`; level `l + 1` is integrated
/// with exponent `s_l` (a plain expectation for the outermost level).
pub(crate) struct Levels {
    field_dim: usize,
    factors: Vec<Option<DMatrix<f64>>>,
    exponents: Vec<f64>,
}

/// Increments with Frobenius norm below this are treated as a point mass.
const DEGENERATE: f64 = 1e-12;

impl Levels {
    pub(crate) fn from_increments(
        increments: &[SymMatrix],
        exponents: &[f64],
        tol: f64,
        context: &str,
    ) -> Result<Self> {
        debug_assert_eq!(exponents.len() + 1, increments.len());
        let field_dim = increments[0].dim();
        let mut factors = Vec::with_capacity(increments.len());
        for (l, c) in increments.iter().enumerate() {
            if c.norm() < DEGENERATE {
                factors.push(None);
                continue;
            }
            let f = psd_factor(c, tol).map_err(|e| match e {
                Error::OrderViolation {
                    min_eigenvalue, tol, ..
                } => Error::OrderViolation {
                    context: format!("{context}: increment at level {}", l + 1),
                    min_eigenvalue,
                    tol,
                },
                other => other,
            })?;
            factors.push(Some(f));
        }
        Ok(Levels {
            field_dim,
            factors,
            exponents: exponents.to_vec(),
        })
    }

    /// Returns `X_0` and, in Monte Carlo mode, the standard error of the
    /// outermost average.
    pub(crate) fn evaluate<F>(&self, quad: &QuadratureSpec, innermost: &F) -> Result<(f64, f64)>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        quad.validate()?;
        match *quad {
            QuadratureSpec::GaussHermite { nodes_per_dim } => {
                let rule = gauss_hermite(nodes_per_dim);
                let (grid, logw) = tensor_grid(&rule.0, &rule.1, self.field_dim);
                let levels: Vec<(Vec<Vec<f64>>, Vec<f64>)> = self
                    .factors
                    .iter()
                    .map(|f| match f {
                        None => (vec![vec![0.0; self.field_dim]], vec![0.0]),
                        Some(l) => (grid.iter().map(|g| mat_vec(l, g)).collect(), logw.clone()),
                    })
                    .collect();
                Ok((self.gh_outer(&levels, innermost), 0.0))
            }
            QuadratureSpec::MonteCarlo { samples, seed } => Ok(self.mc_outer(samples, seed, innermost)),
        }
    }

    fn gh_outer<F>(&self, levels: &[(Vec<Vec<f64>>, Vec<f64>)], innermost: &F) -> f64
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let (pts, logw) = &levels[0];
        let eval_node = |j: usize| {
            let mut h = pts[j].clone();
            logw[j].exp() * self.gh_rec(1, &mut h, levels, innermost)
        };
        let vals = map_indices(pts.len(), eval_node);
        vals.iter().sum()
    }

    fn gh_rec<F>(&self, level: usize, h: &mut [f64], levels: &[(Vec<Vec<f64>>, Vec<f64>)], innermost: &F) -> f64
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        if level == self.factors.len() {
            return innermost(h);
        }
        let (pts, logw) = &levels[level];
        let s = self.exponents[level - 1];
        if pts.len() == 1 {
            return self.gh_rec(level + 1, h, levels, innermost);
        }
        let mut terms = Vec::with_capacity(pts.len());
        for (p, lw) in pts.iter().zip(logw) {
            add_assign(h, p, 1.0);
            terms.push(lw + s * self.gh_rec(level + 1, h, levels, innermost));
            add_assign(h, p, -1.0);
        }
        crate::logsumexp(&terms) / s
    }

    fn mc_outer<F>(&self, samples: usize, seed: u64, innermost: &F) -> (f64, f64)
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let n = if self.factors[0].is_none() { 1 } else { samples };
        let eval_node = |j: usize| {
            let mut rng = substream(seed, j as u64);
            let mut h = self.draw(0, &mut rng);
            self.mc_rec(1, &mut h, samples, &mut rng, innermost)
        };
        let vals = map_indices(n, eval_node);
        let est = crate::Estimate::from_samples(&vals);
        (est.mean, est.stderr)
    }

    fn mc_rec<F, R>(&self, level: usize, h: &mut [f64], samples: usize, rng: &mut R, innermost: &F) -> f64
    where
        F: Fn(&[f64]) -> f64 + Sync,
        R: Rng,
    {
        if level == self.factors.len() {
            return innermost(h);
        }
        if self.factors[level].is_none() {
            return self.mc_rec(level + 1, h, samples, rng, innermost);
        }
        let s = self.exponents[level - 1];
        let logw = -(samples as f64).ln();
        let mut terms = Vec::with_capacity(samples);
        for _ in 0..samples {
            let z = self.draw(level, rng);
            add_assign(h, &z, 1.0);
            terms.push(logw + s * self.mc_rec(level + 1, h, samples, rng, innermost));
            add_assign(h, &z, -1.0);
        }
        crate::logsumexp(&terms) / s
    }

    fn draw<R: Rng>(&self, level: usize, rng: &mut R) -> Vec<f64> {
        match &self.factors[level] {
            None => vec![0.0; self.field_dim],
            Some(l) => {
                let g: Vec<f64> = (0..l.ncols()).map(|_| rng.sample(StandardNormal)).collect();
                mat_vec(l, &g)
            }
        }
    }
}

fn tensor_grid(nodes: &[f64], weights: &[f64], d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = nodes.len();
    let total = n.pow(d as u32);
    let mut pts = Vec::with_capacity(total);
    let mut logw = Vec::with_capacity(total);
    for idx in 0..total {
        let mut rem = idx;
        let mut p = vec![0.0; d];
        let mut lw = 0.0;
        for c in p.iter_mut() {
            let i = rem % n;
            rem /= n;
            *c = nodes[i];
            lw += weights[i].ln();
        }
        pts.push(p);
        logw.push(lw);
    }
    (pts, logw)
}

fn mat_vec(l: &DMatrix<f64>, g: &[f64]) -> Vec<f64> {
    (0..l.nrows())
        .map(|r| (0..l.ncols()).map(|c| l[(r, c)] * g[c]).sum())
        .collect()
}

fn add_assign(h: &mut [f64], p: &[f64], sign: f64) {
    for (a, b) in h.iter_mut().zip(p) {
        *a += sign * b;
    }
}

/// Evaluates `f` on `0..n` and returns the results in index order.
pub(crate) fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
