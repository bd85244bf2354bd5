use rand::Rng;
use rand_distr::StandardNormal;

use crate::cascade::ParisiPath;
use crate::cone::{gram_from_lower, lower_from_psd, psd_project, sym_dim, SymMatrix};
use crate::error::Result;

const RAW_CLAMP: f64 = 12.0;

/// Unconstrained coordinates of a `k`-level path in dimension `dim`.
///
/// The first `k - 1` entries are log-ratios of the interval lengths
/// `s_l - s_{l-1}` to the first one; the rest are `k` lower-triangular
/// factors `L_l` with `q_l = sum_{j <= l} L_j L_j^T`. Every coordinate
/// vector decodes to a valid path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathParams {
    pub k: usize,
    pub dim: usize,
}

impl PathParams {
    pub fn new(k: usize, dim: usize) -> Self {
        PathParams { k, dim }
    }

    pub fn len(&self) -> usize {
        self.k - 1 + self.k * sym_dim(self.dim)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn decode(&self, raw: &[f64]) -> Result<ParisiPath> {
        let (breaks, incs) = raw.split_at(self.k - 1);
        let logits: Vec<f64> = std::iter::once(0.0)
            .chain(breaks.iter().map(|r| r.clamp(-RAW_CLAMP, RAW_CLAMP)))
            .collect();
        let lse = crate::logsumexp(&logits);
        let mut bp = Vec::with_capacity(self.k + 1);
        bp.push(0.0);
        let mut acc = 0.0;
        for g in &logits[..self.k - 1] {
            acc += (g - lse).exp();
            bp.push(acc);
        }
        bp.push(1.0);
        let sd = sym_dim(self.dim);
        let mut q = SymMatrix::zeros(self.dim);
        let values = incs
            .chunks(sd)
            .map(|c| {
                q = &q + &gram_from_lower(c, self.dim);
                q.clone()
            })
            .collect();
        ParisiPath::new(bp, values)
    }

    /// Coordinates of an existing `k`-level path.
    pub fn encode(&self, path: &ParisiPath) -> Result<Vec<f64>> {
        debug_assert_eq!(path.k(), self.k);
        let bp = path.breakpoints();
        let g0 = bp[1] - bp[0];
        let mut raw: Vec<f64> = (1..self.k).map(|l| ((bp[l + 1] - bp[l]) / g0).ln()).collect();
        let mut prev = SymMatrix::zeros(self.dim);
        for q in path.values() {
            raw.extend(lower_from_psd(&psd_project(&(q - &prev))?));
            prev = q.clone();
        }
        Ok(raw)
    }

    /// A random start: equal-ish breaks and increments of size about `scale`.
    pub fn random<R: Rng>(&self, rng: &mut R, scale: f64) -> Vec<f64> {
        let sd = sym_dim(self.dim);
        let per = (scale / self.k as f64).sqrt();
        let mut raw: Vec<f64> = (1..self.k)
            .map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        for _ in 0..self.k {
            for i in 0..self.dim {
                for j in 0..=i {
                    let z: f64 = rng.sample(StandardNormal);
                    raw.push(if i == j {
                        per * (0.5 + rng.random::<f64>())
                    } else {
                        0.3 * per * z
                    });
                }
            }
        }
        debug_assert_eq!(raw.len(), self.k - 1 + self.k * sd);
        raw
    }
}
