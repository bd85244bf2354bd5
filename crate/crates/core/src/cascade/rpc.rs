//! Truncated Ruelle probability cascades.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use super::ParisiPath;
use crate::error::{Error, Result};
use crate::substream;

/// Estimated tail mass above which a cascade is flagged as truncated.
const TAIL_WARNING: f64 = 0.05;

/// Leaf weights of a depth-`k-1` cascade with `M` children per node.
///
/// Leaves are indexed in lexicographic order, so the ancestor of leaf `i` at
/// depth `l` is `i / M^(depth - l)`.
#[derive(Debug, Clone, Serialize)]
pub struct CascadeWeights {
    exponents: Vec<f64>,
    branching: usize,
    weights: Vec<f64>,
    tail_fraction: f64,
    truncation_warning: bool,
}

impl CascadeWeights {
    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn depth(&self) -> usize {
        self.exponents.len()
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Worst per-level estimate of the Poisson mass dropped by truncation.
    pub fn tail_fraction(&self) -> f64 {
        self.tail_fraction
    }

    pub fn truncation_warning(&self) -> bool {
        self.truncation_warning
    }

    /// Number of common ancestors of two leaves below the root; equal leaves
    /// share `depth + 1` levels by convention. Replicas sharing `l` levels
    /// see overlap `q_{l+1}`.
    pub fn shared_levels(&self, a: usize, b: usize) -> usize {
        if a == b {
            return self.depth() + 1;
        }
        let mut shared = 0;
        for l in 1..=self.depth() {
            let div = self.branching.pow((self.depth() - l) as u32);
            if a / div != b / div {
                break;
            }
            shared = l;
        }
        shared
    }
}

/// Samples a cascade with the interior breakpoints of `path` as exponents.
///
/// Children of each node get the `M` largest points `Gamma_j^(-1/s)` of a
/// Poisson process with intensity `s x^(-1-s)`; leaf weights are products
/// along the ancestry, normalized over all leaves at once.
pub fn sample_cascade_weights(path: &ParisiPath, branching: usize, seed: u64) -> Result<CascadeWeights> {
    let exponents = path.exponents().to_vec();
    if exponents.is_empty() {
        return Err(Error::InvalidArgument("a one-level path needs no cascade".into()));
    }
    if branching < 16 {
        return Err(Error::InvalidArgument(format!(
            "cascade branching {branching} is below the minimum of 16"
        )));
    }
    let depth = exponents.len();
    let leaves = branching
        .checked_pow(depth as u32)
        .filter(|&n| n <= 1 << 24)
        .ok_or_else(|| Error::InvalidArgument(format!("{branching}^{depth} cascade leaves is too many")))?;

    let mut rng = substream(seed, 0);
    let mut log_w = vec![0.0f64];
    for &s in &exponents {
        let mut next = Vec::with_capacity(log_w.len() * branching);
        for parent in &log_w {
            let mut gamma = 0.0;
            for _ in 0..branching {
                let e: f64 = Exp1.sample(&mut rng);
                gamma += e;
                next.push(parent - gamma.ln() / s);
            }
        }
        log_w = next;
    }
    debug_assert_eq!(log_w.len(), leaves);
    let lse = crate::logsumexp(&log_w);
    let weights: Vec<f64> = log_w.iter().map(|l| (l - lse).exp()).collect();

    let tail_fraction = exponents
        .iter()
        .map(|&s| tail_estimate(s, branching))
        .fold(0.0, f64::max);
    Ok(CascadeWeights {
        exponents,
        branching,
        weights,
        tail_fraction,
        truncation_warning: tail_fraction > TAIL_WARNING,
    })
}

/// Expected share of `sum_j j^(-1/s)` beyond the first `m` terms.
fn tail_estimate(s: f64, m: usize) -> f64 {
    let a = 1.0 / s;
    let tail = (m as f64 + 0.5).powf(1.0 - a) / (a - 1.0);
    let head: f64 = (1..=m).map(|j| (j as f64).powf(-a)).sum();
    tail / (head + tail)
}

/// Draws a leaf index from the cascade weights.
pub(crate) fn draw_leaf<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}
