//! Numerical toolkit for self-overlap-corrected Parisi formulas of vector
//! spin glasses.
//!
//! * [`cone`]: symmetric matrices, the PSD cone, Loewner order.
//! * [`model`]: covariance function `xi`, `theta`, `xi*`, spin measure.
//! * [`cascade`]: step paths, the Ruelle-cascade recursion, the Parisi
//!   functional and the enriched functional, Poisson-Dirichlet sampling.
//! * [`optimize`]: Nelder-Mead minimization over paths and the two
//!   correction-removal variational formulas.
//! * [`simulate`]: exact-enumeration Monte Carlo at finite `N`.
//! * [`cli`]: batch runner behind the `vecspin` binary.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cascade;
pub mod cli;
pub mod cone;
pub mod error;
pub mod io;
pub mod model;
pub mod optimize;
pub mod simulate;

pub use cascade::{ParisiPath, QuadratureSpec};
pub use cone::{OrthoBasis, PsdChain, SymMatrix};
pub use error::{Error, Result};
pub use model::{Atom, ModelXi, SpinMeasure, XiTerm};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Numerically stable `log sum exp`.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + s.ln()
}

/// Independent RNG stream `index` derived from a master seed.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub reps: usize,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Estimate {
                mean: f64::NAN,
                stderr: f64::NAN,
                reps: 0,
            };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Estimate { mean, stderr, reps: n }
    }

    pub fn exact(value: f64) -> Self {
        Estimate {
            mean: value,
            stderr: 0.0,
            reps: 0,
        }
    }
}
