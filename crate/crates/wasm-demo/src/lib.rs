//! Browser bindings: the replica-symmetric landscape of the SK model, the
//! minimized Parisi functional along a `k` ladder, and one draw of
//! Poisson-Dirichlet cascade weights.

use vecspin::cascade::{parisi_functional, sample_cascade_weights};
use vecspin::optimize::{minimize_ladder, MinimizeOptions};
use vecspin::{ModelXi, ParisiPath, QuadratureSpec, SpinMeasure, SymMatrix};
use wasm_bindgen::prelude::*;

const QUAD: QuadratureSpec = QuadratureSpec::GaussHermite { nodes_per_dim: 40 };

fn js(e: vecspin::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// `P(q)` for the one-level path `pi = q` on `points` equally spaced
/// `q` in `[0, 1]`, SK model `xi(a) = beta^2 a^2`, Ising spins.
#[wasm_bindgen]
pub fn rs_landscape(beta: f64, points: usize) -> Result<Vec<f64>, JsError> {
    if points < 2 {
        return Err(JsError::new("need at least two points"));
    }
    let m = ModelXi::sk(beta);
    let p1 = SpinMeasure::ising();
    let zero = SymMatrix::zeros(1);
    (0..points)
        .map(|i| {
            let q = i as f64 / (points - 1) as f64;
            let path = ParisiPath::replica_symmetric(SymMatrix::scalar(q)).map_err(js)?;
            parisi_functional(&m, &p1, &path, &zero, &QUAD).map_err(js)
        })
        .collect()
}

/// Minimal `P(pi)` over `k`-level paths for `k = 1..=kmax`.
#[wasm_bindgen]
pub fn parisi_ladder(beta: f64, kmax: usize) -> Result<Vec<f64>, JsError> {
    if !(1..=4).contains(&kmax) {
        return Err(JsError::new("kmax must be between 1 and 4"));
    }
    let ks: Vec<usize> = (1..=kmax).collect();
    let opts = MinimizeOptions {
        multistarts: 3,
        ..Default::default()
    };
    let res = minimize_ladder(
        &ModelXi::sk(beta),
        &SpinMeasure::ising(),
        &ks,
        &SymMatrix::zeros(1),
        &QUAD,
        &opts,
    )
    .map_err(js)?;
    Ok(res.iter().map(|r| r.value).collect())
}

/// Weights of a one-level cascade with exponent `s` truncated to `m`
/// atoms, sorted in decreasing order.
#[wasm_bindgen]
pub fn cascade_sample(s: f64, m: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    if !(s > 0.0 && s < 1.0) {
        return Err(JsError::new("s must lie in (0, 1)"));
    }
    let path = ParisiPath::new(vec![0.0, s, 1.0], vec![SymMatrix::scalar(0.0), SymMatrix::scalar(1.0)]).map_err(js)?;
    let w = sample_cascade_weights(&path, m, seed).map_err(js)?;
    let mut v = w.weights().to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    Ok(v)
}
