//! Independent reference computations shared by the integration tests.
//! Nothing here calls the library's own evaluators for the quantity being
//! checked.

#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vecspin::{ModelXi, ParisiPath, SpinMeasure, SymMatrix, XiTerm};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `sum_p A_p . a^{.p}` written out entrywise.
pub fn xi(m: &ModelXi, a: &SymMatrix) -> f64 {
    let d = m.dim();
    let mut s = 0.0;
    for t in m.terms() {
        for i in 0..d {
            for j in 0..d {
                s += t.coef.get(i, j) * a.get(i, j).powi(t.p as i32);
            }
        }
    }
    s
}

/// `sum_p (p - 1) A_p . a^{.p}`.
pub fn theta(m: &ModelXi, a: &SymMatrix) -> f64 {
    let d = m.dim();
    let mut s = 0.0;
    for t in m.terms() {
        for i in 0..d {
            for j in 0..d {
                s += (t.p as f64 - 1.0) * t.coef.get(i, j) * a.get(i, j).powi(t.p as i32);
            }
        }
    }
    s
}

pub fn sk(beta: f64) -> ModelXi {
    ModelXi::sk(beta)
}

/// `xi(a) = beta^2 [[1, 1/2], [1/2, 1]] . a^{.2}` on spins `(1, 0)` and
/// `(0.6, 0.8)` with equal weights.
pub fn two_atom(beta: f64) -> (ModelXi, SpinMeasure) {
    let a = SymMatrix::from_row_major(2, &[1.0, 0.5, 0.5, 1.0])
        .unwrap()
        .scale(beta * beta);
    let m = ModelXi::single(2, a).unwrap();
    let p1 = SpinMeasure::uniform(2, vec![vec![1.0, 0.0], vec![0.6, 0.8]]).unwrap();
    (m, p1)
}

/// A mixed model in dimension two: the two-atom quadratic term plus a
/// quartic one.
pub fn mixed_two_dim() -> ModelXi {
    let a2 = SymMatrix::from_row_major(2, &[0.5, 0.2, 0.2, 0.4]).unwrap();
    let a4 = SymMatrix::from_row_major(2, &[0.3, 0.1, 0.1, 0.2]).unwrap();
    ModelXi::new(2, vec![XiTerm { p: 2, coef: a2 }, XiTerm { p: 4, coef: a4 }]).unwrap()
}

/// `B B^T` with standard normal `B` scaled by `scale`.
pub fn random_psd<R: Rng>(rng: &mut R, dim: usize, scale: f64) -> SymMatrix {
    let b: Vec<f64> = (0..dim * dim).map(|_| normal(rng) * scale).collect();
    SymMatrix::from_fn(dim, |i, j| (0..dim).map(|k| b[i * dim + k] * b[j * dim + k]).sum())
}

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller, so the tests do not share the library's sampler.
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// A random `k`-level path: sorted uniform breakpoints and a chain of
/// random PSD increments.
pub fn random_path<R: Rng>(rng: &mut R, k: usize, dim: usize) -> ParisiPath {
    let bp = loop {
        let mut bp: Vec<f64> = (0..k - 1).map(|_| rng.random_range(0.02..0.98)).collect();
        bp.sort_by(|a, b| a.total_cmp(b));
        if bp.windows(2).all(|w| w[1] - w[0] > 1e-3) {
            break bp;
        }
    };
    let mut breakpoints = vec![0.0];
    breakpoints.extend(bp);
    breakpoints.push(1.0);
    let mut q = SymMatrix::zeros(dim);
    let mut values = Vec::with_capacity(k);
    for _ in 0..k {
        q = &q + &random_psd(rng, dim, 0.35);
        values.push(q.clone());
    }
    ParisiPath::new(breakpoints, values).unwrap()
}

/// `E f(g)` for `g ~ N(0, 1)` by the trapezoid rule on `[-12, 12]`.
pub fn gauss_expect(f: impl Fn(f64) -> f64) -> f64 {
    let n = 6000;
    let h = 24.0 / n as f64;
    let c = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    (0..=n)
        .map(|i| {
            let z = -12.0 + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            w * c * (-0.5 * z * z).exp() * f(z)
        })
        .sum::<f64>()
        * h
}

fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Replica-symmetric corrected functional of the SK model with Ising spins
/// (probability normalization): `E log cosh(beta sqrt(2q) z) - beta^2 q +
/// beta^2 q^2 / 2`.
pub fn rs_ising(beta: f64, q: f64) -> f64 {
    let s = beta * (2.0 * q).sqrt();
    gauss_expect(|z| log_cosh(s * z)) - beta * beta * q + 0.5 * beta * beta * q * q
}

/// Grid plus golden-section minimum of [`rs_ising`] over `q` in `[0, 1]`,
/// cross-checked against the fixed point `q = E tanh^2(beta sqrt(2q) z)`.
pub fn rs_ising_min(beta: f64) -> (f64, f64) {
    let grid = 200;
    let (mut best_q, mut best) = (0.0, rs_ising(beta, 0.0));
    for i in 1..=grid {
        let q = i as f64 / grid as f64;
        let v = rs_ising(beta, q);
        if v < best {
            best = v;
            best_q = q;
        }
    }
    let (mut a, mut b) = (
        (best_q - 1.0 / grid as f64).max(0.0),
        (best_q + 1.0 / grid as f64).min(1.0),
    );
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if rs_ising(beta, c) < rs_ising(beta, d) {
            b = d;
        } else {
            a = c;
        }
    }
    let q = 0.5 * (a + b);
    let v = rs_ising(beta, q).min(best);
    if q > 1e-6 {
        let s = beta * (2.0 * q).sqrt();
        let fp = gauss_expect(|z| (s * z).tanh().powi(2));
        assert!((fp - q).abs() < 1e-4, "fixed point {fp} vs grid minimizer {q}");
    }
    (q, v)
}
