//! Step paths, the Ruelle-cascade recursion and the functionals built on it.
//!
//! A `k`-level path `pi = sum_l q_l 1[s_{l-1}, s_l)` feeds a cascade whose
//! level `l` carries a Gaussian increment with covariance `C_l`. The cascade
//! average is evaluated backwards:
//!
//! ```text
//! X_k = log sum_tau w_tau exp(h . tau + c(tau))
//! X_l = (1 / s_l) log E exp(s_l X_{l+1})      l = k-1, ..., 1
//! X_0 = E X_1
//! ```

mod enriched;
mod quadrature;
mod rpc;

pub use enriched::{enriched_variational, EnrichedResult};
pub use quadrature::{gauss_hermite, QuadratureSpec};
pub use rpc::{sample_cascade_weights, CascadeWeights};

pub(crate) use quadrature::{map_indices, Levels};
pub(crate) use rpc::draw_leaf;

use serde::Serialize;

use crate::cone::{PsdChain, SymMatrix, PSD_TOL};
use crate::error::{Error, Result};
use crate::model::{ModelXi, SpinMeasure};

/// Left-continuous step path `[0, 1] -> S^D_+`.
#[derive(Debug, Clone, Serialize)]
pub struct ParisiPath {
    breakpoints: Vec<f64>,
    values: PsdChain,
}

impl ParisiPath {
    pub fn new(breakpoints: Vec<f64>, values: Vec<SymMatrix>) -> Result<Self> {
        let k = values.len();
        if k == 0 {
            return Err(Error::InvalidPath("path needs at least one level".into()));
        }
        if breakpoints.len() != k + 1 {
            return Err(Error::InvalidPath(format!(
                "{k} levels need {} breakpoints, got {}",
                k + 1,
                breakpoints.len()
            )));
        }
        if breakpoints[0] != 0.0 || breakpoints[k] != 1.0 {
            return Err(Error::InvalidPath("breakpoints must start at 0 and end at 1".into()));
        }
        for w in breakpoints.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidPath(format!(
                    "breakpoints must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        let values = PsdChain::new(values, PSD_TOL)?;
        Ok(ParisiPath { breakpoints, values })
    }

    /// The constant path `q` (one level).
    pub fn replica_symmetric(q: SymMatrix) -> Result<Self> {
        Self::new(vec![0.0, 1.0], vec![q])
    }

    pub fn zero(dim: usize) -> Self {
        Self::replica_symmetric(SymMatrix::zeros(dim)).expect("zero path is valid")
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn dim(&self) -> usize {
        self.values.dim()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[SymMatrix] {
        self.values.matrices()
    }

    /// `pi(1) = q_k`.
    pub fn last(&self) -> &SymMatrix {
        &self.values()[self.k() - 1]
    }

    /// Interior breakpoints `s_1, ..., s_{k-1}`: the cascade exponents.
    pub fn exponents(&self) -> &[f64] {
        &self.breakpoints[1..self.k()]
    }

    pub fn value_at(&self, s: f64) -> &SymMatrix {
        let k = self.k();
        let l = self.breakpoints[1..k].iter().take_while(|&&b| b <= s).count();
        &self.values()[l]
    }

    /// `int_0^1 f(pi(s)) ds`.
    pub fn integrate(&self, f: impl Fn(&SymMatrix) -> f64) -> f64 {
        self.values()
            .iter()
            .enumerate()
            .map(|(l, q)| (self.breakpoints[l + 1] - self.breakpoints[l]) * f(q))
            .sum()
    }

    /// Applies `f` levelwise; the image must again be a monotone chain.
    pub fn map(&self, f: impl Fn(&SymMatrix) -> SymMatrix) -> Result<Self> {
        Self::new(self.breakpoints.clone(), self.values().iter().map(f).collect())
    }

    /// Splits the level containing `s` at `s` without changing the path.
    pub fn refine(&self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) || self.breakpoints.contains(&s) {
            return Ok(self.clone());
        }
        let l = self.breakpoints.iter().take_while(|&&b| b < s).count() - 1;
        let mut bp = self.breakpoints.clone();
        bp.insert(l + 1, s);
        let mut vals = self.values().to_vec();
        vals.insert(l, vals[l].clone());
        Self::new(bp, vals)
    }

    /// `self + c * other` on the common refinement of both breakpoint sets.
    pub fn add_scaled(&self, other: &ParisiPath, c: f64) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let mut bp: Vec<f64> = self
            .breakpoints
            .iter()
            .chain(other.breakpoints.iter())
            .copied()
            .collect();
        bp.sort_by(|a, b| a.partial_cmp(b).unwrap());
        bp.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        let vals = bp[..bp.len() - 1]
            .iter()
            .map(|&s| self.value_at(s) + &other.value_at(s).scale(c))
            .collect();
        Self::new(bp, vals)
    }

    /// Cascade increments `v_1, v_2 - v_1, ...` of `f` applied levelwise.
    fn increments(&self, f: impl Fn(&SymMatrix) -> SymMatrix) -> Vec<SymMatrix> {
        let mut prev = SymMatrix::zeros(self.dim());
        self.values()
            .iter()
            .map(|q| {
                let v = f(q);
                let c = &v - &prev;
                prev = v;
                c
            })
            .collect()
    }
}

fn check_dims(m: &ModelXi, p1: &SpinMeasure, path: &ParisiPath, tilt: &SymMatrix) -> Result<()> {
    for found in [p1.dim(), path.dim(), tilt.dim()] {
        if found != m.dim() {
            return Err(Error::DimensionMismatch {
                expected: m.dim(),
                found,
            });
        }
    }
    Ok(())
}

fn increment_tol(scale: &SymMatrix) -> f64 {
    1e-9 * scale.norm().max(1.0)
}

/// Runs the cascade with the given increments and final quadratic weights:
/// `X_k(h) = log sum_tau w_tau exp(h . tau + tau^T inner tau)`.
fn cascade_over_measure(
    p1: &SpinMeasure,
    increments: &[SymMatrix],
    exponents: &[f64],
    inner: &SymMatrix,
    quad: &QuadratureSpec,
    context: &str,
) -> Result<(f64, f64)> {
    let scale = increments.iter().fold(SymMatrix::zeros(p1.dim()), |a, c| &a + c);
    let levels = Levels::from_increments(increments, exponents, increment_tol(&scale), context)?;
    let taus: Vec<&[f64]> = p1.atoms().iter().map(|a| a.tau.as_slice()).collect();
    let consts: Vec<f64> = p1
        .atoms()
        .iter()
        .map(|a| a.weight.ln() + inner.quad_form(&a.tau))
        .collect();
    let innermost = |h: &[f64]| {
        let mut max = f64::NEG_INFINITY;
        let mut vals = [0.0f64; 64];
        let mut heap;
        let buf: &mut [f64] = if taus.len() <= 64 {
            &mut vals[..taus.len()]
        } else {
            heap = vec![0.0; taus.len()];
            &mut heap
        };
        for (i, (t, c)) in taus.iter().zip(&consts).enumerate() {
            let v = c + t.iter().zip(h).map(|(a, b)| a * b).sum::<f64>();
            buf[i] = v;
            max = max.max(v);
        }
        max + buf.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
    };
    let out = levels.evaluate(quad, &innermost)?;
    if !out.0.is_finite() {
        return Err(Error::numerical(context, format!("non-finite value {}", out.0)));
    }
    Ok(out)
}

/// First term of the Parisi functional, with the standard error of the
/// outermost average (zero for Gauss-Hermite).
pub fn rsb_recursion_with_error(
    m: &ModelXi,
    p1: &SpinMeasure,
    path: &ParisiPath,
    tilt: &SymMatrix,
    quad: &QuadratureSpec,
) -> Result<(f64, f64)> {
    check_dims(m, p1, path, tilt)?;
    let increments = path.increments(|q| m.grad(q));
    let inner = tilt - &m.grad(path.last()).scale(0.5);
    cascade_over_measure(p1, &increments, path.exponents(), &inner, quad, "cascade recursion")
}

/// `E log sum_alpha v_alpha int exp(w(alpha) . tau - grad xi(q_k) . tau tau^T / 2
/// + tilt . tau tau^T) dP_1(tau)` evaluated through the cascade recursion.
pub fn rsb_recursion(
    m: &ModelXi,
    p1: &SpinMeasure,
    path: &ParisiPath,
    tilt: &SymMatrix,
    quad: &QuadratureSpec,
) -> Result<f64> {
    rsb_recursion_with_error(m, p1, path, tilt, quad).map(|v| v.0)
}

/// `P(pi, x) = rsb_recursion + int theta(pi) / 2`.
pub fn parisi_functional(
    m: &ModelXi,
    p1: &SpinMeasure,
    path: &ParisiPath,
    tilt: &SymMatrix,
    quad: &QuadratureSpec,
) -> Result<f64> {
    parisi_functional_with_error(m, p1, path, tilt, quad).map(|v| v.0)
}

pub fn parisi_functional_with_error(
    m: &ModelXi,
    p1: &SpinMeasure,
    path: &ParisiPath,
    tilt: &SymMatrix,
    quad: &QuadratureSpec,
) -> Result<(f64, f64)> {
    let (rec, err) = rsb_recursion_with_error(m, p1, path, tilt, quad)?;
    Ok((rec + 0.5 * path.integrate(|q| m.theta(q)), err))
}

/// `psi(mu)`: the cascade with increments of `mu` itself and innermost
/// weight `-mu(1) . tau tau^T / 2`.
pub fn psi_enriched(p1: &SpinMeasure, mu: &ParisiPath, quad: &QuadratureSpec) -> Result<f64> {
    if p1.dim() != mu.dim() {
        return Err(Error::DimensionMismatch {
            expected: p1.dim(),
            found: mu.dim(),
        });
    }
    let increments = mu.increments(|q| q.clone());
    let inner = mu.last().scale(-0.5);
    cascade_over_measure(p1, &increments, mu.exponents(), &inner, quad, "enriched recursion").map(|v| v.0)
}

/// The recursion applied to a scalar Gaussian field of covariance
/// `theta(pi(alpha ^ alpha'))` with linear innermost function.
pub fn gaussian_linear_recursion(m: &ModelXi, path: &ParisiPath, quad: &QuadratureSpec) -> Result<f64> {
    let thetas: Vec<f64> = path.values().iter().map(|q| m.theta(q)).collect();
    let mut prev = 0.0;
    let increments: Vec<SymMatrix> = thetas
        .iter()
        .map(|&t| {
            let c = SymMatrix::scalar((t - prev).max(0.0));
            prev = t;
            c
        })
        .collect();
    let levels = Levels::from_increments(&increments, path.exponents(), 1e-12, "linear surrogate")?;
    Ok(levels.evaluate(quad, &|h: &[f64]| h[0])?.0)
}

/// `sum_{l=1}^{k-1} s_l (theta(q_{l+1}) - theta(q_l)) / 2`.
pub fn gaussian_linear_closed_form(m: &ModelXi, path: &ParisiPath) -> f64 {
    let q = path.values();
    path.exponents()
        .iter()
        .enumerate()
        .map(|(i, s)| 0.5 * s * (m.theta(&q[i + 1]) - m.theta(&q[i])))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gh(n: usize) -> QuadratureSpec {
        QuadratureSpec::GaussHermite { nodes_per_dim: n }
    }

    /// `E_{z ~ N(0, v)} log cosh z` by the trapezoid rule on a wide grid.
    fn e_log_cosh(v: f64) -> f64 {
        if v == 0.0 {
            return 0.0;
        }
        let sd = v.sqrt();
        let n = 20_000;
        let (lo, hi) = (-12.0, 12.0);
        let h = (hi - lo) / n as f64;
        (0..=n)
            .map(|i| {
                let g: f64 = lo + i as f64 * h;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                let z = sd * g;
                let lc = z.abs() + (1.0 + (-2.0 * z.abs()).exp()).ln() - std::f64::consts::LN_2;
                w * h * lc * (-0.5 * g * g).exp() / (2.0 * std::f64::consts::PI).sqrt()
            })
            .sum()
    }

    #[test]
    fn ising_replica_symmetric_matches_direct_integral() {
        let beta: f64 = 0.7;
        let m = ModelXi::sk(beta);
        let p1 = SpinMeasure::ising();
        for q in [0.0, 0.2, 0.6, 1.0] {
            let path = ParisiPath::replica_symmetric(SymMatrix::scalar(q)).unwrap();
            let rec = rsb_recursion(&m, &p1, &path, &SymMatrix::zeros(1), &gh(60)).unwrap();
            let expected = e_log_cosh(2.0 * beta * beta * q) - beta * beta * q;
            assert!((rec - expected).abs() < 1e-9, "q={q}: {rec} vs {expected}");
        }
    }

    #[test]
    fn zero_path_gives_zero() {
        let m = ModelXi::sk(0.5);
        let p1 = SpinMeasure::ising();
        let v = parisi_functional(&m, &p1, &ParisiPath::zero(1), &SymMatrix::zeros(1), &gh(40)).unwrap();
        assert!(v.abs() < 1e-14);
    }

    #[test]
    fn degenerate_levels_collapse() {
        let m = ModelXi::sk(0.6);
        let p1 = SpinMeasure::ising();
        let q = SymMatrix::scalar(0.4);
        let rs = ParisiPath::replica_symmetric(q.clone()).unwrap();
        let deep = ParisiPath::new(vec![0.0, 0.3, 0.8, 1.0], vec![q.clone(), q.clone(), q]).unwrap();
        let z = SymMatrix::zeros(1);
        let a = parisi_functional(&m, &p1, &rs, &z, &gh(40)).unwrap();
        let b = parisi_functional(&m, &p1, &deep, &z, &gh(40)).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn refinement_invariance() {
        let m = ModelXi::sk(0.8);
        let p1 = SpinMeasure::ising();
        let path = ParisiPath::new(
            vec![0.0, 0.4, 1.0],
            vec![SymMatrix::scalar(0.2), SymMatrix::scalar(0.7)],
        )
        .unwrap();
        let z = SymMatrix::zeros(1);
        let a = parisi_functional(&m, &p1, &path, &z, &gh(40)).unwrap();
        for s in [0.1, 0.55, 0.9] {
            let b = parisi_functional(&m, &p1, &path.refine(s).unwrap(), &z, &gh(40)).unwrap();
            assert!((a - b).abs() < 1e-9, "split at {s}: {a} vs {b}");
        }
    }

    #[test]
    fn single_atom_closed_form() {
        let a2 = SymMatrix::from_row_major(2, &[1.0, 0.3, 0.3, 0.8]).unwrap();
        let m = ModelXi::single(2, a2).unwrap();
        let tau = vec![0.6, -0.5];
        let p1 = SpinMeasure::uniform(2, vec![tau.clone()]).unwrap();
        let q1 = SymMatrix::from_row_major(2, &[0.2, 0.05, 0.05, 0.1]).unwrap();
        let q2 = SymMatrix::from_row_major(2, &[0.5, 0.1, 0.1, 0.4]).unwrap();
        let path = ParisiPath::new(vec![0.0, 0.35, 1.0], vec![q1.clone(), q2.clone()]).unwrap();
        let tilt = SymMatrix::from_row_major(2, &[0.2, -0.1, -0.1, 0.3]).unwrap();
        let got = parisi_functional(&m, &p1, &path, &tilt, &gh(12)).unwrap();
        let c2 = &m.grad(&q2) - &m.grad(&q1);
        let expected = -0.5 * m.grad(&q2).quad_form(&tau)
            + tilt.quad_form(&tau)
            + 0.5 * 0.35 * c2.quad_form(&tau)
            + 0.5 * (0.35 * m.theta(&q1) + 0.65 * m.theta(&q2));
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn linear_surrogate_matches_closed_form() {
        let m = ModelXi::sk(1.1);
        let path = ParisiPath::new(
            vec![0.0, 0.2, 0.5, 1.0],
            vec![SymMatrix::scalar(0.1), SymMatrix::scalar(0.4), SymMatrix::scalar(0.9)],
        )
        .unwrap();
        let got = gaussian_linear_recursion(&m, &path, &gh(40)).unwrap();
        assert!((got - gaussian_linear_closed_form(&m, &path)).abs() < 1e-10);
    }

    #[test]
    fn psi_of_zero_path_is_zero() {
        let p1 = SpinMeasure::uniform(2, vec![vec![1.0, 0.0], vec![0.6, 0.8]]).unwrap();
        let v = psi_enriched(&p1, &ParisiPath::zero(2), &gh(20)).unwrap();
        assert!(v.abs() < 1e-14);
    }

    #[test]
    fn add_scaled_uses_common_refinement() {
        let a = ParisiPath::new(
            vec![0.0, 0.5, 1.0],
            vec![SymMatrix::scalar(1.0), SymMatrix::scalar(2.0)],
        )
        .unwrap();
        let b = ParisiPath::new(
            vec![0.0, 0.25, 1.0],
            vec![SymMatrix::scalar(0.0), SymMatrix::scalar(4.0)],
        )
        .unwrap();
        let c = a.add_scaled(&b, 0.5).unwrap();
        assert_eq!(c.breakpoints(), &[0.0, 0.25, 0.5, 1.0]);
        let vals: Vec<f64> = c.values().iter().map(|q| q.get(0, 0)).collect();
        assert_eq!(vals, vec![1.0, 3.0, 4.0]);
    }

    #[test]
    fn invalid_paths_rejected() {
        assert!(ParisiPath::new(vec![0.0, 0.5], vec![SymMatrix::scalar(0.1)]).is_err());
        assert!(ParisiPath::new(
            vec![0.0, 0.5, 1.0],
            vec![SymMatrix::scalar(0.5), SymMatrix::scalar(0.1)]
        )
        .is_err());
        assert!(ParisiPath::new(vec![0.0, 0.5, 0.5, 1.0], vec![SymMatrix::scalar(0.1); 3]).is_err());
    }
}
