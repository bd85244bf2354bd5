//! The covariance function `xi`, its gradient, `theta`, the convex conjugate
//! on the PSD cone, and the single-spin measure.
//!
//! `xi(a) = sum_p A_p . a^{(p)}` where `a^{(p)}` is the entrywise power.
//! Each `A_p` is PSD with nonnegative entries and `p` is 1 or even, which
//! makes `xi` convex on all of `R^{D x D}`, monotone on the cone, and
//! realizable as the covariance of an explicit Gaussian field.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::cone::{loewner_geq, psd_project, SymMatrix, PSD_TOL};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct XiTerm {
    pub p: u32,
    pub coef: SymMatrix,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelXi {
    dim: usize,
    terms: Vec<XiTerm>,
}

impl ModelXi {
    pub fn new(dim: usize, terms: Vec<XiTerm>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidModel("dimension must be positive".into()));
        }
        for (i, t) in terms.iter().enumerate() {
            if t.coef.dim() != dim {
                return Err(Error::InvalidModel(format!(
                    "term {i}: coefficient is {}x{}, expected {dim}x{dim}",
                    t.coef.dim(),
                    t.coef.dim()
                )));
            }
            if t.p == 0 || (t.p != 1 && t.p % 2 != 0) {
                return Err(Error::InvalidModel(format!(
                    "term {i}: power p={} must be 1 or even",
                    t.p
                )));
            }
            if let Some(v) = t.coef.to_row_major().into_iter().find(|v| *v < 0.0) {
                return Err(Error::InvalidModel(format!(
                    "term {i}: coefficient entries must be nonnegative, found {v}"
                )));
            }
            let min = t.coef.min_eigenvalue()?;
            if min < -PSD_TOL {
                return Err(Error::InvalidModel(format!(
                    "term {i}: coefficient must be PSD, min eigenvalue {min:e}"
                )));
            }
        }
        Ok(ModelXi { dim, terms })
    }

    /// `xi(q) = beta^2 q^2` in dimension one.
    pub fn sk(beta: f64) -> Self {
        ModelXi {
            dim: 1,
            terms: vec![XiTerm {
                p: 2,
                coef: SymMatrix::scalar(beta * beta),
            }],
        }
    }

    /// Single term `A . a^{(p)}`.
    pub fn single(p: u32, coef: SymMatrix) -> Result<Self> {
        let dim = coef.dim();
        Self::new(dim, vec![XiTerm { p, coef }])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[XiTerm] {
        &self.terms
    }

    /// Whether some term has `p >= 2` (needed for a finite conjugate).
    pub fn is_coercive(&self) -> bool {
        self.terms.iter().any(|t| t.p >= 2 && t.coef.max_abs() > 0.0)
    }

    /// True when every coefficient vanishes.
    pub fn is_trivial(&self) -> bool {
        self.terms.iter().all(|t| t.coef.max_abs() == 0.0)
    }

    /// `xi` on a general square matrix (overlaps `sigma sigma'^T / N` are
    /// not symmetric).
    pub fn eval_general(&self, a: &DMatrix<f64>) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for t in &self.terms {
            let c = t.coef.as_matrix();
            for i in 0..d {
                for j in 0..d {
                    acc += c[(i, j)] * a[(i, j)].powi(t.p as i32);
                }
            }
        }
        acc
    }

    pub fn eval(&self, a: &SymMatrix) -> f64 {
        self.eval_general(a.as_matrix())
    }

    /// Entrywise `sum_p p A_p a^{(p-1)}`.
    pub fn grad_general(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.dim;
        let mut out = DMatrix::zeros(d, d);
        for t in &self.terms {
            let c = t.coef.as_matrix();
            for i in 0..d {
                for j in 0..d {
                    let pow = if t.p == 1 { 1.0 } else { a[(i, j)].powi(t.p as i32 - 1) };
                    out[(i, j)] += t.p as f64 * c[(i, j)] * pow;
                }
            }
        }
        out
    }

    pub fn grad(&self, a: &SymMatrix) -> SymMatrix {
        SymMatrix::symmetrize(self.grad_general(a.as_matrix()))
    }

    /// `theta(a) = a . grad xi(a) - xi(a) = sum_p (p - 1) A_p . a^{(p)}`.
    pub fn theta_general(&self, a: &DMatrix<f64>) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for t in self.terms.iter().filter(|t| t.p > 1) {
            let c = t.coef.as_matrix();
            let w = (t.p - 1) as f64;
            for i in 0..d {
                for j in 0..d {
                    acc += w * c[(i, j)] * a[(i, j)].powi(t.p as i32);
                }
            }
        }
        acc
    }

    pub fn theta(&self, a: &SymMatrix) -> f64 {
        self.theta_general(a.as_matrix())
    }

    /// `sup_{x >= 0} { x . y - xi(x) }` by projected gradient ascent with
    /// backtracking.
    pub fn conjugate(&self, y: &SymMatrix, opts: &ConjugateOptions) -> Result<ConjugateResult> {
        if y.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: y.dim(),
            });
        }
        if !self.is_coercive() {
            return Err(Error::UnsupportedModel(
                "convex conjugate needs a term with p >= 2".into(),
            ));
        }
        let lam2 = self
            .terms
            .iter()
            .filter(|t| t.p == 2)
            .map(|t| t.coef.max_eigenvalue())
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(1.0_f64, f64::max);
        let objective = |x: &SymMatrix| x.dot(y) - self.eval(x);
        let mut x = psd_project(y)?.scale(1.0 / (2.0 * lam2));
        let mut fx = objective(&x);
        let mut step = 1.0 / (2.0 * lam2);
        let scale = 1.0_f64.max(y.norm());
        let mut converged = false;
        let mut iterations = 0;
        while iterations < opts.max_iter {
            iterations += 1;
            let g = y - &self.grad(&x);
            let mut accepted = None;
            for _ in 0..60 {
                let cand = psd_project(&(&x + &g.scale(step)))?;
                let d = &cand - &x;
                let fc = objective(&cand);
                if fc >= fx + g.dot(&d) - d.dot(&d) / (2.0 * step) - 1e-15 * fx.abs() {
                    accepted = Some((cand, fc, d.norm()));
                    break;
                }
                step *= 0.5;
            }
            let Some((cand, fc, dn)) = accepted else {
                break;
            };
            let mapping = dn / step;
            x = cand;
            fx = fc;
            if mapping < opts.grad_tol * scale {
                converged = true;
                break;
            }
            step *= 1.5;
        }
        Ok(ConjugateResult {
            value: fx,
            argmax: x,
            converged,
            iterations,
        })
    }

    /// Randomized check of the standing assumptions: monotonicity of `xi`
    /// and `grad xi` along the Loewner order on the cone, midpoint
    /// convexity, and transpose invariance.
    pub fn validate_assumptions(&self, trials: usize, seed: u64) -> Result<AssumptionReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.dim;
        let mut report = AssumptionReport::default();
        for _ in 0..trials {
            let b = random_psd(&mut rng, d, 1.0);
            let c = random_psd(&mut rng, d, 0.5);
            let a = &b + &c;
            tally(&mut report.monotone, self.eval(&a) >= self.eval(&b) - 1e-12);
            let ga = self.grad(&a);
            let gb = self.grad(&b);
            let tol = 1e-10 * (1.0 + ga.norm());
            tally(&mut report.gradient_order, loewner_geq(&ga, &gb, tol)?);

            let u = random_sym(&mut rng, d);
            let v = random_sym(&mut rng, d);
            let mid = (&u + &v).scale(0.5);
            let lhs = self.eval(&mid);
            let rhs = 0.5 * (self.eval(&u) + self.eval(&v));
            tally(&mut report.convexity, lhs <= rhs + 1e-12 * (1.0 + rhs.abs()));

            let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x1 = self.eval_general(&g);
            let x2 = self.eval_general(&g.transpose());
            tally(&mut report.transpose, (x1 - x2).abs() <= 1e-12 * (1.0 + x1.abs()));
        }
        Ok(report)
    }
}

fn tally(c: &mut CheckCount, ok: bool) {
    if ok {
        c.pass += 1;
    } else {
        c.fail += 1;
    }
}

pub(crate) fn random_sym(rng: &mut impl Rng, d: usize) -> SymMatrix {
    SymMatrix::from_fn(d, |_, _| rng.random_range(-1.0..1.0))
}

pub(crate) fn random_psd(rng: &mut impl Rng, d: usize, scale: f64) -> SymMatrix {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let m = SymMatrix::symmetrize(&g * g.transpose());
    let n = m.norm().max(1e-12);
    m.scale(scale * rng.random_range(0.0..1.0) / n)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConjugateOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for ConjugateOptions {
    fn default() -> Self {
        ConjugateOptions {
            max_iter: 10_000,
            grad_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConjugateResult {
    pub value: f64,
    pub argmax: SymMatrix,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, Default, Serialize, PartialEq, Eq)]
pub struct CheckCount {
    pub pass: usize,
    pub fail: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct AssumptionReport {
    pub monotone: CheckCount,
    pub gradient_order: CheckCount,
    pub convexity: CheckCount,
    pub transpose: CheckCount,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        [self.monotone, self.gradient_order, self.convexity, self.transpose]
            .iter()
            .all(|c| c.fail == 0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Atom {
    pub tau: Vec<f64>,
    pub weight: f64,
}

/// Finitely supported probability measure on the unit ball of `R^D`.
#[derive(Debug, Clone, Serialize)]
pub struct SpinMeasure {
    dim: usize,
    atoms: Vec<Atom>,
}

impl SpinMeasure {
    pub fn new(dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        let mut total = 0.0;
        for (i, a) in atoms.iter().enumerate() {
            if a.tau.len() != dim {
                return Err(Error::InvalidMeasure(format!(
                    "atom {i}: vector has length {}, expected {dim}",
                    a.tau.len()
                )));
            }
            if !(a.weight > 0.0) || !a.weight.is_finite() {
                return Err(Error::InvalidMeasure(format!(
                    "atom {i}: weight {} must be positive",
                    a.weight
                )));
            }
            let norm = a.tau.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1.0 + 1e-12 {
                return Err(Error::InvalidMeasure(format!("atom {i}: |tau| = {norm} exceeds 1")));
            }
            total += a.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, expected 1")));
        }
        Ok(SpinMeasure { dim, atoms })
    }

    /// Uniform measure on the given vectors.
    pub fn uniform(dim: usize, taus: Vec<Vec<f64>>) -> Result<Self> {
        let w = 1.0 / taus.len().max(1) as f64;
        Self::new(dim, taus.into_iter().map(|tau| Atom { tau, weight: w }).collect())
    }

    /// `(delta_{+1} + delta_{-1}) / 2`.
    pub fn ising() -> Self {
        SpinMeasure {
            dim: 1,
            atoms: vec![
                Atom {
                    tau: vec![1.0],
                    weight: 0.5,
                },
                Atom {
                    tau: vec![-1.0],
                    weight: 0.5,
                },
            ],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn outer(&self, i: usize) -> SymMatrix {
        SymMatrix::outer(&self.atoms[i].tau)
    }

    /// `log sum_tau w_tau exp(x . tau tau^T)`.
    pub fn log_tilted_mass(&self, x: &SymMatrix) -> f64 {
        let terms: Vec<f64> = self.atoms.iter().map(|a| a.weight.ln() + x.quad_form(&a.tau)).collect();
        crate::logsumexp(&terms)
    }

    pub fn max_trace(&self) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.tau.iter().map(|v| v * v).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Distance from `q` to `conv{tau tau^T}`, by projected gradient over the
    /// simplex of atom weights.
    pub fn hull_distance(&self, q: &SymMatrix) -> f64 {
        let outers: Vec<SymMatrix> = (0..self.len()).map(|i| self.outer(i)).collect();
        let n = outers.len();
        let mut lam = vec![1.0 / n as f64; n];
        let lip: f64 = outers.iter().map(|o| o.dot(o)).sum::<f64>().max(1e-12);
        let step = 1.0 / lip;
        let combo = |lam: &[f64]| {
            let mut m = SymMatrix::zeros(self.dim);
            for (o, l) in outers.iter().zip(lam) {
                m = &m + &o.scale(*l);
            }
            m
        };
        for _ in 0..20_000 {
            let r = &combo(&lam) - q;
            let grad: Vec<f64> = outers.iter().map(|o| o.dot(&r)).collect();
            let next: Vec<f64> = lam.iter().zip(&grad).map(|(l, g)| l - step * g).collect();
            let next = project_simplex(&next);
            let moved: f64 = next.iter().zip(&lam).map(|(a, b)| (a - b).abs()).sum();
            lam = next;
            if moved < 1e-15 {
                break;
            }
        }
        (&combo(&lam) - q).norm()
    }
}

fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}
