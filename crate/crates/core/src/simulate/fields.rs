//! Enumerated configuration spaces and Gaussian fields indexed by them.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::cone::{gram_factor, SymMatrix};
use crate::error::{Error, Result};
use crate::model::{ModelXi, SpinMeasure};

/// Default cap on `|supp P_1|^N`.
pub const ENUMERATION_BUDGET: usize = 1 << 16;

/// Clipped negative eigenvalues above this (relative to `max(1, lambda_max)`)
/// abort a covariance factorization.
pub const CLIP_ABORT: f64 = 1e-6;

/// All configurations `sigma in (supp P_1)^N` with their `P_N` log-weights.
#[derive(Debug, Clone)]
pub struct ConfigSpace {
    n: usize,
    dim: usize,
    atom_count: usize,
    spins: Vec<DMatrix<f64>>,
    log_weights: Vec<f64>,
    self_grams: Vec<SymMatrix>,
}

impl ConfigSpace {
    pub fn new(p1: &SpinMeasure, n: usize) -> Result<Self> {
        Self::with_budget(p1, n, ENUMERATION_BUDGET)
    }

    pub fn with_budget(p1: &SpinMeasure, n: usize, budget: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("N must be positive".into()));
        }
        let a = p1.len();
        let total = a.checked_pow(n as u32).filter(|&t| t <= budget).ok_or_else(|| {
            Error::InvalidArgument(format!("{a}^{n} configurations exceed the enumeration budget {budget}"))
        })?;
        let dim = p1.dim();
        let mut spins = Vec::with_capacity(total);
        let mut log_weights = Vec::with_capacity(total);
        let mut self_grams = Vec::with_capacity(total);
        for c in 0..total {
            let mut s = DMatrix::zeros(dim, n);
            let mut lw = 0.0;
            let mut rem = c;
            for i in 0..n {
                let atom = &p1.atoms()[rem % a];
                rem /= a;
                lw += atom.weight.ln();
                for k in 0..dim {
                    s[(k, i)] = atom.tau[k];
                }
            }
            self_grams.push(SymMatrix::symmetrize(&s * s.transpose()));
            spins.push(s);
            log_weights.push(lw);
        }
        Ok(ConfigSpace {
            n,
            dim,
            atom_count: a,
            spins,
            log_weights,
            self_grams,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    /// `D x N` matrix whose columns are the spins of configuration `c`.
    pub fn spins(&self, c: usize) -> &DMatrix<f64> {
        &self.spins[c]
    }

    /// Index into the atoms of `P_1` of spin `i` in configuration `c`.
    pub fn atom_index(&self, c: usize, i: usize) -> usize {
        (c / self.atom_count.pow(i as u32)) % self.atom_count
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// `sigma sigma^T` (not divided by `N`).
    pub fn self_gram(&self, c: usize) -> &SymMatrix {
        &self.self_grams[c]
    }

    /// `R^{1,1} = sigma sigma^T / N`.
    pub fn self_overlap(&self, c: usize) -> SymMatrix {
        self.self_grams[c].scale(1.0 / self.n as f64)
    }

    /// `sigma sigma'^T` (not divided by `N`).
    pub fn gram(&self, c: usize, c2: usize) -> DMatrix<f64> {
        &self.spins[c] * self.spins[c2].transpose()
    }

    /// `n x n` kernel `f(sigma sigma'^T)` over all pairs.
    pub(crate) fn scalar_kernel(&self, f: impl Fn(&DMatrix<f64>) -> f64) -> DMatrix<f64> {
        let n = self.len();
        let mut k = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let v = f(&self.gram(a, b));
                k[(a, b)] = v;
                k[(b, a)] = v;
            }
        }
        k
    }

    /// `nD x nD` kernel with blocks `f(sigma sigma'^T)` (a `D x D` matrix);
    /// row `c * D + k` is component `k` at configuration `c`.
    pub(crate) fn vector_kernel(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> DMatrix<f64> {
        let (n, d) = (self.len(), self.dim);
        let mut k = DMatrix::zeros(n * d, n * d);
        for a in 0..n {
            for b in a..n {
                let blk = f(&self.gram(a, b));
                for i in 0..d {
                    for j in 0..d {
                        k[(a * d + i, b * d + j)] = blk[(i, j)];
                        k[(b * d + j, a * d + i)] = blk[(i, j)];
                    }
                }
            }
        }
        k
    }
}

/// Which process a [`DisorderSample`] realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    /// `E H H' = N xi(sigma sigma'^T / N)`.
    Hamiltonian,
    /// `E H H' = (N + 1) xi(sigma sigma'^T / (N + 1))`.
    Cavity,
    /// `R^D`-valued, `E Z Z'^T = grad xi(sigma sigma'^T / N)`.
    CavityField,
    /// `E Y Y' = theta(sigma sigma'^T / N)`.
    CavityTheta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMethod {
    CovarianceFactor,
    ExplicitTensor,
}

/// One realization of a Gaussian field over a configuration space.
#[derive(Debug, Clone, Serialize)]
pub struct DisorderSample {
    pub seed: u64,
    pub kind: FieldKind,
    pub method: SamplingMethod,
    /// Components per configuration (1, or `D` for the cavity field).
    pub components: usize,
    /// `values[c * components + k]`.
    pub values: Vec<f64>,
    /// Largest eigenvalue clipped while factoring the covariance.
    pub max_clip: f64,
}

/// Covariance kernel of a field kind over `cs`.
pub fn field_kernel(m: &ModelXi, cs: &ConfigSpace, kind: FieldKind) -> DMatrix<f64> {
    let n = cs.n() as f64;
    match kind {
        FieldKind::Hamiltonian => cs.scalar_kernel(|g| n * m.eval_general(&(g / n))),
        FieldKind::Cavity => cs.scalar_kernel(|g| (n + 1.0) * m.eval_general(&(g / (n + 1.0)))),
        FieldKind::CavityField => cs.vector_kernel(|g| m.grad_general(&(g / n))),
        FieldKind::CavityTheta => cs.scalar_kernel(|g| m.theta_general(&(g / n))),
    }
}

/// A centered Gaussian vector with a fixed low-rank covariance factor.
#[derive(Debug, Clone)]
pub struct GaussianField {
    factor: DMatrix<f64>,
    components: usize,
    max_clip: f64,
}

impl GaussianField {
    pub fn from_kernel(kernel: &DMatrix<f64>, components: usize, context: &str) -> Result<Self> {
        let g = gram_factor(kernel, CLIP_ABORT, context)?;
        Ok(GaussianField {
            factor: g.factor,
            components,
            max_clip: g.max_clip,
        })
    }

    pub fn new(m: &ModelXi, cs: &ConfigSpace, kind: FieldKind) -> Result<Self> {
        let comps = if kind == FieldKind::CavityField { cs.dim() } else { 1 };
        Self::from_kernel(&field_kernel(m, cs, kind), comps, &format!("{kind:?} covariance"))
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn max_clip(&self) -> f64 {
        self.max_clip
    }

    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let g = DVector::from_fn(self.factor.ncols(), |_, _| rng.sample(StandardNormal));
        (&self.factor * g).data.into()
    }
}

/// Samples one field realization.
pub fn sample_disorder(
    m: &ModelXi,
    cs: &ConfigSpace,
    kind: FieldKind,
    method: SamplingMethod,
    seed: u64,
) -> Result<DisorderSample> {
    let mut rng = crate::substream(seed, 0);
    match method {
        SamplingMethod::CovarianceFactor => {
            let field = GaussianField::new(m, cs, kind)?;
            Ok(DisorderSample {
                seed,
                kind,
                method,
                components: field.components(),
                values: field.sample(&mut rng),
                max_clip: field.max_clip(),
            })
        }
        SamplingMethod::ExplicitTensor => {
            let scale = match kind {
                FieldKind::Hamiltonian => cs.n() as f64,
                FieldKind::Cavity => cs.n() as f64 + 1.0,
                _ => {
                    return Err(Error::InvalidArgument(
                        "explicit tensors realize only the Hamiltonian kinds".into(),
                    ))
                }
            };
            Ok(DisorderSample {
                seed,
                kind,
                method,
                components: 1,
                values: TensorHamiltonian::new(m, scale)?.sample(cs, &mut rng),
                max_clip: 0.0,
            })
        }
    }
}

/// `H(sigma) = sum_p scale^((1-p)/2) sum_m sum_{j_1..j_p} g^m_j sum_k v_{m,k}
/// prod_i sigma_{k, j_i}` with `A_p = sum_m v_m v_m^T`; its covariance is
/// `scale * xi(sigma sigma'^T / scale)`.
pub struct TensorHamiltonian {
    scale: f64,
    terms: Vec<(u32, Vec<Vec<f64>>)>,
}

impl TensorHamiltonian {
    pub fn new(m: &ModelXi, scale: f64) -> Result<Self> {
        let mut terms = Vec::new();
        for t in m.terms() {
            let eig = t.coef.eigen()?;
            let lmax = eig.eigenvalues.max().max(0.0);
            let vs: Vec<Vec<f64>> = (0..m.dim())
                .filter(|&i| eig.eigenvalues[i] > 1e-14 * lmax.max(1e-300))
                .map(|i| {
                    let s = eig.eigenvalues[i].sqrt();
                    (0..m.dim()).map(|k| s * eig.eigenvectors[(k, i)]).collect()
                })
                .collect();
            terms.push((t.p, vs));
        }
        Ok(TensorHamiltonian { scale, terms })
    }

    pub fn sample<R: Rng>(&self, cs: &ConfigSpace, rng: &mut R) -> Vec<f64> {
        let n = cs.n();
        let mut h = vec![0.0; cs.len()];
        for (p, vs) in &self.terms {
            let p = *p as usize;
            let count = n.pow(p as u32);
            let norm = self.scale.powf((1.0 - p as f64) / 2.0);
            for v in vs {
                let g: Vec<f64> = (0..count).map(|_| rng.sample(StandardNormal)).collect();
                for (c, hc) in h.iter_mut().enumerate() {
                    let s = cs.spins(c);
                    let mut acc = 0.0;
                    for (idx, gj) in g.iter().enumerate() {
                        let mut sum_k = 0.0;
                        for (k, vk) in v.iter().enumerate() {
                            let mut prod = *vk;
                            let mut rem = idx;
                            for _ in 0..p {
                                prod *= s[(k, rem % n)];
                                rem /= n;
                            }
                            sum_k += prod;
                        }
                        acc += gj * sum_k;
                    }
                    *hc += norm * acc;
                }
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ising_single_spin_covariance() {
        let beta: f64 = 0.7;
        let m = ModelXi::sk(beta);
        let cs = ConfigSpace::new(&SpinMeasure::ising(), 1).unwrap();
        let k = field_kernel(&m, &cs, FieldKind::Hamiltonian);
        for v in k.iter() {
            assert!((v - beta * beta).abs() < 1e-15);
        }
    }

    #[test]
    fn budget_is_enforced() {
        assert!(ConfigSpace::with_budget(&SpinMeasure::ising(), 10, 512).is_err());
        assert_eq!(ConfigSpace::new(&SpinMeasure::ising(), 10).unwrap().len(), 1024);
    }

    #[test]
    fn atom_indices_decode_configurations() {
        let p1 = SpinMeasure::uniform(2, vec![vec![1.0, 0.0], vec![0.6, 0.8], vec![0.0, -1.0]]).unwrap();
        let cs = ConfigSpace::new(&p1, 3).unwrap();
        for c in 0..cs.len() {
            for i in 0..3 {
                let a = cs.atom_index(c, i);
                assert_eq!(cs.spins(c)[(0, i)], p1.atoms()[a].tau[0]);
            }
        }
        let total: f64 = cs.log_weights().iter().map(|l| l.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cavity_vector_kernel_is_factorable() {
        let a = SymMatrix::from_row_major(2, &[1.0, 0.5, 0.5, 1.0]).unwrap();
        let m = ModelXi::single(2, a).unwrap();
        let p1 = SpinMeasure::uniform(2, vec![vec![1.0, 0.0], vec![0.6, 0.8]]).unwrap();
        let cs = ConfigSpace::new(&p1, 4).unwrap();
        let f = GaussianField::new(&m, &cs, FieldKind::CavityField).unwrap();
        assert!(f.max_clip() < 1e-9);
        assert_eq!(f.sample(&mut crate::substream(1, 0)).len(), cs.len() * 2);
    }
}
