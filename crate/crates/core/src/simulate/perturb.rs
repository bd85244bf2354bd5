//! The perturbation Hamiltonian, overlap statistics under the perturbed
//! Gibbs measure, and the cavity difference.
//!
//! All Gaussian parts of a perturbed Hamiltonian (the base field and every
//! `H^h`) are independent, so their sum is one Gaussian process whose kernel
//! is the weighted sum of the individual kernels. It is factored once per
//! draw of `x`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{gibbs_probs, log_partition, ConfigSpace, FieldKind, GaussianField};
use crate::cascade::{draw_leaf, map_indices};
use crate::cone::{OrthoBasis, SymMatrix};
use crate::error::{Error, Result};
use crate::model::{ModelXi, SpinMeasure};
use crate::{logsumexp, substream, Estimate};

/// One `H^h` with covariance `N (a . R^{.h2})^{h3}` and weight `c`.
#[derive(Debug, Clone, Serialize)]
pub struct PerturbationTerm {
    pub h: [u32; 3],
    pub a: SymMatrix,
    pub c: f64,
}

/// Truncated perturbation: all `h` with `h1 >= 1` and `|h| <= cap`.
#[derive(Debug, Clone, Serialize)]
pub struct PerturbationSpec {
    pub dim: usize,
    pub cap: u32,
    /// The perturbation enters as `N^{-exponent} H^pert`.
    pub exponent: f64,
    pub terms: Vec<PerturbationTerm>,
}

impl PerturbationSpec {
    pub const DEFAULT_CAP: u32 = 6;
    pub const DEFAULT_EXPONENT: f64 = 1.0 / 16.0;

    pub fn new(dim: usize) -> Self {
        Self::with_cap(dim, Self::DEFAULT_CAP, Self::DEFAULT_EXPONENT)
    }

    /// Terms ordered by `h1`, then `h2`, then `h3`.
    pub fn with_cap(dim: usize, cap: u32, exponent: f64) -> Self {
        let mut terms = Vec::new();
        for h1 in 1..=cap {
            for h2 in 0..=(cap - h1) {
                for h3 in 0..=(cap - h1 - h2) {
                    let a = rational_psd(dim, h1 as usize);
                    let bound = if h3 == 0 {
                        1.0
                    } else if h2 == 0 {
                        a.as_matrix().sum().abs().powi(h3 as i32)
                    } else {
                        a.norm().powi(h3 as i32)
                    };
                    let c = 0.5f64.powi((h1 + h2 + h3) as i32) / bound.max(1.0).sqrt();
                    terms.push(PerturbationTerm { h: [h1, h2, h3], a, c });
                }
            }
        }
        PerturbationSpec {
            dim,
            cap,
            exponent,
            terms,
        }
    }

    /// Number of self-overlap coordinates `x_i`.
    pub fn basis_len(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    /// `N^{-exponent}`.
    pub fn scale(&self, n: usize) -> f64 {
        (n as f64).powf(-self.exponent)
    }
}

/// The `n`-th (1-based) matrix of the rational PSD enumeration.
///
/// The base list, of length `L`, holds the unit diagonals `E_kk`, then
/// `v v^T / |v|^2` for `v` in `{-1, 0, 1}^D` with at least two nonzeros and
/// first nonzero `+1` (lexicographic in `-1 < 0 < 1`), then `diag(p) / 2` for
/// nonzero `p` in `{0, 1/2}^D`. Entry `n` is base entry `(n - 1) mod L`
/// scaled by `2^{-floor((n - 1) / L)}`. Every entry is PSD with rational
/// entries and Frobenius norm at most 1.
pub fn rational_psd(dim: usize, n: usize) -> SymMatrix {
    assert!(n >= 1, "the enumeration is 1-based");
    let base = rational_base(dim);
    let len = base.len();
    base[(n - 1) % len].scale(0.5f64.powi(((n - 1) / len) as i32))
}

fn rational_base(dim: usize) -> Vec<SymMatrix> {
    let mut out: Vec<SymMatrix> = (0..dim)
        .map(|k| SymMatrix::from_fn(dim, |i, j| if i == k && j == k { 1.0 } else { 0.0 }))
        .collect();
    for code in 0..3usize.pow(dim as u32) {
        let v: Vec<f64> = (0..dim)
            .map(|k| (code / 3usize.pow((dim - 1 - k) as u32)) % 3)
            .map(|t| t as f64 - 1.0)
            .collect();
        let nonzero = v.iter().filter(|x| **x != 0.0).count();
        if nonzero >= 2 && v.iter().find(|x| **x != 0.0) == Some(&1.0) {
            out.push(SymMatrix::outer(&v).scale(1.0 / nonzero as f64));
        }
    }
    for mask in 1..(1usize << dim) {
        let p: Vec<f64> = (0..dim).map(|k| if mask >> k & 1 == 1 { 0.25 } else { 0.0 }).collect();
        out.push(SymMatrix::diag(&p));
    }
    out
}

/// Perturbation parameters `x_h` (one per term) and `x_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationDraw {
    pub x_h: Vec<f64>,
    pub x_i: Vec<f64>,
}

impl PerturbationDraw {
    /// Coordinates i.i.d. uniform on `[1, 2]`.
    pub fn sample<R: Rng>(spec: &PerturbationSpec, rng: &mut R) -> Self {
        let mut u = |len: usize| (0..len).map(|_| rng.random_range(1.0..2.0)).collect();
        PerturbationDraw {
            x_h: u(spec.terms.len()),
            x_i: u(spec.basis_len()),
        }
    }

    /// Switches the perturbation off.
    pub fn zeros(spec: &PerturbationSpec) -> Self {
        PerturbationDraw {
            x_h: vec![0.0; spec.terms.len()],
            x_i: vec![0.0; spec.basis_len()],
        }
    }

    fn check(&self, spec: &PerturbationSpec) -> Result<()> {
        if self.x_h.len() != spec.terms.len() || self.x_i.len() != spec.basis_len() {
            return Err(Error::InvalidArgument(format!(
                "perturbation draw has {} + {} coordinates, spec needs {} + {}",
                self.x_h.len(),
                self.x_i.len(),
                spec.terms.len(),
                spec.basis_len()
            )));
        }
        Ok(())
    }
}

/// `(a . r^{.h2})^{h3}`.
fn overlap_h(a: &SymMatrix, h2: u32, h3: u32, r: &DMatrix<f64>) -> f64 {
    let d = a.dim();
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += a.get(i, j) * r[(i, j)].powi(h2 as i32);
        }
    }
    s.powi(h3 as i32)
}

/// Gaussian part and deterministic drift of a perturbed Hamiltonian.
struct PerturbedSystem {
    field: GaussianField,
    drift: Vec<f64>,
}

impl PerturbedSystem {
    /// With `cavity`, the base field has kernel `(N + 1) xi(G / (N + 1))`
    /// and the correction uses `N + 1`; otherwise both use `N`.
    fn new(
        m: &ModelXi,
        cs: &ConfigSpace,
        spec: &PerturbationSpec,
        draw: &PerturbationDraw,
        cavity: bool,
    ) -> Result<Self> {
        if spec.dim != cs.dim() || m.dim() != cs.dim() {
            return Err(Error::DimensionMismatch {
                expected: cs.dim(),
                found: if spec.dim != cs.dim() { spec.dim } else { m.dim() },
            });
        }
        draw.check(spec)?;
        let n = cs.n() as f64;
        let base_n = if cavity { n + 1.0 } else { n };
        let s = spec.scale(cs.n());
        let active: Vec<(&PerturbationTerm, f64)> = spec
            .terms
            .iter()
            .zip(&draw.x_h)
            .filter(|(_, x)| **x != 0.0)
            .map(|(t, x)| (t, s * s * x * x * t.c * t.c * n))
            .collect();
        let kernel = cs.scalar_kernel(|g| {
            let mut v = base_n * m.eval_general(&(g / base_n));
            if !active.is_empty() {
                let r = g / n;
                for (t, w) in &active {
                    v += w * overlap_h(&t.a, t.h[1], t.h[2], &r);
                }
            }
            v
        });
        let field = GaussianField::from_kernel(&kernel, 1, "perturbed covariance")?;
        let basis = OrthoBasis::canonical(cs.dim());
        let tilt = basis.from_coords(&draw.x_i).scale(s);
        let drift = (0..cs.len())
            .map(|c| {
                let g = cs.self_gram(c);
                -0.5 * base_n * m.eval(&g.scale(1.0 / base_n)) + tilt.dot(g)
            })
            .collect();
        Ok(PerturbedSystem { field, drift })
    }

    fn log_probs<R: Rng>(&self, cs: &ConfigSpace, rng: &mut R) -> Vec<f64> {
        let h = self.field.sample(rng);
        gibbs_probs(cs, |c| h[c] + self.drift[c])
            .iter()
            .map(|p| p.ln())
            .collect()
    }
}

/// `F^x_N = (1/N) E log int exp(H_N - N xi(R^{1,1}) / 2 + N^{-e} H^pert) dP_N`.
pub fn perturbed_free_energy(
    m: &ModelXi,
    cs: &ConfigSpace,
    spec: &PerturbationSpec,
    draw: &PerturbationDraw,
    reps: usize,
    seed: u64,
) -> Result<Estimate> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be positive".into()));
    }
    let sys = PerturbedSystem::new(m, cs, spec, draw, false)?;
    let vals = map_indices(reps, |r| {
        let h = sys.field.sample(&mut substream(seed, r as u64));
        log_partition(cs, |c| h[c] + sys.drift[c])
    });
    Ok(Estimate::from_samples(&vals))
}

/// Overlaps `R^{l,l'} = sigma^l (sigma^{l'})^T / N` of a replica tuple.
#[derive(Debug, Clone)]
pub struct OverlapArray {
    n: usize,
    entries: Vec<DMatrix<f64>>,
}

impl OverlapArray {
    /// Fails if some `|R^{l,l'}|` exceeds the largest self-overlap norm
    /// available in `cs`, which Cauchy-Schwarz forbids.
    pub fn new(cs: &ConfigSpace, configs: &[usize]) -> Result<Self> {
        let n = configs.len();
        let nf = cs.n() as f64;
        let bound = (0..cs.len()).map(|c| cs.self_gram(c).trace() / nf).fold(0.0, f64::max);
        let mut entries = Vec::with_capacity(n * n);
        for &a in configs {
            for &b in configs {
                let r = cs.gram(a, b) / nf;
                if r.norm() > bound + 1e-9 {
                    return Err(Error::numerical(
                        "overlap array",
                        format!("|R| = {} exceeds the bound {bound}", r.norm()),
                    ));
                }
                entries.push(r);
            }
        }
        Ok(OverlapArray { n, entries })
    }

    pub fn replicas(&self) -> usize {
        self.n
    }

    /// `R^{l,l'}`, zero-based.
    pub fn get(&self, l: usize, lp: usize) -> &DMatrix<f64> {
        &self.entries[l * self.n + lp]
    }
}

/// A Ghirlanda-Guerra test: `f` is the product of the overlap entries
/// `R^{l,l'}_{k,k'}` listed as zero-based `[l, l', k, k']` with `l, l' < n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSpec {
    pub factors: Vec<[usize; 4]>,
    pub n: usize,
    /// `(h1, h2, h3)` with `h1 >= 1`.
    pub h: [u32; 3],
}

impl DeltaSpec {
    fn validate(&self, dim: usize) -> Result<()> {
        if self.n < 2 || self.h[0] == 0 {
            return Err(Error::InvalidArgument("Delta needs n >= 2 and h1 >= 1".into()));
        }
        if self
            .factors
            .iter()
            .any(|f| f[0] >= self.n || f[1] >= self.n || f[2] >= dim || f[3] >= dim)
        {
            return Err(Error::InvalidArgument("Delta factor index out of range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbationStats {
    /// `E_x E <|R^{1,1} - E <R^{1,1}>_x|>_x`, with `E <R^{1,1}>_x` replaced
    /// by its replicate average for each `x`.
    pub concentration: Estimate,
    /// `E_x Delta^x(f, n, h)` per requested spec; the error is taken across
    /// `x` draws.
    pub deltas: Vec<Estimate>,
    pub x_draws: usize,
    pub reps: usize,
}

/// Overlap statistics under the perturbed cavity Gibbs measure, for
/// `x_draws` draws of `x`, `reps` disorder replicates per draw, and
/// `n_replicas` i.i.d. replica tuples per replicate.
#[allow(clippy::too_many_arguments)]
pub fn perturbed_gibbs_stats(
    m: &ModelXi,
    cs: &ConfigSpace,
    spec: &PerturbationSpec,
    deltas: &[DeltaSpec],
    x_draws: usize,
    reps: usize,
    n_replicas: usize,
    seed: u64,
) -> Result<PerturbationStats> {
    if x_draws == 0 || reps < 2 {
        return Err(Error::InvalidArgument("need x_draws >= 1 and reps >= 2".into()));
    }
    for d in deltas {
        d.validate(cs.dim())?;
    }
    if !deltas.is_empty() && n_replicas == 0 {
        return Err(Error::InvalidArgument("Delta statistics need n_replicas >= 1".into()));
    }
    let r11: Vec<SymMatrix> = (0..cs.len()).map(|c| cs.self_overlap(c)).collect();
    let a_h: Vec<SymMatrix> = deltas.iter().map(|d| rational_psd(cs.dim(), d.h[0] as usize)).collect();

    let mut spread = Vec::with_capacity(x_draws * reps);
    let mut delta_vals = vec![Vec::with_capacity(x_draws); deltas.len()];
    for j in 0..x_draws {
        let mut rng = substream(seed, j as u64);
        let draw = PerturbationDraw::sample(spec, &mut rng);
        let rep_seed: u64 = rng.random();
        let sys = PerturbedSystem::new(m, cs, spec, &draw, true)?;

        // Per replicate: Gibbs probabilities and the four Delta averages.
        let per_rep = map_indices(reps, |r| -> Result<(Vec<f64>, Vec<[f64; 4]>)> {
            let mut rng = substream(rep_seed, r as u64);
            let probs: Vec<f64> = sys.log_probs(cs, &mut rng).iter().map(|l| l.exp()).collect();
            let mut sums = vec![[0.0; 4]; deltas.len()];
            for _ in 0..n_replicas {
                for (di, d) in deltas.iter().enumerate() {
                    let configs: Vec<usize> = (0..=d.n).map(|_| draw_leaf(&probs, &mut rng)).collect();
                    let ov = OverlapArray::new(cs, &configs)?;
                    let f: f64 = d.factors.iter().map(|q| ov.get(q[0], q[1])[(q[2], q[3])]).product();
                    let rh = |l: usize| overlap_h(&a_h[di], d.h[1], d.h[2], ov.get(0, l));
                    sums[di][0] += f * rh(d.n);
                    sums[di][1] += f;
                    sums[di][2] += rh(1);
                    sums[di][3] += (1..d.n).map(|l| f * rh(l)).sum::<f64>();
                }
            }
            let k = n_replicas.max(1) as f64;
            Ok((probs, sums.into_iter().map(|s| s.map(|v| v / k)).collect()))
        });
        let per_rep: Vec<(Vec<f64>, Vec<[f64; 4]>)> = per_rep.into_iter().collect::<Result<_>>()?;

        let mut m_x = SymMatrix::zeros(cs.dim());
        for (probs, _) in &per_rep {
            for (c, p) in probs.iter().enumerate() {
                m_x = &m_x + &r11[c].scale(p / reps as f64);
            }
        }
        for (probs, _) in &per_rep {
            spread.push(probs.iter().enumerate().map(|(c, p)| p * (&r11[c] - &m_x).norm()).sum());
        }
        for (di, d) in deltas.iter().enumerate() {
            let avg = |t: usize| per_rep.iter().map(|(_, s)| s[di][t]).sum::<f64>() / reps as f64;
            let n = d.n as f64;
            delta_vals[di].push((avg(0) - avg(1) * avg(2) / n - avg(3) / n).abs());
        }
    }
    Ok(PerturbationStats {
        concentration: Estimate::from_samples(&spread),
        deltas: delta_vals.iter().map(|v| Estimate::from_samples(v)).collect(),
        x_draws,
        reps,
    })
}

/// Both sides of the cavity identity at one perturbation draw.
#[derive(Debug, Clone, Serialize)]
pub struct AssResult {
    pub n: usize,
    /// `(N + 1) F^x_{N+1} - N F^x_N`.
    pub lhs: Estimate,
    /// `A_N(x)`.
    pub rhs: Estimate,
    /// `lhs - rhs`.
    pub gap: f64,
    /// Combined standard error of the gap (independent runs).
    pub stderr: f64,
}

/// The two log-moment terms of `A_N` for one replicate, given the Gibbs
/// log-probabilities and the fields `Z` (`D` per configuration) and `Y`.
pub(crate) fn cavity_terms(
    m: &ModelXi,
    p1: &SpinMeasure,
    cs: &ConfigSpace,
    log_p: &[f64],
    z: &[f64],
    y: &[f64],
) -> (f64, f64) {
    let d = cs.dim();
    let mut first = Vec::with_capacity(cs.len() * p1.len());
    let mut second = Vec::with_capacity(cs.len());
    for c in 0..cs.len() {
        let r = cs.self_overlap(c);
        let g = m.grad(&r);
        for at in p1.atoms() {
            let zt: f64 = (0..d).map(|k| z[c * d + k] * at.tau[k]).sum();
            first.push(log_p[c] + at.weight.ln() + zt - 0.5 * g.quad_form(&at.tau));
        }
        second.push(log_p[c] + y[c] - 0.5 * m.theta(&r));
    }
    (logsumexp(&first), logsumexp(&second))
}

/// Compares `(N + 1) F^x_{N+1} - N F^x_N` with `A_N(x)`, both at the same
/// draw `x`. Use [`PerturbationDraw::zeros`] for the unperturbed identity.
#[allow(clippy::too_many_arguments)]
pub fn ass_difference(
    m: &ModelXi,
    p1: &SpinMeasure,
    cs_n: &ConfigSpace,
    cs_n1: &ConfigSpace,
    spec: &PerturbationSpec,
    draw: &PerturbationDraw,
    reps: usize,
    seed: u64,
) -> Result<AssResult> {
    let n = cs_n.n();
    if cs_n1.n() != n + 1 {
        return Err(Error::InvalidArgument(format!(
            "cavity system has {} spins, expected {}",
            cs_n1.n(),
            n + 1
        )));
    }
    if reps < 2 {
        return Err(Error::InvalidArgument("need at least two replicates".into()));
    }
    let seeds: Vec<u64> = (0..3).map(|i| substream(seed, i).random()).collect();
    let f_n = perturbed_free_energy(m, cs_n, spec, draw, reps, seeds[0])?;
    let f_n1 = perturbed_free_energy(m, cs_n1, spec, draw, reps, seeds[1])?;
    let nf = n as f64;
    let lhs_se = (((nf + 1.0) * f_n1.stderr).powi(2) + (nf * f_n.stderr).powi(2)).sqrt();
    let lhs = Estimate {
        mean: (nf + 1.0) * f_n1.mean - nf * f_n.mean,
        stderr: lhs_se,
        reps,
    };

    let sys = PerturbedSystem::new(m, cs_n, spec, draw, true)?;
    let zf = GaussianField::new(m, cs_n, FieldKind::CavityField)?;
    let yf = GaussianField::new(m, cs_n, FieldKind::CavityTheta)?;
    let vals = map_indices(reps, |r| {
        let mut rng = substream(seeds[2], r as u64);
        let log_p = sys.log_probs(cs_n, &mut rng);
        let z = zf.sample(&mut rng);
        let y = yf.sample(&mut rng);
        let (a, b) = cavity_terms(m, p1, cs_n, &log_p, &z, &y);
        a - b
    });
    let rhs = Estimate::from_samples(&vals);
    Ok(AssResult {
        n,
        gap: lhs.mean - rhs.mean,
        stderr: (lhs.stderr.powi(2) + rhs.stderr.powi(2)).sqrt(),
        lhs,
        rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_atom() -> (ModelXi, SpinMeasure) {
        let a = SymMatrix::from_row_major(2, &[1.0, 0.5, 0.5, 1.0]).unwrap();
        let m = ModelXi::single(2, a.scale(0.25)).unwrap();
        let p1 = SpinMeasure::uniform(2, vec![vec![1.0, 0.0], vec![0.6, 0.8]]).unwrap();
        (m, p1)
    }

    #[test]
    fn enumeration_has_56_terms_with_normalized_constants() {
        for dim in [1, 2, 3] {
            let spec = PerturbationSpec::new(dim);
            assert_eq!(spec.terms.len(), 56);
            for t in &spec.terms {
                assert!(t.a.is_psd(1e-12).unwrap() && t.a.norm() <= 1.0 + 1e-12);
                // Random |b| <= 1 never beats the normalization.
                let mut rng = substream(dim as u64, t.h[0] as u64);
                for _ in 0..50 {
                    let b: DMatrix<f64> = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
                    let b = &b / b.norm().max(1.0);
                    let v = overlap_h(&t.a, t.h[1], t.h[2], &b);
                    let size = t.h.iter().sum::<u32>() as i32;
                    assert!(t.c * t.c * v <= 0.25f64.powi(size) + 1e-15);
                }
            }
        }
    }

    #[test]
    fn rational_enumeration_cycles_with_halving() {
        let base = rational_base(2);
        // E_11, E_22, (1,-1), (1,1), diag(1/4, 0), diag(0, 1/4), diag(1/4, 1/4)
        assert_eq!(base.len(), 7);
        assert_eq!(rational_psd(2, 8), base[0].scale(0.5));
        assert_eq!(rational_psd(2, 3).to_row_major(), vec![0.5, -0.5, -0.5, 0.5]);
    }

    #[test]
    fn ising_self_overlap_is_exactly_concentrated() {
        let m = ModelXi::sk(0.7);
        let cs = ConfigSpace::new(&SpinMeasure::ising(), 5).unwrap();
        let spec = PerturbationSpec::new(1);
        let s = perturbed_gibbs_stats(&m, &cs, &spec, &[], 2, 5, 0, 3).unwrap();
        assert!(s.concentration.mean.abs() < 1e-12);
    }

    #[test]
    fn degenerate_exponent_gives_zero_delta() {
        let (m, p1) = two_atom();
        let cs = ConfigSpace::new(&p1, 4).unwrap();
        let spec = PerturbationSpec::new(2);
        let d = DeltaSpec {
            factors: vec![[0, 1, 0, 1], [1, 2, 1, 1]],
            n: 3,
            h: [2, 1, 0],
        };
        let s = perturbed_gibbs_stats(&m, &cs, &spec, &[d], 2, 4, 20, 9).unwrap();
        assert!(s.deltas[0].mean < 1e-12);
        assert!(s.concentration.mean > 0.0);
    }

    #[test]
    fn overlap_array_is_symmetric_and_bounded() {
        let (_, p1) = two_atom();
        let cs = ConfigSpace::new(&p1, 3).unwrap();
        let ov = OverlapArray::new(&cs, &[0, 5, 7]).unwrap();
        assert_eq!(ov.get(0, 1), &ov.get(1, 0).transpose());
        for l in 0..3 {
            assert!(ov.get(l, l).norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn no_disorder_cavity_identity_is_exact() {
        let m = ModelXi::sk(0.0);
        let p1 = SpinMeasure::ising();
        let spec = PerturbationSpec::new(1);
        let zero = PerturbationDraw::zeros(&spec);
        let cs = ConfigSpace::new(&p1, 3).unwrap();
        let cs1 = ConfigSpace::new(&p1, 4).unwrap();
        let r = ass_difference(&m, &p1, &cs, &cs1, &spec, &zero, 4, 1).unwrap();
        assert!(r.lhs.mean.abs() < 1e-12 && r.rhs.mean.abs() < 1e-12);
    }

    #[test]
    fn single_atom_cavity_term_is_closed_form() {
        let (m, _) = two_atom();
        let tau = vec![0.6, 0.8];
        let p1 = SpinMeasure::uniform(2, vec![tau.clone()]).unwrap();
        let cs = ConfigSpace::new(&p1, 3).unwrap();
        let z = vec![0.3, -1.1];
        let (a, b) = cavity_terms(&m, &p1, &cs, &[0.0], &z, &[0.4]);
        let r = SymMatrix::outer(&tau);
        let expect = 0.3 * 0.6 - 1.1 * 0.8 - 0.5 * m.grad(&r).quad_form(&tau);
        assert!((a - expect).abs() < 1e-14);
        assert!((b - (0.4 - 0.5 * m.theta(&r))).abs() < 1e-14);
    }

    #[test]
    fn zero_draw_matches_corrected_free_energy() {
        let m = ModelXi::sk(0.6);
        let cs = ConfigSpace::new(&SpinMeasure::ising(), 5).unwrap();
        let spec = PerturbationSpec::new(1);
        let p = perturbed_free_energy(&m, &cs, &spec, &PerturbationDraw::zeros(&spec), 40, 2).unwrap();
        let f = super::super::corrected_free_energy(&m, &cs, 40, 2).unwrap();
        assert!((p.mean - f.mean).abs() < 1e-12);
    }
}
