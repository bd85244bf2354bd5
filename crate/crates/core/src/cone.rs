//! Symmetric matrices, the PSD cone and the Loewner order.
//!
//! `SymMatrix` is the workhorse value type for overlaps, tilts and path
//! values. Everything here is a pure function of its arguments.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default tolerance for PSD membership and Loewner comparisons.
pub const PSD_TOL: f64 = 1e-10;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// A real symmetric `D x D` matrix. Symmetrized at construction so that
/// `a[(i, j)] == a[(j, i)]` holds bit-for-bit.
#[derive(Clone, PartialEq)]
pub struct SymMatrix {
    inner: DMatrix<f64>,
}

impl SymMatrix {
    /// Builds from a square matrix, replacing it with `(m + m^T) / 2`.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidArgument("matrix dimension must be positive".into()));
        }
        Ok(Self::symmetrize(m))
    }

    pub(crate) fn symmetrize(mut m: DMatrix<f64>) -> Self {
        let d = m.nrows();
        for i in 0..d {
            for j in (i + 1)..d {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix { inner: m }
    }

    /// Row-major entries; must have `dim * dim` elements.
    pub fn from_row_major(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        Self::from_matrix(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix {
            inner: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix {
            inner: DMatrix::identity(dim, dim),
        }
    }

    pub fn diag(values: &[f64]) -> Self {
        let d = values.len();
        SymMatrix {
            inner: DMatrix::from_fn(d, d, |i, j| if i == j { values[i] } else { 0.0 }),
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self::diag(&[v])
    }

    /// `v v^T`.
    pub fn outer(v: &[f64]) -> Self {
        let d = v.len();
        SymMatrix {
            inner: DMatrix::from_fn(d, d, |i, j| v[i] * v[j]),
        }
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> f64) -> Self {
        Self::symmetrize(DMatrix::from_fn(dim, dim, f))
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                out.push(self.inner[(i, j)]);
            }
        }
        out
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..d).map(|i| (0..d).map(|j| self.inner[(i, j)]).collect()).collect()
    }

    /// Frobenius inner product; panics on dimension mismatch.
    pub fn dot(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.dim(), other.dim(), "frobenius dot: dimension mismatch");
        self.inner.dot(&other.inner)
    }

    pub fn norm(&self) -> f64 {
        self.inner.norm()
    }

    pub fn trace(&self) -> f64 {
        self.inner.trace()
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        SymMatrix { inner: &self.inner * c }
    }

    /// Quadratic form `v^T a v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += v[i] * self.inner[(i, j)] * v[j];
            }
        }
        acc
    }

    /// Entrywise (Schur) power.
    pub fn hadamard_pow(&self, p: u32) -> SymMatrix {
        SymMatrix {
            inner: self.inner.map(|v| v.powi(p as i32)),
        }
    }

    pub fn eigen(&self) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
        SymmetricEigen::try_new(self.inner.clone(), EIGEN_EPS, EIGEN_MAX_ITER).ok_or_else(|| {
            Error::numerical(
                "symmetric eigendecomposition",
                format!("did not converge for {:?}", self),
            )
        })
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigen()?.eigenvalues.min())
    }

    pub fn max_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigen()?.eigenvalues.max())
    }

    pub fn is_psd(&self, tol: f64) -> Result<bool> {
        Ok(self.min_eigenvalue()? >= -tol)
    }

    pub fn max_abs(&self) -> f64 {
        self.inner.amax()
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymMatrix{:?}", self.to_rows())
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(serde::de::Error::custom("matrix rows must form a square array"));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        SymMatrix::from_row_major(dim, &flat).map_err(serde::de::Error::custom)
    }
}

impl Add for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix {
            inner: &self.inner + &rhs.inner,
        }
    }
}

impl Add for SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: SymMatrix) -> SymMatrix {
        &self + &rhs
    }
}

impl Sub for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix {
            inner: &self.inner - &rhs.inner,
        }
    }
}

impl Sub for SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: SymMatrix) -> SymMatrix {
        &self - &rhs
    }
}

impl Mul<f64> for &SymMatrix {
    type Output = SymMatrix;
    fn mul(self, c: f64) -> SymMatrix {
        self.scale(c)
    }
}

impl Mul<f64> for SymMatrix {
    type Output = SymMatrix;
    fn mul(self, c: f64) -> SymMatrix {
        self.scale(c)
    }
}

impl Neg for &SymMatrix {
    type Output = SymMatrix;
    fn neg(self) -> SymMatrix {
        self.scale(-1.0)
    }
}

fn check_dims(a: &SymMatrix, b: &SymMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

/// `a . b = sum_ij a_ij b_ij`.
pub fn frobenius_dot(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    check_dims(a, b)?;
    Ok(a.dot(b))
}

/// `a >= b` in the Loewner order: the smallest eigenvalue of `a - b` is at
/// least `-tol`.
pub fn loewner_geq(a: &SymMatrix, b: &SymMatrix, tol: f64) -> Result<bool> {
    check_dims(a, b)?;
    (a - b).is_psd(tol)
}

/// Frobenius-nearest PSD matrix: negative eigenvalues clipped to zero.
pub fn psd_project(a: &SymMatrix) -> Result<SymMatrix> {
    let eig = a.eigen()?;
    if eig.eigenvalues.min() >= 0.0 {
        return Ok(a.clone());
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let u = &eig.eigenvectors;
    let m = u * DMatrix::from_diagonal(&clipped) * u.transpose();
    Ok(SymMatrix::symmetrize(m))
}

/// A factor `L` with `L L^T = a`. Cholesky when `a` is safely positive
/// definite, otherwise the eigen square root `U sqrt(max(lambda, 0))`.
pub fn psd_factor(a: &SymMatrix, tol: f64) -> Result<DMatrix<f64>> {
    let eig = a.eigen()?;
    let min = eig.eigenvalues.min();
    if min < -tol {
        return Err(Error::OrderViolation {
            context: "psd_factor".into(),
            min_eigenvalue: min,
            tol,
        });
    }
    if min > tol {
        if let Some(ch) = a.as_matrix().clone().cholesky() {
            return Ok(ch.l());
        }
    }
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// Result of factoring a (possibly large, possibly rank deficient) Gram
/// matrix.
#[derive(Debug, Clone)]
pub struct GramFactor {
    /// `n x r` with `factor * factor^T` approximating the input.
    pub factor: DMatrix<f64>,
    /// Largest magnitude of a clipped negative eigenvalue.
    pub max_clip: f64,
}

/// Eigen-based factor of an `n x n` covariance. Negative eigenvalues from
/// rounding are clipped; a clip larger than `abort_tol * max(1, lambda_max)`
/// is reported as a numerical error naming `context`. Eigenvalues below
/// `1e-13 * lambda_max` are dropped so the factor is low rank.
pub fn gram_factor(k: &DMatrix<f64>, abort_tol: f64, context: &str) -> Result<GramFactor> {
    let n = k.nrows();
    if n != k.ncols() {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: k.ncols(),
        });
    }
    let mut sym = k.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (sym[(i, j)] + sym[(j, i)]);
            sym[(i, j)] = v;
            sym[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::try_new(sym, 1e-14, 100 * n.max(100))
        .ok_or_else(|| Error::numerical(context, "covariance eigendecomposition did not converge"))?;
    let lmax = eig.eigenvalues.max().max(0.0);
    let lmin = eig.eigenvalues.min();
    let max_clip = if lmin < 0.0 { -lmin } else { 0.0 };
    if max_clip > abort_tol * lmax.max(1.0) {
        return Err(Error::numerical(
            context,
            format!(
                "covariance not PSD: clipped eigenvalue {:e} exceeds {:e}",
                -max_clip, abort_tol
            ),
        ));
    }
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 1e-13 * lmax).collect();
    let mut factor = DMatrix::zeros(n, keep.len().max(1));
    for (c, &i) in keep.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        for r in 0..n {
            factor[(r, c)] = eig.eigenvectors[(r, i)] * s;
        }
    }
    Ok(GramFactor { factor, max_clip })
}

/// Number of free parameters of a symmetric `dim x dim` matrix.
pub fn sym_dim(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// `L L^T` from the `dim (dim + 1) / 2` lower-triangular entries of `L`,
/// listed row by row.
pub fn gram_from_lower(params: &[f64], dim: usize) -> SymMatrix {
    debug_assert_eq!(params.len(), sym_dim(dim));
    let mut l = DMatrix::zeros(dim, dim);
    let mut idx = 0;
    for i in 0..dim {
        for j in 0..=i {
            l[(i, j)] = params[idx];
            idx += 1;
        }
    }
    SymMatrix::symmetrize(&l * l.transpose())
}

/// Inverse of [`gram_from_lower`] for a PSD matrix (a lower-triangular
/// factor, with a tiny ridge when the matrix is singular).
pub fn lower_from_psd(a: &SymMatrix) -> Vec<f64> {
    let dim = a.dim();
    let mut m = a.as_matrix().clone();
    let mut ridge = 0.0;
    let l = loop {
        if let Some(ch) = m.clone().cholesky() {
            break ch.l();
        }
        ridge = if ridge == 0.0 {
            1e-14 * (1.0 + a.max_abs())
        } else {
            ridge * 10.0
        };
        m = a.as_matrix() + DMatrix::identity(dim, dim) * ridge;
    };
    let mut out = Vec::with_capacity(sym_dim(dim));
    for i in 0..dim {
        for j in 0..=i {
            out.push(l[(i, j)]);
        }
    }
    out
}

/// Frobenius-orthonormal basis of the symmetric matrices.
#[derive(Debug, Clone)]
pub struct OrthoBasis {
    dim: usize,
    elements: Vec<SymMatrix>,
}

impl OrthoBasis {
    /// Unit diagonals `E_kk` first, then `(e_k e_l^T + e_l e_k^T) / sqrt 2`
    /// for `k < l` in row order.
    pub fn canonical(dim: usize) -> Self {
        let mut elements = Vec::with_capacity(sym_dim(dim));
        for k in 0..dim {
            elements.push(SymMatrix::from_fn(dim, |i, j| if i == k && j == k { 1.0 } else { 0.0 }));
        }
        let r = std::f64::consts::FRAC_1_SQRT_2;
        for k in 0..dim {
            for l in (k + 1)..dim {
                elements.push(SymMatrix::from_fn(dim, |i, j| {
                    if (i == k && j == l) || (i == l && j == k) {
                        r
                    } else {
                        0.0
                    }
                }));
            }
        }
        OrthoBasis { dim, elements }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[SymMatrix] {
        &self.elements
    }

    pub fn coords(&self, a: &SymMatrix) -> Vec<f64> {
        self.elements.iter().map(|e| e.dot(a)).collect()
    }

    pub fn from_coords(&self, coords: &[f64]) -> SymMatrix {
        let mut out = SymMatrix::zeros(self.dim);
        for (e, c) in self.elements.iter().zip(coords) {
            out = &out + &e.scale(*c);
        }
        out
    }
}

/// Monotone chain `q_1 <= q_2 <= ... <= q_k` of PSD matrices.
#[derive(Debug, Clone, Serialize)]
pub struct PsdChain {
    dim: usize,
    matrices: Vec<SymMatrix>,
    tol: f64,
}

impl PsdChain {
    pub fn new(matrices: Vec<SymMatrix>, tol: f64) -> Result<Self> {
        let dim = matrices
            .first()
            .map(|m| m.dim())
            .ok_or_else(|| Error::InvalidPath("empty PSD chain".into()))?;
        for (l, m) in matrices.iter().enumerate() {
            if m.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: m.dim(),
                });
            }
            let prev = if l == 0 {
                SymMatrix::zeros(dim)
            } else {
                matrices[l - 1].clone()
            };
            let min = (m - &prev).min_eigenvalue()?;
            if min < -tol {
                return Err(Error::OrderViolation {
                    context: format!("PSD chain level {}", l + 1),
                    min_eigenvalue: min,
                    tol,
                });
            }
        }
        Ok(PsdChain { dim, matrices, tol })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrices(&self) -> &[SymMatrix] {
        &self.matrices
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }
}
