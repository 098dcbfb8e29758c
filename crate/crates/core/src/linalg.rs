//! Dense symmetric matrices, a symmetric eigensolver, and spectral matrix
//! functions.
//!
//! Matrices are small (n ≤ 64 in practice) and stored row-major in a flat
//! `Vec<f64>`. The eigensolver is Householder tridiagonalization followed by
//! the implicit QL algorithm with Wilkinson-style shifts; every matrix
//! function (`log`, `exp`, `sqrt`, `inv_sqrt`) is evaluated as `V f(Λ) Vᵀ`.

use serde::{Deserialize, Serialize};

use crate::error::{MpecError, Result};

/// Minimum eigenvalue an [`SpdMatrix`] must exceed.
pub const PD_TOLERANCE: f64 = 1e-10;
/// Default eigenvalue floor used by [`nearest_spd`].
pub const SPD_FLOOR: f64 = 1e-8;
/// QL iterations allowed per eigenvalue; the total cap is this times `n`.
const QL_ITERATIONS_PER_DIM: usize = 30;

/// A real symmetric matrix with exactly mirrored entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds a symmetric matrix from row-major entries, replacing the input
    /// by `(M + Mᵀ)/2`.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(MpecError::Shape("matrix dimension must be positive".into()));
        }
        if data.len() != dim * dim {
            return Err(MpecError::Shape(format!(
                "{} entries cannot form a {dim}x{dim} matrix",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(MpecError::NumericalFailure(format!("non-finite entry {bad}")));
        }
        Ok(Self::symmetrized(dim, data))
    }

    pub(crate) fn symmetrized(dim: usize, mut data: Vec<f64>) -> Self {
        for i in 0..dim {
            for j in (i + 1)..dim {
                let avg = 0.5 * (data[i * dim + j] + data[j * dim + i]);
                data[i * dim + j] = avg;
                data[j * dim + i] = avg;
            }
        }
        SymMatrix { dim, data }
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self::new(dim, data)
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, value: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = value;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            m.data[i * values.len() + i] = *v;
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        self.zip(other, |a, b| a - b)
    }

    /// `a·self + b·other`.
    pub fn lincomb(&self, a: f64, other: &SymMatrix, b: f64) -> Result<SymMatrix> {
        self.zip(other, |x, y| a * x + b * y)
    }

    fn zip(&self, other: &SymMatrix, f: impl Fn(f64, f64) -> f64) -> Result<SymMatrix> {
        check_same_dim(self, other)?;
        Ok(SymMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    /// Dense product `self · other` (generally not symmetric), row-major.
    pub fn matmul(&self, other: &SymMatrix) -> Result<Vec<f64>> {
        check_same_dim(self, other)?;
        Ok(square_mul(&self.data, &other.data, self.dim))
    }

    /// `self · x · self`, symmetric when `self` is.
    pub fn sandwich(&self, x: &SymMatrix) -> Result<SymMatrix> {
        check_same_dim(self, x)?;
        let n = self.dim;
        let left = square_mul(&self.data, &x.data, n);
        Ok(SymMatrix::symmetrized(n, square_mul(&left, &self.data, n)))
    }
}

fn check_same_dim(a: &SymMatrix, b: &SymMatrix) -> Result<()> {
    if a.dim != b.dim {
        return Err(MpecError::Shape(format!(
            "dimension {} vs {}",
            a.dim, b.dim
        )));
    }
    Ok(())
}

pub(crate) fn square_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            let row = &b[k * n..(k + 1) * n];
            let dst = &mut out[i * n..(i + 1) * n];
            for (d, bkj) in dst.iter_mut().zip(row) {
                *d += aik * bkj;
            }
        }
    }
    out
}

/// `M X Mᵀ` for an arbitrary square `M` given row-major.
pub fn congruence(m: &[f64], x: &SymMatrix) -> Result<SymMatrix> {
    let n = x.dim();
    if m.len() != n * n {
        return Err(MpecError::Shape(format!(
            "congruence factor has {} entries, expected {}",
            m.len(),
            n * n
        )));
    }
    let mx = square_mul(m, x.as_slice(), n);
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = (0..n).map(|k| mx[i * n + k] * m[j * n + k]).sum();
        }
    }
    Ok(SymMatrix::symmetrized(n, out))
}

/// A symmetric matrix whose smallest eigenvalue exceeds [`PD_TOLERANCE`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpdMatrix(SymMatrix);

impl SpdMatrix {
    /// Validates positive definiteness with one eigendecomposition.
    pub fn try_new(m: SymMatrix) -> Result<Self> {
        let eig = sym_eig(&m)?;
        let min = eig.min_eigenvalue();
        if min > PD_TOLERANCE {
            Ok(SpdMatrix(m))
        } else {
            Err(MpecError::NotPositiveDefinite { min_eigenvalue: min })
        }
    }

    /// Wraps a matrix known to be SPD by construction.
    pub(crate) fn assume_spd(m: SymMatrix) -> Self {
        SpdMatrix(m)
    }

    pub fn identity(dim: usize) -> Self {
        SpdMatrix(SymMatrix::identity(dim))
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        Self::try_new(SymMatrix::diag(values))
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.0
    }

    pub fn into_sym(self) -> SymMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }
}

impl std::ops::Deref for SpdMatrix {
    type Target = SymMatrix;
    fn deref(&self) -> &SymMatrix {
        &self.0
    }
}

/// Eigenvalues in descending order with matching orthonormal eigenvectors.
///
/// `vectors` is row-major; column `j` is the eigenvector of `values[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
}

impl EigenPair {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.values.last().copied().unwrap_or(f64::NAN)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.values.first().copied().unwrap_or(f64::NAN)
    }

    pub fn vector(&self, j: usize) -> Vec<f64> {
        let n = self.dim();
        (0..n).map(|i| self.vectors[i * n + j]).collect()
    }

    /// `V diag(g(λ)) Vᵀ`.
    pub fn reassemble(&self, g: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.dim();
        let mapped: Vec<f64> = self.values.iter().map(|&l| g(l)).collect();
        let v = &self.vectors;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += v[i * n + k] * mapped[k] * v[j * n + k];
                }
                out[i * n + j] = acc;
                out[j * n + i] = acc;
            }
        }
        SymMatrix { dim: n, data: out }
    }
}

/// Symmetric eigendecomposition `S = V Λ Vᵀ`.
pub fn sym_eig(s: &SymMatrix) -> Result<EigenPair> {
    let n = s.dim();
    let mut v = s.as_slice().to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(n, &mut v, &mut d, &mut e);
    implicit_ql(n, &mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&k| d[k]).collect();
    let mut vectors = vec![0.0; n * n];
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..n {
            vectors[i * n + dst] = v[i * n + src];
        }
    }
    Ok(EigenPair { values, vectors })
}

// Householder reduction to tridiagonal form, accumulating the orthogonal
// transform in `v` (EISPACK tred2).
fn tridiagonalize(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let at = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n.saturating_sub(1) {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

// Implicit QL iterations on the tridiagonal (d, e), rotating `v` along
// (EISPACK tql2).
fn implicit_ql(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let at = |i: usize, j: usize| i * n + j;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let cap = QL_ITERATIONS_PER_DIM * n;
    let mut iterations = 0usize;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            loop {
                iterations += 1;
                if iterations > cap {
                    return Err(MpecError::NumericalFailure(format!(
                        "symmetric eigensolver did not converge in {cap} iterations"
                    )));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[at(k, i + 1)];
                        v[at(k, i + 1)] = s * v[at(k, i)] + c * h;
                        v[at(k, i)] = c * v[at(k, i)] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Scalar function applied through the spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spectral {
    Log,
    Exp,
    Sqrt,
    InvSqrt,
}

impl Spectral {
    fn needs_pd(self) -> bool {
        !matches!(self, Spectral::Exp)
    }

    fn eval(self, x: f64) -> f64 {
        match self {
            Spectral::Log => x.ln(),
            Spectral::Exp => x.exp(),
            Spectral::Sqrt => x.sqrt(),
            Spectral::InvSqrt => 1.0 / x.sqrt(),
        }
    }
}

/// `V f(Λ) Vᵀ`. `log`, `sqrt` and `inv_sqrt` reject non-PD input.
pub fn apply_spectral(s: &SymMatrix, f: Spectral) -> Result<SymMatrix> {
    let eig = sym_eig(s)?;
    apply_to_eigen(&eig, f)
}

pub(crate) fn apply_to_eigen(eig: &EigenPair, f: Spectral) -> Result<SymMatrix> {
    if f.needs_pd() && !(eig.min_eigenvalue() > PD_TOLERANCE) {
        return Err(MpecError::NotPositiveDefinite {
            min_eigenvalue: eig.min_eigenvalue(),
        });
    }
    Ok(eig.reassemble(|l| f.eval(l)))
}

/// Matrix exponential of a symmetric matrix; always SPD.
pub fn expm(s: &SymMatrix) -> Result<SpdMatrix> {
    Ok(SpdMatrix::assume_spd(apply_spectral(s, Spectral::Exp)?))
}

pub fn is_spd(s: &SymMatrix, tol: f64) -> bool {
    sym_eig(s).map(|e| e.min_eigenvalue() > tol).unwrap_or(false)
}

/// Clips every eigenvalue below `floor` up to `floor`. Inputs that already
/// satisfy the floor are returned untouched.
pub fn nearest_spd(s: &SymMatrix, floor: f64) -> Result<SpdMatrix> {
    let eig = sym_eig(s)?;
    if eig.min_eigenvalue() >= floor && eig.min_eigenvalue() > PD_TOLERANCE {
        return Ok(SpdMatrix::assume_spd(s.clone()));
    }
    let floor = floor.max(PD_TOLERANCE * 2.0);
    Ok(SpdMatrix::assume_spd(eig.reassemble(|l| l.max(floor))))
}

/// `Σᵢⱼ AᵢⱼBᵢⱼ`.
pub fn frobenius_inner(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    check_same_dim(a, b)?;
    Ok(a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum())
}

/// Solves `A X = B` for SPD `A` (n×n) and `B` (n×nrhs), both row-major, by
/// Cholesky factorization. Returns `None` when `A` is not numerically PD.
pub fn cholesky_solve(a: &[f64], n: usize, b: &[f64], nrhs: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum > 0.0) {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    let mut x = b.to_vec();
    for c in 0..nrhs {
        for i in 0..n {
            let mut sum = x[i * nrhs + c];
            for k in 0..i {
                sum -= l[i * n + k] * x[k * nrhs + c];
            }
            x[i * nrhs + c] = sum / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut sum = x[i * nrhs + c];
            for k in (i + 1)..n {
                sum -= l[k * n + i] * x[k * nrhs + c];
            }
            x[i * nrhs + c] = sum / l[i * n + i];
        }
    }
    Some(x)
}
