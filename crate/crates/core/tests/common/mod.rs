//! Shared helpers for the integration tests: random SPD matrices and a few
//! dense operations written independently of the library.
#![allow(dead_code)]

use mpec::{SpdMatrix, SymMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

/// Row-major `n × n` product.
pub fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

pub fn transpose(a: &[f64], n: usize) -> Vec<f64> {
    (0..n * n).map(|idx| a[(idx % n) * n + idx / n]).collect()
}

pub fn identity(n: usize) -> Vec<f64> {
    (0..n * n).map(|i| if i / n == i % n { 1.0 } else { 0.0 }).collect()
}

/// Gauss–Jordan inverse with partial pivoting.
pub fn inverse(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    let mut inv = identity(n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x * n + col].abs().total_cmp(&m[y * n + col].abs()))
            .unwrap();
        for j in 0..n {
            m.swap(col * n + j, pivot * n + j);
            inv.swap(col * n + j, pivot * n + j);
        }
        let p = m[col * n + col];
        for j in 0..n {
            m[col * n + j] /= p;
            inv[col * n + j] /= p;
        }
        for row in 0..n {
            if row != col {
                let f = m[row * n + col];
                for j in 0..n {
                    m[row * n + j] -= f * m[col * n + j];
                    inv[row * n + j] -= f * inv[col * n + j];
                }
            }
        }
    }
    inv
}

pub fn frobenius(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    frobenius(&d) / frobenius(b).max(f64::MIN_POSITIVE)
}

/// Random orthogonal matrix by Gram–Schmidt on a Gaussian matrix.
pub fn random_orthogonal(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| gaussian(r)).collect();
        for _ in 0..2 {
            for c in &cols {
                let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = frobenius(&v);
        if norm > 1e-6 {
            cols.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    (0..n * n).map(|idx| cols[idx % n][idx / n]).collect()
}

/// `Q diag(λ) Qᵀ` with `log λ` uniform in `[-spread/2, spread/2]`, so the
/// condition number is at most `e^spread`.
pub fn random_spd_cond(r: &mut ChaCha8Rng, n: usize, spread: f64) -> SpdMatrix {
    let q = random_orthogonal(r, n);
    let lambda: Vec<f64> = (0..n).map(|_| (r.gen::<f64>() - 0.5) * spread).map(f64::exp).collect();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = (0..n).map(|k| q[i * n + k] * lambda[k] * q[j * n + k]).sum();
        }
    }
    spd(n, out)
}

pub fn random_spd(r: &mut ChaCha8Rng, n: usize) -> SpdMatrix {
    random_spd_cond(r, n, 4.0)
}

/// Random well-conditioned invertible matrix.
pub fn random_invertible(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let q1 = random_orthogonal(r, n);
    let q2 = random_orthogonal(r, n);
    let mut d = identity(n);
    for i in 0..n {
        d[i * n + i] = (r.gen::<f64>() - 0.5) * 2.0;
        d[i * n + i] = d[i * n + i].exp() * if r.gen::<bool>() { 1.0 } else { -1.0 };
    }
    matmul(&matmul(&q1, &d, n), &q2, n)
}

pub fn spd(n: usize, data: Vec<f64>) -> SpdMatrix {
    SpdMatrix::try_new(SymMatrix::new(n, data).unwrap()).unwrap()
}

/// Symmetrizes a dense product before wrapping it.
pub fn spd_from_dense(n: usize, a: &[f64]) -> SpdMatrix {
    let sym: Vec<f64> = (0..n * n)
        .map(|idx| 0.5 * (a[idx] + a[(idx % n) * n + idx / n]))
        .collect();
    spd(n, sym)
}

/// Proptest strategy: `B Bᵀ + ½ I` with `B` entries in `[-1, 1]`, `n` in
/// `lo..=hi`.
pub fn spd_strategy(lo: usize, hi: usize) -> impl Strategy<Value = SpdMatrix> {
    (lo..=hi).prop_flat_map(|n| {
        prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |b| {
            let mut a = matmul(&b, &transpose(&b, n), n);
            for i in 0..n {
                a[i * n + i] += 0.5;
            }
            spd_from_dense(n, &a)
        })
    })
}

/// Two SPD matrices of the same dimension.
pub fn spd_pair_strategy(lo: usize, hi: usize) -> impl Strategy<Value = (SpdMatrix, SpdMatrix)> {
    (lo..=hi).prop_flat_map(|n| (spd_strategy(n, n), spd_strategy(n, n)))
}

pub fn sym_strategy(lo: usize, hi: usize, scale: f64) -> impl Strategy<Value = SymMatrix> {
    (lo..=hi).prop_flat_map(move |n| {
        prop::collection::vec(-scale..scale, n * n)
            .prop_map(move |v| SymMatrix::from_fn(n, |i, j| 0.5 * (v[i * n + j] + v[j * n + i])).unwrap())
    })
}
