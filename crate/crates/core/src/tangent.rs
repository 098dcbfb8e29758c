//! Tangent-space projection at a cluster centroid and the isometric
//! vectorization of symmetric matrices.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MpecError, Result};
use crate::linalg::{SpdMatrix, SymMatrix};
use crate::manifold::BasePoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentFeature {
    pub cluster: usize,
    pub vector: Vec<f64>,
    pub label: Option<usize>,
}

pub fn vector_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Upper triangle in row-major order, off-diagonal entries weighted by √2 so
/// that the Euclidean norm equals the Frobenius norm.
pub fn vectorize_sym(t: &SymMatrix) -> Vec<f64> {
    let n = t.dim();
    let mut out = Vec::with_capacity(vector_len(n));
    for i in 0..n {
        out.push(t.get(i, i));
        for j in (i + 1)..n {
            out.push(std::f64::consts::SQRT_2 * t.get(i, j));
        }
    }
    out
}

pub fn unvectorize_sym(v: &[f64], dim: usize) -> Result<SymMatrix> {
    if dim == 0 || v.len() != vector_len(dim) {
        return Err(MpecError::BadLength { len: v.len(), dim });
    }
    let mut data = vec![0.0; dim * dim];
    let mut it = v.iter();
    for i in 0..dim {
        data[i * dim + i] = *it.next().unwrap();
        for j in (i + 1)..dim {
            let x = unscale_off_diagonal(*it.next().unwrap());
            data[i * dim + j] = x;
            data[j * dim + i] = x;
        }
    }
    SymMatrix::new(dim, data)
}

/// Inverse of the √2 off-diagonal weight. The quotient can be one ulp away
/// from the original entry, so the neighbour that reproduces `v` under the
/// forward weighting is preferred, making the round trip exact.
fn unscale_off_diagonal(v: f64) -> f64 {
    let x = v / std::f64::consts::SQRT_2;
    [x, x.next_up(), x.next_down()]
        .into_iter()
        .find(|c| c * std::f64::consts::SQRT_2 == v)
        .unwrap_or(x)
}

/// Vectorized log map of one point at an already-factorized centroid.
pub fn project_point(base: &BasePoint, point: &SpdMatrix) -> Result<Vec<f64>> {
    if base.point() == point {
        return Ok(vec![0.0; vector_len(point.dim())]);
    }
    Ok(vectorize_sym(&base.log(point)?))
}

/// `vectorize_sym(log_centroid(pᵢ))` for every point.
pub fn project_cluster(
    points: &[SpdMatrix],
    centroid: &SpdMatrix,
    cluster: usize,
) -> Result<Vec<TangentFeature>> {
    let base = BasePoint::new(centroid)?;
    points
        .par_iter()
        .map(|p| {
            Ok(TangentFeature {
                cluster,
                vector: project_point(&base, p)?,
                label: None,
            })
        })
        .collect()
}
