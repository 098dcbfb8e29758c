//! Ridge classifier: one-vs-rest least squares on ±1 targets with an L2
//! penalty and an unpenalized intercept.

use serde::{Deserialize, Serialize};

use crate::error::{MpecError, Result};
use crate::linalg::cholesky_solve;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RidgeParams {
    pub alpha: f64,
    /// Residual tolerance of the conjugate-gradient fallback.
    pub tol: f64,
}

impl Default for RidgeParams {
    fn default() -> Self {
        RidgeParams { alpha: 10.0, tol: 1e-4 }
    }
}

impl RidgeParams {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !(self.tol > 0.0) {
            return Err(MpecError::InvalidConfig("ridge needs alpha >= 0 and tol > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    /// `d × class_count`, row-major.
    weights: Vec<f64>,
    intercept: Vec<f64>,
}

/// Solves `(XᵀX + αI) W = XᵀY` for `W` (`d × k`, row-major). Falls back to
/// conjugate gradients when the Cholesky factorization breaks down.
pub fn ridge_solve(x: &[Vec<f64>], y: &[Vec<f64>], alpha: f64, tol: f64) -> Result<Vec<f64>> {
    let d = x.first().map_or(0, Vec::len);
    let k = y.first().map_or(0, Vec::len);
    if d == 0 || k == 0 {
        return Err(MpecError::EmptyInput("ridge design"));
    }
    if x.len() != y.len() {
        return Err(MpecError::LengthMismatch(x.len(), y.len()));
    }
    let mut gram = vec![0.0; d * d];
    let mut rhs = vec![0.0; d * k];
    for (row, target) in x.iter().zip(y) {
        for i in 0..d {
            let xi = row[i];
            for j in i..d {
                gram[i * d + j] += xi * row[j];
            }
            for c in 0..k {
                rhs[i * k + c] += xi * target[c];
            }
        }
    }
    for i in 0..d {
        gram[i * d + i] += alpha;
        for j in 0..i {
            gram[i * d + j] = gram[j * d + i];
        }
    }
    if let Some(w) = cholesky_solve(&gram, d, &rhs, k) {
        return Ok(w);
    }
    conjugate_gradient(&gram, d, &rhs, k, tol)
}

fn conjugate_gradient(a: &[f64], d: usize, b: &[f64], k: usize, tol: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; d * k];
    for c in 0..k {
        let rhs: Vec<f64> = (0..d).map(|i| b[i * k + c]).collect();
        let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut x = vec![0.0; d];
        let mut r = rhs.clone();
        let mut p = r.clone();
        let mut rs = r.iter().map(|v| v * v).sum::<f64>();
        for _ in 0..(10 * d).max(100) {
            if rs.sqrt() <= tol * bnorm.max(1.0) {
                break;
            }
            let ap: Vec<f64> = (0..d)
                .map(|i| (0..d).map(|j| a[i * d + j] * p[j]).sum())
                .collect();
            let pap: f64 = p.iter().zip(&ap).map(|(u, v)| u * v).sum();
            if !(pap > 0.0) {
                return Err(MpecError::NumericalFailure("ridge system is singular".into()));
            }
            let step = rs / pap;
            for i in 0..d {
                x[i] += step * p[i];
                r[i] -= step * ap[i];
            }
            let rs_new = r.iter().map(|v| v * v).sum::<f64>();
            for i in 0..d {
                p[i] = r[i] + (rs_new / rs) * p[i];
            }
            rs = rs_new;
        }
        for i in 0..d {
            out[i * k + c] = x[i];
        }
    }
    Ok(out)
}

pub(super) fn fit(x: &[Vec<f64>], y: &[usize], class_count: usize, p: &RidgeParams) -> Result<RidgeModel> {
    let n = x.len() as f64;
    let d = x[0].len();
    let x_mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let targets: Vec<Vec<f64>> = y
        .iter()
        .map(|&l| (0..class_count).map(|c| if c == l { 1.0 } else { -1.0 }).collect())
        .collect();
    let y_mean: Vec<f64> = (0..class_count)
        .map(|c| targets.iter().map(|t| t[c]).sum::<f64>() / n)
        .collect();
    let xc: Vec<Vec<f64>> = x
        .iter()
        .map(|r| r.iter().zip(&x_mean).map(|(v, m)| v - m).collect())
        .collect();
    let yc: Vec<Vec<f64>> = targets
        .iter()
        .map(|t| t.iter().zip(&y_mean).map(|(v, m)| v - m).collect())
        .collect();
    let weights = ridge_solve(&xc, &yc, p.alpha, p.tol)?;
    let intercept = (0..class_count)
        .map(|c| y_mean[c] - (0..d).map(|j| x_mean[j] * weights[j * class_count + c]).sum::<f64>())
        .collect();
    Ok(RidgeModel { weights, intercept })
}

impl RidgeModel {
    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        let k = self.intercept.len();
        (0..k)
            .map(|c| {
                self.intercept[c]
                    + row
                        .iter()
                        .enumerate()
                        .map(|(j, v)| v * self.weights[j * k + c])
                        .sum::<f64>()
            })
            .collect()
    }
}
