//! One-vs-rest soft-margin SVM with an RBF kernel, trained in the dual by
//! coordinate ascent.
//!
//! The bias is folded into the kernel (`K + 1`), which removes the equality
//! constraint of the standard dual so that each coordinate can be optimized
//! alone within its box `[0, C]`.

use serde::{Deserialize, Serialize};

use crate::error::{MpecError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmParams {
    /// Box constraint (hinge-loss penalty).
    pub c: f64,
    /// RBF bandwidth; `None` selects `2σ² = d · Var(X)`.
    pub kernel_sigma: Option<f64>,
    pub max_passes: usize,
    /// Stop when the largest projected-gradient violation falls below this.
    pub tol: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            kernel_sigma: None,
            max_passes: 10_000,
            tol: 1e-3,
        }
    }
}

impl SvmParams {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(MpecError::InvalidConfig("svm.c must be > 0".into()));
        }
        if matches!(self.kernel_sigma, Some(s) if !(s > 0.0)) {
            return Err(MpecError::InvalidConfig("svm.kernel_sigma must be > 0".into()));
        }
        if self.max_passes == 0 || !(self.tol > 0.0) {
            return Err(MpecError::InvalidConfig("svm.max_passes and svm.tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    gamma: f64,
    support: Vec<Vec<f64>>,
    /// `αᵢ yᵢ` per class per support row; `None` for classes with no
    /// positive training example.
    coef: Vec<Option<Vec<f64>>>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn scale_gamma(x: &[Vec<f64>]) -> f64 {
    let count = (x.len() * x[0].len()) as f64;
    let mean = x.iter().flatten().sum::<f64>() / count;
    let var = x.iter().flatten().map(|v| (v - mean).powi(2)).sum::<f64>() / count;
    if var > 0.0 {
        1.0 / (x[0].len() as f64 * var)
    } else {
        1.0
    }
}

pub(super) fn fit(x: &[Vec<f64>], y: &[usize], class_count: usize, p: &SvmParams) -> Result<SvmModel> {
    let n = x.len();
    let gamma = match p.kernel_sigma {
        Some(s) => 1.0 / (2.0 * s * s),
        None => scale_gamma(x),
    };
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        q[i * n + i] = 2.0;
        for j in (i + 1)..n {
            let k = (-gamma * sq_dist(&x[i], &x[j])).exp() + 1.0;
            q[i * n + j] = k;
            q[j * n + i] = k;
        }
    }

    let mut alphas: Vec<Option<Vec<f64>>> = Vec::with_capacity(class_count);
    for c in 0..class_count {
        if !y.contains(&c) {
            alphas.push(None);
            continue;
        }
        let sign: Vec<f64> = y.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
        alphas.push(Some(dual_coordinate_ascent(&q, &sign, p)?));
    }

    let keep: Vec<usize> = (0..n)
        .filter(|&i| alphas.iter().flatten().any(|a| a[i] > 0.0))
        .collect();
    let coef = alphas
        .iter()
        .enumerate()
        .map(|(c, a)| {
            a.as_ref().map(|a| {
                keep.iter()
                    .map(|&i| if y[i] == c { a[i] } else { -a[i] })
                    .collect()
            })
        })
        .collect();
    Ok(SvmModel {
        gamma,
        support: keep.iter().map(|&i| x[i].clone()).collect(),
        coef,
    })
}

fn dual_coordinate_ascent(q: &[f64], sign: &[f64], p: &SvmParams) -> Result<Vec<f64>> {
    let n = sign.len();
    let mut alpha = vec![0.0; n];
    // f[i] = Σⱼ αⱼ yⱼ Q[i][j]
    let mut f = vec![0.0; n];
    for _ in 0..p.max_passes {
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let grad = sign[i] * f[i] - 1.0;
            let projected = if alpha[i] <= 0.0 {
                grad.min(0.0)
            } else if alpha[i] >= p.c {
                grad.max(0.0)
            } else {
                grad
            };
            worst = worst.max(projected.abs());
            if projected == 0.0 {
                continue;
            }
            let updated = (alpha[i] - grad / q[i * n + i]).clamp(0.0, p.c);
            let delta = (updated - alpha[i]) * sign[i];
            if delta != 0.0 {
                let row = &q[i * n..(i + 1) * n];
                for (fj, qij) in f.iter_mut().zip(row) {
                    *fj += delta * qij;
                }
                alpha[i] = updated;
            }
        }
        if worst < p.tol {
            return Ok(alpha);
        }
    }
    if alpha.iter().any(|a| !a.is_finite()) {
        return Err(MpecError::NumericalFailure("svm dual diverged".into()));
    }
    // pass cap reached: return the current iterate, which is feasible
    Ok(alpha)
}

impl SvmModel {
    /// Signed one-vs-rest decision values.
    pub fn decision(&self, row: &[f64]) -> Vec<f64> {
        let k: Vec<f64> = self
            .support
            .iter()
            .map(|s| (-self.gamma * sq_dist(s, row)).exp() + 1.0)
            .collect();
        self.coef
            .iter()
            .map(|c| match c {
                Some(c) => c.iter().zip(&k).map(|(a, b)| a * b).sum(),
                None => -1.0,
            })
            .collect()
    }

    pub fn support_count(&self) -> usize {
        self.support.len()
    }
}
