//! Multinomial logistic regression with an L1 penalty on the weights,
//! minimized by accelerated proximal gradient (FISTA) with backtracking and
//! adaptive restart.

use serde::{Deserialize, Serialize};

use super::softmax_in_place;
use crate::error::{MpecError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogRegParams {
    pub max_iter: usize,
    /// Penalty on `‖W‖₁` added to the mean cross-entropy. Intercepts are not
    /// penalized.
    pub l1_strength: f64,
    /// Stop when the proximal gradient mapping norm falls below this.
    pub tol: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams {
            max_iter: 1000,
            l1_strength: 1e-3,
            tol: 1e-6,
        }
    }
}

impl LogRegParams {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || !(self.l1_strength >= 0.0) || !(self.tol > 0.0) {
            return Err(MpecError::InvalidConfig(
                "logreg needs max_iter > 0, l1_strength >= 0, tol > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    /// `class_count × d`, row-major.
    weights: Vec<f64>,
    intercept: Vec<f64>,
    n_features: usize,
    pub iterations: usize,
}

struct Problem<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    classes: usize,
    d: usize,
}

impl Problem<'_> {
    fn weight_len(&self) -> usize {
        self.classes * self.d
    }

    fn logits(&self, theta: &[f64], row: &[f64]) -> Vec<f64> {
        let (w, b) = theta.split_at(self.weight_len());
        (0..self.classes)
            .map(|c| b[c] + w[c * self.d..(c + 1) * self.d].iter().zip(row).map(|(a, v)| a * v).sum::<f64>())
            .collect()
    }

    /// Mean cross-entropy and, optionally, its gradient.
    fn loss(&self, theta: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let n = self.x.len() as f64;
        let mut total = 0.0;
        let mut g = grad;
        if let Some(g) = g.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        for (row, &label) in self.x.iter().zip(self.y) {
            let mut p = self.logits(theta, row);
            let max = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + p.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            total += lse - p[label];
            if let Some(g) = g.as_deref_mut() {
                softmax_in_place(&mut p);
                p[label] -= 1.0;
                let (gw, gb) = g.split_at_mut(self.weight_len());
                for c in 0..self.classes {
                    let r = p[c] / n;
                    gb[c] += r;
                    for (gv, xv) in gw[c * self.d..(c + 1) * self.d].iter_mut().zip(row) {
                        *gv += r * xv;
                    }
                }
            }
        }
        total / n
    }
}

fn l1(theta: &[f64], weight_len: usize) -> f64 {
    theta[..weight_len].iter().map(|v| v.abs()).sum()
}

pub(super) fn fit(x: &[Vec<f64>], y: &[usize], class_count: usize, p: &LogRegParams) -> Result<LogRegModel> {
    let prob = Problem {
        x,
        y,
        classes: class_count,
        d: x[0].len(),
    };
    let wl = prob.weight_len();
    let size = wl + class_count;
    let lambda = p.l1_strength;

    let mut current = vec![0.0; size];
    let mut momentum = current.clone();
    let mut t: f64 = 1.0;
    let mut lip = 1.0;
    let mut objective = prob.loss(&current, None) + lambda * l1(&current, wl);
    let mut grad = vec![0.0; size];
    let mut candidate = vec![0.0; size];
    let mut iterations = 0;

    while iterations < p.max_iter {
        iterations += 1;
        let fy = prob.loss(&momentum, Some(&mut grad));
        let mapping;
        loop {
            let shrink = lambda / lip;
            for i in 0..size {
                let v = momentum[i] - grad[i] / lip;
                candidate[i] = if i < wl {
                    v.signum() * (v.abs() - shrink).max(0.0)
                } else {
                    v
                };
            }
            let fz = prob.loss(&candidate, None);
            let (mut lin, mut sq) = (0.0, 0.0);
            for i in 0..size {
                let d = candidate[i] - momentum[i];
                lin += grad[i] * d;
                sq += d * d;
            }
            if fz <= fy + lin + 0.5 * lip * sq + 1e-12 * fy.abs() {
                mapping = lip * sq.sqrt();
                break;
            }
            lip *= 2.0;
            if !lip.is_finite() {
                return Err(MpecError::NumericalFailure("logreg line search diverged".into()));
            }
        }
        let cand_obj = prob.loss(&candidate, None) + lambda * l1(&candidate, wl);
        if cand_obj > objective {
            // adaptive restart: drop momentum and retry from the last iterate
            momentum.copy_from_slice(&current);
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        for i in 0..size {
            momentum[i] = candidate[i] + beta * (candidate[i] - current[i]);
        }
        current.copy_from_slice(&candidate);
        objective = cand_obj;
        t = t_next;
        if mapping <= p.tol {
            break;
        }
    }

    let intercept = current.split_off(wl);
    Ok(LogRegModel {
        weights: current,
        intercept,
        n_features: prob.d,
        iterations,
    })
}

impl LogRegModel {
    pub fn probabilities(&self, row: &[f64]) -> Vec<f64> {
        let d = self.n_features;
        let mut z: Vec<f64> = self
            .intercept
            .iter()
            .enumerate()
            .map(|(c, b)| b + self.weights[c * d..(c + 1) * d].iter().zip(row).map(|(w, v)| w * v).sum::<f64>())
            .collect();
        softmax_in_place(&mut z);
        z
    }

    pub fn nonzero_weights(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }
}
