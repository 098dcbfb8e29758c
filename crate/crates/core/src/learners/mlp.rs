//! Single-hidden-layer perceptron: tanh hidden units, softmax output,
//! cross-entropy loss with an L2 penalty, trained by mini-batch Adam.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::softmax_in_place;
use crate::error::{MpecError, Result};
use crate::rng;

/// Relative error allowed between analytic and central-difference gradients.
pub const GRADIENT_CHECK_TOL: f64 = 1e-4;
const GRADIENT_CHECK_STEP: f64 = 1e-5;
const GRADIENT_PROBE_ROWS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpParams {
    pub hidden: usize,
    /// L2 penalty strength.
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Verify backpropagation against central differences before training.
    pub gradient_check: bool,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: 100,
            alpha: 1e-4,
            learning_rate: 1e-3,
            epochs: 100,
            batch_size: 32,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            gradient_check: false,
        }
    }
}

impl MlpParams {
    pub(crate) fn validate(&self) -> Result<()> {
        let ok = self.hidden > 0
            && self.alpha >= 0.0
            && self.learning_rate > 0.0
            && self.epochs > 0
            && self.batch_size > 0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if !ok {
            return Err(MpecError::InvalidConfig("mlp parameters out of range".into()));
        }
        Ok(())
    }
}

/// Flat parameter vector `[W1 (h×d), b1 (h), W2 (L×h), b2 (L)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    inputs: usize,
    hidden: usize,
    outputs: usize,
    params: Vec<f64>,
}

impl MlpModel {
    fn new(inputs: usize, hidden: usize, outputs: usize) -> Self {
        MlpModel {
            inputs,
            hidden,
            outputs,
            params: vec![0.0; hidden * inputs + hidden + outputs * hidden + outputs],
        }
    }

    fn offsets(&self) -> [usize; 4] {
        let w1 = 0;
        let b1 = self.hidden * self.inputs;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.outputs * self.hidden;
        [w1, b1, w2, b2]
    }

    /// Glorot-uniform weights and biases.
    fn initialize(&mut self, rng: &mut impl Rng) {
        let [_, _, w2, _] = self.offsets();
        let hidden_bound = (6.0 / (self.inputs + self.hidden) as f64).sqrt();
        let out_bound = (6.0 / (self.hidden + self.outputs) as f64).sqrt();
        for (i, p) in self.params.iter_mut().enumerate() {
            let bound = if i < w2 { hidden_bound } else { out_bound };
            *p = rng.gen_range(-bound..bound);
        }
    }

    fn hidden_activations(&self, params: &[f64], row: &[f64]) -> Vec<f64> {
        let [w1, b1, _, _] = self.offsets();
        (0..self.hidden)
            .map(|j| {
                let w = &params[w1 + j * self.inputs..w1 + (j + 1) * self.inputs];
                (params[b1 + j] + w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>()).tanh()
            })
            .collect()
    }

    fn output_logits(&self, params: &[f64], a: &[f64]) -> Vec<f64> {
        let [_, _, w2, b2] = self.offsets();
        (0..self.outputs)
            .map(|c| {
                let w = &params[w2 + c * self.hidden..w2 + (c + 1) * self.hidden];
                params[b2 + c] + w.iter().zip(a).map(|(x, y)| x * y).sum::<f64>()
            })
            .collect()
    }

    pub fn probabilities(&self, row: &[f64]) -> Vec<f64> {
        let a = self.hidden_activations(&self.params, row);
        let mut z = self.output_logits(&self.params, &a);
        softmax_in_place(&mut z);
        z
    }

    fn l2(&self, params: &[f64]) -> f64 {
        let [w1, b1, w2, b2] = self.offsets();
        params[w1..b1].iter().chain(&params[w2..b2]).map(|v| v * v).sum()
    }

    /// Batch loss `mean CE + α/(2|B|)·‖W‖²` and optionally its gradient.
    fn loss(&self, params: &[f64], rows: &[&[f64]], labels: &[usize], alpha: f64, grad: Option<&mut [f64]>) -> f64 {
        let m = rows.len() as f64;
        let [w1, b1, w2, b2] = self.offsets();
        let mut g = grad;
        if let Some(g) = g.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut total = 0.0;
        for (row, &label) in rows.iter().zip(labels) {
            let a = self.hidden_activations(params, row);
            let mut p = self.output_logits(params, &a);
            let max = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + p.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            total += lse - p[label];
            let Some(g) = g.as_deref_mut() else { continue };
            softmax_in_place(&mut p);
            p[label] -= 1.0;
            let mut back = vec![0.0; self.hidden];
            for c in 0..self.outputs {
                let delta = p[c] / m;
                g[b2 + c] += delta;
                for j in 0..self.hidden {
                    g[w2 + c * self.hidden + j] += delta * a[j];
                    back[j] += delta * params[w2 + c * self.hidden + j];
                }
            }
            for j in 0..self.hidden {
                let dz = back[j] * (1.0 - a[j] * a[j]);
                g[b1 + j] += dz;
                for (k, x) in row.iter().enumerate() {
                    g[w1 + j * self.inputs + k] += dz * x;
                }
            }
        }
        let penalty = 0.5 * alpha / m;
        if let Some(g) = g {
            for i in (w1..b1).chain(w2..b2) {
                g[i] += 2.0 * penalty * params[i];
            }
        }
        total / m + penalty * self.l2(params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    /// `‖g_analytic − g_numeric‖₂ / max(‖g_analytic‖₂, ‖g_numeric‖₂)`.
    pub relative_error: f64,
    /// Largest per-parameter absolute discrepancy.
    pub max_abs_error: f64,
    pub parameters: usize,
}

impl GradientCheck {
    pub fn passed(&self) -> bool {
        self.relative_error <= GRADIENT_CHECK_TOL
    }
}

/// Compares backpropagated gradients with central differences (step 1e-5) on
/// the first five rows, at a freshly initialized network.
pub fn gradient_check(x: &[Vec<f64>], y: &[usize], class_count: usize, p: &MlpParams, seed: u64) -> Result<GradientCheck> {
    if x.is_empty() {
        return Err(MpecError::EmptyInput("gradient check rows"));
    }
    let mut net = MlpModel::new(x[0].len(), p.hidden, class_count);
    net.initialize(&mut rng::rng_for(seed, &[1]));
    Ok(check_at(&net, x, y, p.alpha))
}

fn check_at(net: &MlpModel, x: &[Vec<f64>], y: &[usize], alpha: f64) -> GradientCheck {
    let take = x.len().min(GRADIENT_PROBE_ROWS);
    let rows: Vec<&[f64]> = x[..take].iter().map(Vec::as_slice).collect();
    let labels = &y[..take];
    let mut analytic = vec![0.0; net.params.len()];
    net.loss(&net.params, &rows, labels, alpha, Some(&mut analytic));
    let mut probe = net.params.clone();
    let (mut diff, mut na, mut nn, mut max_abs) = (0.0, 0.0, 0.0, 0.0f64);
    for i in 0..probe.len() {
        let orig = probe[i];
        probe[i] = orig + GRADIENT_CHECK_STEP;
        let up = net.loss(&probe, &rows, labels, alpha, None);
        probe[i] = orig - GRADIENT_CHECK_STEP;
        let down = net.loss(&probe, &rows, labels, alpha, None);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * GRADIENT_CHECK_STEP);
        diff += (analytic[i] - numeric).powi(2);
        na += analytic[i].powi(2);
        nn += numeric * numeric;
        max_abs = max_abs.max((analytic[i] - numeric).abs());
    }
    let scale = na.sqrt().max(nn.sqrt());
    GradientCheck {
        relative_error: if scale > 0.0 { diff.sqrt() / scale } else { 0.0 },
        max_abs_error: max_abs,
        parameters: probe.len(),
    }
}

pub(super) fn fit(x: &[Vec<f64>], y: &[usize], class_count: usize, p: &MlpParams, seed: u64) -> Result<MlpModel> {
    let mut net = MlpModel::new(x[0].len(), p.hidden, class_count);
    net.initialize(&mut rng::rng_for(seed, &[1]));
    if p.gradient_check {
        let check = check_at(&net, x, y, p.alpha);
        if !check.passed() {
            return Err(MpecError::NumericalFailure(format!(
                "mlp gradient check failed: relative error {:e}",
                check.relative_error
            )));
        }
    }

    let mut shuffle_rng = rng::rng_for(seed, &[2]);
    let mut order: Vec<usize> = (0..x.len()).collect();
    let size = net.params.len();
    let (mut m1, mut m2) = (vec![0.0; size], vec![0.0; size]);
    let mut grad = vec![0.0; size];
    let mut step = 0i32;
    let batch = p.batch_size.min(x.len());
    for _ in 0..p.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(batch) {
            let rows: Vec<&[f64]> = chunk.iter().map(|&i| x[i].as_slice()).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
            let params = std::mem::take(&mut net.params);
            net.loss(&params, &rows, &labels, p.alpha, Some(&mut grad));
            net.params = params;
            step += 1;
            let c1 = 1.0 - p.beta1.powi(step);
            let c2 = 1.0 - p.beta2.powi(step);
            let lr = p.learning_rate * c2.sqrt() / c1;
            for i in 0..size {
                m1[i] = p.beta1 * m1[i] + (1.0 - p.beta1) * grad[i];
                m2[i] = p.beta2 * m2[i] + (1.0 - p.beta2) * grad[i] * grad[i];
                net.params[i] -= lr * m1[i] / (m2[i].sqrt() + p.epsilon);
            }
        }
    }
    if net.params.iter().any(|v| !v.is_finite()) {
        return Err(MpecError::NumericalFailure("mlp weights diverged".into()));
    }
    Ok(net)
}
