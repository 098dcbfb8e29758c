//! Per-trial SPD features: label-correlated channel selection, sample
//! covariance, an RBF similarity kernel between channel time series, and
//! their weighted fusion.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MpecError, Result};
use crate::linalg::{nearest_spd, SpdMatrix, SymMatrix};

/// Variance floor used when z-scoring a flat channel.
const ZSCORE_VARIANCE_FLOOR: f64 = 1e-12;
const LOG_VARIANCE_FLOOR: f64 = 1e-300;

/// One labelled multichannel segment, stored channel-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    channels: usize,
    samples: usize,
    data: Vec<f64>,
    pub label: usize,
}

impl Trial {
    pub fn new(channels: usize, samples: usize, data: Vec<f64>, label: usize) -> Result<Self> {
        if channels == 0 {
            return Err(MpecError::Shape("trial needs at least one channel".into()));
        }
        if samples < 2 {
            return Err(MpecError::InsufficientSamples(samples));
        }
        if data.len() != channels * samples {
            return Err(MpecError::Shape(format!(
                "{} values for {channels} channels x {samples} samples",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(MpecError::NumericalFailure("non-finite sample in trial".into()));
        }
        Ok(Trial {
            channels,
            samples,
            data,
            label,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, ch: usize) -> &[f64] {
        &self.data[ch * self.samples..(ch + 1) * self.samples]
    }

    /// Restricts the trial to `channels`, in the given order.
    pub fn select(&self, channels: &[usize]) -> Result<Trial> {
        check_channels(channels, self.channels)?;
        let mut data = Vec::with_capacity(channels.len() * self.samples);
        for &ch in channels {
            data.extend_from_slice(self.channel(ch));
        }
        Ok(Trial {
            channels: channels.len(),
            samples: self.samples,
            data,
            label: self.label,
        })
    }
}

fn check_channels(channels: &[usize], available: usize) -> Result<()> {
    if channels.is_empty() {
        return Err(MpecError::InvalidConfig("no channels selected".into()));
    }
    let mut seen = vec![false; available];
    for &ch in channels {
        if ch >= available {
            return Err(MpecError::Shape(format!(
                "channel {ch} out of range for {available} channels"
            )));
        }
        if std::mem::replace(&mut seen[ch], true) {
            return Err(MpecError::InvalidConfig(format!("channel {ch} selected twice")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub selected_channels: Vec<usize>,
    /// RBF bandwidth.
    pub sigma: f64,
    pub w_cov: f64,
    pub w_rbf: f64,
    pub pd_floor: f64,
}

impl FeatureConfig {
    pub fn validate(&self, available_channels: usize) -> Result<()> {
        check_channels(&self.selected_channels, available_channels)?;
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(MpecError::InvalidConfig(format!("sigma must be > 0, got {}", self.sigma)));
        }
        check_weight_pair("w_cov", self.w_cov, "w_rbf", self.w_rbf)?;
        if !(self.pd_floor > 0.0) {
            return Err(MpecError::InvalidConfig("pd_floor must be > 0".into()));
        }
        Ok(())
    }
}

pub(crate) fn check_weight_pair(na: &str, a: f64, nb: &str, b: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || (a + b - 1.0).abs() > 1e-12 {
        return Err(MpecError::InvalidConfig(format!(
            "{na}={a} and {nb}={b} must lie in [0,1] and sum to 1"
        )));
    }
    Ok(())
}

/// Sample covariance across channels, treating every time sample as one
/// observation and normalizing by `T − 1`.
pub fn covariance(trial: &Trial) -> Result<SymMatrix> {
    let (n, t) = (trial.channels, trial.samples);
    if t < 2 {
        return Err(MpecError::InsufficientSamples(t));
    }
    let centered: Vec<Vec<f64>> = (0..n)
        .map(|ch| {
            let x = trial.channel(ch);
            let mean = x.iter().sum::<f64>() / t as f64;
            x.iter().map(|v| v - mean).collect()
        })
        .collect();
    let denom = (t - 1) as f64;
    let mut out = vec![0.0; n * n];
    for a in 0..n {
        for b in a..n {
            let s: f64 = centered[a].iter().zip(&centered[b]).map(|(x, y)| x * y).sum();
            out[a * n + b] = s / denom;
            out[b * n + a] = s / denom;
        }
    }
    SymMatrix::new(n, out)
}

fn sample_variance(x: &[f64]) -> f64 {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    // flat within rounding → correlation undefined, reported as 0
    let flat_x = sxx <= (1e-24 * mx * mx).max(f64::MIN_POSITIVE) * n;
    if flat_x || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

/// Per-channel relevance: the largest absolute point-biserial correlation
/// between a channel's per-trial log-variance and any one-vs-rest class
/// indicator.
pub fn channel_scores(trials: &[Trial]) -> Result<Vec<f64>> {
    let first = trials.first().ok_or(MpecError::EmptyInput("channel_scores trials"))?;
    let n = first.channels;
    if let Some(bad) = trials.iter().find(|t| t.channels != n) {
        return Err(MpecError::Shape(format!(
            "mixed channel counts {n} and {}",
            bad.channels
        )));
    }
    let mut classes: Vec<usize> = trials.iter().map(|t| t.label).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(MpecError::DegenerateLabels);
    }
    let indicators: Vec<Vec<f64>> = classes
        .iter()
        .map(|&c| trials.iter().map(|t| f64::from(u8::from(t.label == c))).collect())
        .collect();
    Ok((0..n)
        .map(|ch| {
            let logvar: Vec<f64> = trials
                .iter()
                .map(|t| sample_variance(t.channel(ch)).max(LOG_VARIANCE_FLOOR).ln())
                .collect();
            indicators
                .iter()
                .map(|ind| pearson(&logvar, ind).abs())
                .fold(0.0, f64::max)
        })
        .collect())
}

/// Indices of the `k` highest scores, best first, ties to the lower index.
pub fn select_channels(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > scores.len() {
        return Err(MpecError::BadK {
            k,
            max: scores.len(),
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(order)
}

/// `K[a][b] = exp(−D²(a,b) / 2σ²)` where `D²` is the mean squared difference
/// between the z-scored series of channels `a` and `b`.
pub fn rbf_channel_kernel(trial: &Trial, sigma: f64) -> Result<SymMatrix> {
    if !(sigma > 0.0) {
        return Err(MpecError::InvalidConfig(format!("sigma must be > 0, got {sigma}")));
    }
    let (n, t) = (trial.channels, trial.samples);
    let z: Vec<Vec<f64>> = (0..n)
        .map(|ch| {
            let x = trial.channel(ch);
            let mean = x.iter().sum::<f64>() / t as f64;
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64;
            let sd = var.max(ZSCORE_VARIANCE_FLOOR).sqrt();
            x.iter().map(|v| (v - mean) / sd).collect()
        })
        .collect();
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut out = vec![0.0; n * n];
    for a in 0..n {
        out[a * n + a] = 1.0;
        for b in (a + 1)..n {
            let d2 = z[a].iter().zip(&z[b]).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / t as f64;
            let k = (-d2 * inv).exp();
            out[a * n + b] = k;
            out[b * n + a] = k;
        }
    }
    SymMatrix::new(n, out)
}

/// `nearest_spd(w_cov · C/max|C| + w_rbf · K)`.
pub fn fuse(c: &SymMatrix, k: &SymMatrix, cfg: &FeatureConfig) -> Result<SpdMatrix> {
    if c.dim() != k.dim() {
        return Err(MpecError::Shape(format!(
            "covariance {} vs kernel {}",
            c.dim(),
            k.dim()
        )));
    }
    check_weight_pair("w_cov", cfg.w_cov, "w_rbf", cfg.w_rbf)?;
    let peak = c.max_abs();
    let c_hat = if peak > 0.0 { c.scale(1.0 / peak) } else { c.clone() };
    let fused = c_hat.lincomb(cfg.w_cov, k, cfg.w_rbf)?;
    nearest_spd(&fused, cfg.pd_floor)
}

/// Full per-trial feature: channel selection, covariance, kernel, fusion.
pub fn extract(trial: &Trial, cfg: &FeatureConfig) -> Result<SpdMatrix> {
    let sel = trial.select(&cfg.selected_channels)?;
    fuse(&covariance(&sel)?, &rbf_channel_kernel(&sel, cfg.sigma)?, cfg)
}

pub fn extract_all(trials: &[Trial], cfg: &FeatureConfig) -> Result<Vec<SpdMatrix>> {
    trials.par_iter().map(|t| extract(t, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(channels: usize, rows: &[&[f64]], label: usize) -> Trial {
        let samples = rows[0].len();
        Trial::new(channels, samples, rows.concat(), label).unwrap()
    }

    #[test]
    fn covariance_examples() {
        let t = trial(2, &[&[0.0, 2.0], &[0.0, 2.0]], 0);
        assert_eq!(covariance(&t).unwrap().as_slice(), &[2.0, 2.0, 2.0, 2.0]);

        let t = trial(2, &[&[3.0, 3.0, 3.0], &[-1.0, -1.0, -1.0]], 0);
        assert_eq!(covariance(&t).unwrap().max_abs(), 0.0);

        let t = trial(1, &[&[1.0, 3.0]], 0);
        assert_eq!(covariance(&t).unwrap().as_slice(), &[2.0]);

        assert!(matches!(
            Trial::new(1, 1, vec![1.0], 0),
            Err(MpecError::InsufficientSamples(1))
        ));
    }

    #[test]
    fn channel_scores_examples() {
        // channel 0 separates classes by variance, channel 1 is identical everywhere
        let quiet: &[f64] = &[1.0, -1.0, 1.0, -1.0];
        let loud: &[f64] = &[5.0, -5.0, 5.0, -5.0];
        let same: &[f64] = &[0.5, 0.1, -0.3, 0.2];
        let trials = vec![
            trial(2, &[quiet, same], 0),
            trial(2, &[quiet, same], 0),
            trial(2, &[loud, same], 1),
            trial(2, &[loud, same], 1),
        ];
        let s = channel_scores(&trials).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-12);
        assert_eq!(s[1], 0.0);

        let one_class: Vec<Trial> = trials.iter().map(|t| Trial { label: 0, ..t.clone() }).collect();
        assert!(matches!(channel_scores(&one_class), Err(MpecError::DegenerateLabels)));
    }

    #[test]
    fn select_channels_examples() {
        assert_eq!(select_channels(&[0.9, 0.1, 0.5], 2).unwrap(), vec![0, 2]);
        assert_eq!(select_channels(&[0.9, 0.1, 0.5], 3).unwrap(), vec![0, 2, 1]);
        assert_eq!(select_channels(&[0.3, 0.3, 0.3], 3).unwrap(), vec![0, 1, 2]);
        assert!(matches!(select_channels(&[0.3], 2), Err(MpecError::BadK { .. })));
        assert!(matches!(select_channels(&[0.3], 0), Err(MpecError::BadK { .. })));
    }

    #[test]
    fn rbf_examples() {
        let t = trial(3, &[&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0], &[4.0, 0.0, 1.0]], 0);
        let k = rbf_channel_kernel(&t, 0.5).unwrap();
        for i in 0..3 {
            assert_eq!(k.get(i, i), 1.0);
        }
        assert_eq!(k.get(0, 1), 1.0);
        assert!(k.get(0, 2) > 0.0 && k.get(0, 2) < 1.0);

        // both series z-score to ±1 and disagree on half the samples: D² = 2,
        // so σ√2 reproduces the D² = 1 values at σ
        let a: &[f64] = &[1.0, -1.0, 1.0, -1.0];
        let b: &[f64] = &[1.0, 1.0, -1.0, -1.0];
        let t = trial(2, &[a, b], 0);
        let k = rbf_channel_kernel(&t, 1.0).unwrap();
        assert!((k.get(0, 1) - (-1.0f64).exp()).abs() < 1e-15);
        let k = rbf_channel_kernel(&t, 2f64.sqrt()).unwrap();
        assert!((k.get(0, 1) - (-0.5f64).exp()).abs() < 1e-15);
        assert!(((-0.5f64).exp() - 0.6065).abs() < 1e-4);
        let k = rbf_channel_kernel(&t, 0.1 * 2f64.sqrt()).unwrap();
        assert!((k.get(0, 1) / (-50.0f64).exp() - 1.0).abs() < 1e-12);
        assert!(((-50.0f64).exp() / 1.93e-22 - 1.0).abs() < 0.01);
    }

    #[test]
    fn rbf_flat_channel_is_not_an_error() {
        let t = trial(2, &[&[2.0, 2.0, 2.0], &[1.0, 0.0, -1.0]], 0);
        let k = rbf_channel_kernel(&t, 1.0).unwrap();
        assert!(k.get(0, 1) > 0.0 && k.get(0, 1) < 1.0);
    }

    fn cfg(w_cov: f64, w_rbf: f64) -> FeatureConfig {
        FeatureConfig {
            selected_channels: vec![0, 1],
            sigma: 0.1,
            w_cov,
            w_rbf,
            pd_floor: 1e-8,
        }
    }

    #[test]
    fn fuse_examples() {
        let c = SymMatrix::new(2, vec![1.0, 0.2, 0.2, 0.5]).unwrap();
        let k = SymMatrix::new(2, vec![1.0, 0.9, 0.9, 1.0]).unwrap();
        assert_eq!(fuse(&c, &k, &cfg(1.0, 0.0)).unwrap().as_sym(), &c);

        let kk = SymMatrix::new(2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let f = fuse(&c, &kk, &cfg(0.0, 1.0)).unwrap();
        let expected = nearest_spd(&kk, 1e-8).unwrap();
        assert_eq!(f, expected);

        let f = fuse(&SymMatrix::diag(&[1.0, 0.5]), &SymMatrix::identity(2), &cfg(0.5, 0.5))
            .unwrap();
        assert_eq!(f.as_sym(), &SymMatrix::diag(&[1.0, 0.75]));

        assert!(fuse(&c, &k, &cfg(0.6, 0.6)).is_err());
    }
}
