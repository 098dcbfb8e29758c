//! The full pipeline: features, manifold clustering, per-cluster tangent
//! projection, and a stacking ensemble whose base learners are trained
//! inside each cluster and whose ridge meta-model is shared by all clusters.
//!
//! Meta-features for a training trial are the concatenated class-score rows
//! of its own cluster's four base learners (width `4·L`), produced out of
//! fold: each cluster is split into stratified folds (five, or one per point
//! when the cluster is smaller than that) and every row is scored by learners
//! that never saw it.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::stratified_folds;
use crate::error::{MpecError, Result};
use crate::features::{self, FeatureConfig, Trial};
use crate::kmeans::{kmeans_fit, ClusterConfig, ClusterModel};
use crate::learners::{self, argmax, LearnerKind, LearnerParams, TrainedLearner};
use crate::linalg::{SpdMatrix, SPD_FLOOR};
use crate::manifold::BasePoint;
use crate::metrics::evaluate;
use crate::rng;
use crate::tangent::project_point;

pub const META_FOLDS: usize = 5;
const WEAK_COUNT: usize = LearnerKind::WEAK.len();

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureSettings {
    /// Number of top-scoring channels to keep; `None` keeps all of them.
    pub channels: Option<usize>,
    pub sigma: f64,
    pub w_cov: f64,
    pub w_rbf: f64,
    pub pd_floor: f64,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        FeatureSettings {
            channels: None,
            sigma: 0.1,
            w_cov: 0.5,
            w_rbf: 0.5,
            pd_floor: SPD_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterSettings {
    pub k: usize,
    pub w1: f64,
    pub w2: f64,
    pub max_iter: usize,
    /// `None` means twice the class count.
    pub min_cluster_size: Option<usize>,
    pub restarts: usize,
}

impl Default for ClusterSettings {
    fn default() -> Self {
        ClusterSettings {
            k: 3,
            w1: 0.7,
            w2: 0.3,
            max_iter: 100,
            min_cluster_size: None,
            restarts: 10,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub features: FeatureSettings,
    pub cluster: ClusterSettings,
    pub learners: LearnerParams,
}

impl PipelineConfig {
    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        let f = &self.features;
        if f.channels == Some(0) {
            return Err(MpecError::InvalidConfig("features.channels must be positive".into()));
        }
        if !(f.sigma > 0.0 && f.sigma.is_finite()) {
            return Err(MpecError::InvalidConfig(format!("features.sigma must be > 0, got {}", f.sigma)));
        }
        features::check_weight_pair("w_cov", f.w_cov, "w_rbf", f.w_rbf)?;
        if !(f.pd_floor > 0.0) {
            return Err(MpecError::InvalidConfig("features.pd_floor must be > 0".into()));
        }
        self.cluster_config(2, 0).validate()?;
        self.learners.validate()
    }

    fn cluster_config(&self, class_count: usize, seed: u64) -> ClusterConfig {
        let c = &self.cluster;
        ClusterConfig {
            k: c.k,
            w1: c.w1,
            w2: c.w2,
            max_iter: c.max_iter,
            seed,
            min_cluster_size: c.min_cluster_size.unwrap_or(2 * class_count),
            restarts: c.restarts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpecModel {
    pub feature_config: FeatureConfig,
    /// Channel count of the trials the model was fitted on.
    pub input_channels: usize,
    pub cluster_model: ClusterModel,
    /// Base learners per surviving cluster, in [`LearnerKind::WEAK`] order.
    pub cluster_learners: Vec<Vec<TrainedLearner>>,
    pub meta_model: TrainedLearner,
    pub class_count: usize,
    /// Side length of the SPD features.
    pub dim: usize,
    pub seed: u64,
    pub provenance: Provenance,
}

/// How the training set was obtained; filled in by callers that split data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub split_seed: Option<u64>,
    pub split_ratio: Option<f64>,
    pub config_hash: Option<String>,
}

/// Everything the model computes for one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: usize,
    pub cluster: usize,
    /// Argmax of each base learner, in [`LearnerKind::WEAK`] order.
    pub weak: [usize; WEAK_COUNT],
    pub meta_scores: Vec<f64>,
}

fn fit_or_constant(
    kind: LearnerKind,
    x: &[Vec<f64>],
    y: &[usize],
    class_count: usize,
    params: &LearnerParams,
    seed: u64,
) -> Result<TrainedLearner> {
    if y.iter().all(|&c| c == y[0]) {
        return Ok(TrainedLearner::constant(kind, y[0], class_count, x[0].len()));
    }
    learners::fit(kind, x, y, class_count, params, seed)
}

fn fit_weak_set(
    x: &[Vec<f64>],
    y: &[usize],
    class_count: usize,
    params: &LearnerParams,
    seed: u64,
) -> Result<Vec<TrainedLearner>> {
    LearnerKind::WEAK
        .par_iter()
        .enumerate()
        .map(|(i, &kind)| fit_or_constant(kind, x, y, class_count, params, rng::derive(seed, &[i as u64])))
        .collect()
}

fn meta_rows(set: &[TrainedLearner], x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let scores = set
        .iter()
        .map(|l| l.predict_scores(x))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..x.len())
        .map(|i| scores.iter().flat_map(|s| s[i].iter().copied()).collect())
        .collect())
}

struct ClusterFit {
    learners: Vec<TrainedLearner>,
    /// `(training index, out-of-fold meta row)`.
    oof: Vec<(usize, Vec<f64>)>,
}

fn fit_cluster(
    x: &[Vec<f64>],
    y: &[usize],
    members: &[usize],
    class_count: usize,
    params: &LearnerParams,
    seed: u64,
) -> Result<ClusterFit> {
    let folds = stratified_folds(y, META_FOLDS.min(y.len()), rng::derive(seed, &[0]))?;
    let per_fold = folds
        .par_iter()
        .enumerate()
        .map(|(f, held)| {
            let mut in_fold = vec![false; y.len()];
            held.iter().for_each(|&i| in_fold[i] = true);
            let train: Vec<usize> = (0..y.len()).filter(|&i| !in_fold[i]).collect();
            let tx: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
            let ty: Vec<usize> = train.iter().map(|&i| y[i]).collect();
            let set = fit_weak_set(&tx, &ty, class_count, params, rng::derive(seed, &[1, f as u64]))?;
            let hx: Vec<Vec<f64>> = held.iter().map(|&i| x[i].clone()).collect();
            let rows = meta_rows(&set, &hx)?;
            Ok(held.iter().map(|&i| members[i]).zip(rows).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let learners = fit_weak_set(x, y, class_count, params, rng::derive(seed, &[2]))?;
    Ok(ClusterFit {
        learners,
        oof: per_fold.into_iter().flatten().collect(),
    })
}

fn check_trials(trials: &[Trial]) -> Result<usize> {
    let first = trials.first().ok_or(MpecError::EmptyInput("trials"))?;
    if let Some(bad) = trials.iter().find(|t| t.channels() != first.channels()) {
        return Err(MpecError::Shape(format!(
            "mixed channel counts {} and {}",
            first.channels(),
            bad.channels()
        )));
    }
    Ok(first.channels())
}

/// Wall-clock milliseconds spent in each phase of a fit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub features_ms: f64,
    pub clustering_ms: f64,
    pub learners_ms: f64,
    pub meta_ms: f64,
}

fn elapsed_ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Fits the whole pipeline on labelled trials.
pub fn mpec_fit(trials: &[Trial], cfg: &PipelineConfig, seed: u64) -> Result<MpecModel> {
    mpec_fit_timed(trials, cfg, seed).map(|(m, _)| m)
}

pub fn mpec_fit_timed(trials: &[Trial], cfg: &PipelineConfig, seed: u64) -> Result<(MpecModel, PhaseTimings)> {
    cfg.validate()?;
    let mut timings = PhaseTimings::default();
    let clock = Instant::now();
    let input_channels = check_trials(trials)?;
    let labels: Vec<usize> = trials.iter().map(|t| t.label).collect();
    let class_count = labels.iter().max().unwrap() + 1;

    let scores = features::channel_scores(trials)?;
    let keep = cfg.features.channels.unwrap_or(input_channels);
    let feature_config = FeatureConfig {
        selected_channels: features::select_channels(&scores, keep)?,
        sigma: cfg.features.sigma,
        w_cov: cfg.features.w_cov,
        w_rbf: cfg.features.w_rbf,
        pd_floor: cfg.features.pd_floor,
    };
    feature_config.validate(input_channels)?;
    let points = features::extract_all(trials, &feature_config)?;
    timings.features_ms = elapsed_ms(clock);

    let clock = Instant::now();
    let cluster_model = kmeans_fit(&points, &cfg.cluster_config(class_count, rng::derive(seed, &[1])))?;
    timings.clustering_ms = elapsed_ms(clock);

    let mut members = vec![Vec::new(); cluster_model.k()];
    for (i, &a) in cluster_model.assignments.iter().enumerate() {
        members[a].push(i);
    }
    if let Some((cluster, m)) = members.iter().enumerate().find(|(_, m)| m.len() < 2) {
        return Err(MpecError::ClusterTooSmall {
            cluster,
            size: m.len(),
            required: 2,
        });
    }

    let clock = Instant::now();
    let fits = members
        .par_iter()
        .enumerate()
        .map(|(j, idx)| {
            let base = BasePoint::new(&cluster_model.centroids[j])?;
            let x = idx
                .iter()
                .map(|&i| project_point(&base, &points[i]))
                .collect::<Result<Vec<_>>>()?;
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            fit_cluster(&x, &y, idx, class_count, &cfg.learners, rng::derive(seed, &[2, j as u64]))
        })
        .collect::<Result<Vec<_>>>()?;

    timings.learners_ms = elapsed_ms(clock);

    let clock = Instant::now();
    let mut oof: Vec<(usize, Vec<f64>)> = Vec::with_capacity(trials.len());
    let mut cluster_learners = Vec::with_capacity(fits.len());
    for f in fits {
        oof.extend(f.oof);
        cluster_learners.push(f.learners);
    }
    oof.sort_by_key(|(i, _)| *i);
    let meta_y: Vec<usize> = oof.iter().map(|(i, _)| labels[*i]).collect();
    let meta_x: Vec<Vec<f64>> = oof.into_iter().map(|(_, r)| r).collect();
    let meta_model = fit_or_constant(
        LearnerKind::Ridge,
        &meta_x,
        &meta_y,
        class_count,
        &cfg.learners,
        rng::derive(seed, &[3]),
    )?;
    timings.meta_ms = elapsed_ms(clock);

    let model = MpecModel {
        dim: feature_config.selected_channels.len(),
        feature_config,
        input_channels,
        cluster_model,
        cluster_learners,
        meta_model,
        class_count,
        seed,
        provenance: Provenance::default(),
    };
    Ok((model, timings))
}

impl MpecModel {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        self.cluster_model.cluster_sizes()
    }

    /// Routes each trial to a cluster and runs that cluster's learners and
    /// the meta-model.
    pub fn predict_detailed(&self, trials: &[Trial]) -> Result<Vec<Prediction>> {
        let needed = self.feature_config.selected_channels.iter().max().map_or(0, |m| m + 1);
        if let Some(bad) = trials.iter().find(|t| t.channels() < needed) {
            return Err(MpecError::Shape(format!(
                "trial has {} channels, the model reads channel {}",
                bad.channels(),
                needed - 1
            )));
        }
        let points: Vec<SpdMatrix> = features::extract_all(trials, &self.feature_config)?;
        let router = self.cluster_model.router()?;
        let bases = self
            .cluster_model
            .centroids
            .iter()
            .map(BasePoint::new)
            .collect::<Result<Vec<_>>>()?;
        points
            .par_iter()
            .map(|p| {
                let (cluster, _) = router.assign(p)?;
                let x = vec![project_point(&bases[cluster], p)?];
                let set = &self.cluster_learners[cluster];
                let mut weak = [0; WEAK_COUNT];
                let mut row = Vec::with_capacity(WEAK_COUNT * self.class_count);
                for (w, l) in weak.iter_mut().zip(set) {
                    let s = l.predict_scores(&x)?.pop().unwrap();
                    *w = argmax(&s);
                    row.extend(s);
                }
                let meta_scores = self.meta_model.predict_scores(&[row])?.pop().unwrap();
                Ok(Prediction {
                    class: argmax(&meta_scores),
                    cluster,
                    weak,
                    meta_scores,
                })
            })
            .collect()
    }

    pub fn predict(&self, trials: &[Trial]) -> Result<Vec<usize>> {
        Ok(self.predict_detailed(trials)?.into_iter().map(|p| p.class).collect())
    }

    /// Predictions of a single base learner, routed per cluster like the
    /// ensemble.
    pub fn predict_weak(&self, trials: &[Trial], kind: LearnerKind) -> Result<Vec<usize>> {
        let slot = LearnerKind::WEAK
            .iter()
            .position(|&k| k == kind)
            .ok_or_else(|| MpecError::InvalidConfig(format!("{} is not a base learner", kind.name())))?;
        Ok(self.predict_detailed(trials)?.into_iter().map(|p| p.weak[slot]).collect())
    }
}

pub fn mpec_predict(model: &MpecModel, trials: &[Trial]) -> Result<Vec<usize>> {
    model.predict(trials)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

/// Stratified K-fold cross-validation of the whole pipeline.
pub fn cross_validate(trials: &[Trial], cfg: &PipelineConfig, folds: usize, seed: u64) -> Result<CvResult> {
    let labels: Vec<usize> = trials.iter().map(|t| t.label).collect();
    let held_out = stratified_folds(&labels, folds, rng::derive(seed, &[4]))?;
    let fold_accuracies = held_out
        .par_iter()
        .enumerate()
        .map(|(f, held)| {
            let mut in_fold = vec![false; trials.len()];
            held.iter().for_each(|&i| in_fold[i] = true);
            let train: Vec<Trial> = (0..trials.len())
                .filter(|&i| !in_fold[i])
                .map(|i| trials[i].clone())
                .collect();
            let test: Vec<Trial> = held.iter().map(|&i| trials[i].clone()).collect();
            let model = mpec_fit(&train, cfg, rng::derive(seed, &[5, f as u64]))?;
            let truth: Vec<usize> = test.iter().map(|t| t.label).collect();
            Ok(evaluate(&model.predict(&test)?, &truth)?.accuracy)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean_accuracy = fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64;
    Ok(CvResult {
        fold_accuracies,
        mean_accuracy,
    })
}
