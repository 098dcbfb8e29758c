//! JSON run configuration for the command-line tool.
//!
//! Every key is optional; omitted keys take the defaults below and unknown
//! keys are rejected.
//!
//! ```json
//! {
//!   "seed": 0,
//!   "split_ratio": 0.8,
//!   "split_seed": null,
//!   "cv_folds": 5,
//!   "features": { "channels": null, "sigma": 0.1, "w_cov": 0.5, "w_rbf": 0.5, "pd_floor": 1e-8 },
//!   "cluster": { "k": 3, "w1": 0.7, "w2": 0.3, "max_iter": 100, "min_cluster_size": null, "restarts": 10 },
//!   "learners": {
//!     "svm": { "c": 1.0, "kernel_sigma": null, "max_passes": 10000, "tol": 0.001 },
//!     "logreg": { "max_iter": 1000, "l1_strength": 0.001, "tol": 1e-6 },
//!     "mlp": { "hidden": 100, "alpha": 0.0001, "learning_rate": 0.001, "epochs": 100, "batch_size": 32, ... },
//!     "forest": { "trees": 100, "max_depth": null, "features_per_split": null, "bootstrap": true },
//!     "ridge": { "alpha": 10.0, "tol": 0.0001 }
//!   },
//!   "paths": { "archive": null, "model": null, "out": null }
//! }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ensemble::{ClusterSettings, FeatureSettings, PipelineConfig};
use crate::error::{MpecError, Result};
use crate::features::check_weight_pair;
use crate::learners::LearnerParams;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub archive: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub split_ratio: f64,
    /// Seed of the train/test split; `None` reuses `seed`.
    pub split_seed: Option<u64>,
    pub cv_folds: usize,
    pub features: FeatureSettings,
    pub cluster: ClusterSettings,
    pub learners: LearnerParams,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            split_ratio: 0.8,
            split_seed: None,
            cv_folds: 5,
            features: FeatureSettings::default(),
            cluster: ClusterSettings::default(),
            learners: LearnerParams::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(MpecError::InvalidConfig(format!(
                "split_ratio {} outside (0, 1)",
                self.split_ratio
            )));
        }
        if self.cv_folds < 2 {
            return Err(MpecError::InvalidConfig("cv_folds must be at least 2".into()));
        }
        self.pipeline().validate()
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            features: self.features.clone(),
            cluster: self.cluster.clone(),
            learners: self.learners.clone(),
        }
    }

    pub fn effective_split_seed(&self) -> u64 {
        self.split_seed.unwrap_or(self.seed)
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Parses a JSON document, mapping syntax and schema errors to
/// [`MpecError::InvalidConfig`].
pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| MpecError::InvalidConfig(format!("{origin}: {e}")))
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| MpecError::InvalidConfig(format!("{}: {e}", path.display())))?;
    parse_json(&text, &path.display().to_string())
}

/// Cells to sweep in a grid search. Missing axes keep the base config value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// `(w_cov, w_rbf)` pairs.
    #[serde(default)]
    pub fusion: Option<Vec<[f64; 2]>>,
    /// `(w1, w2)` pairs.
    #[serde(default)]
    pub cluster: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub k: Option<Vec<usize>>,
}

/// One grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub w_cov: f64,
    pub w_rbf: f64,
    pub w1: f64,
    pub w2: f64,
    pub k: usize,
}

impl GridCell {
    pub fn apply(&self, base: &RunConfig) -> RunConfig {
        let mut cfg = base.clone();
        cfg.features.w_cov = self.w_cov;
        cfg.features.w_rbf = self.w_rbf;
        cfg.cluster.w1 = self.w1;
        cfg.cluster.w2 = self.w2;
        cfg.cluster.k = self.k;
        cfg
    }
}

/// Weight pairs `(0, 1), (0.1, 0.9), …, (1, 0)`.
pub fn weight_sweep() -> Vec<[f64; 2]> {
    (0..=10)
        .map(|i| {
            let a = i as f64 / 10.0;
            [a, 1.0 - a]
        })
        .collect()
}

impl GridSpec {
    /// Expands the axes into cells: fusion outermost, then cluster weights,
    /// then k.
    pub fn cells(&self, base: &RunConfig) -> Result<Vec<GridCell>> {
        let fusion = self
            .fusion
            .clone()
            .unwrap_or_else(|| vec![[base.features.w_cov, base.features.w_rbf]]);
        let cluster = self
            .cluster
            .clone()
            .unwrap_or_else(|| vec![[base.cluster.w1, base.cluster.w2]]);
        let ks = self.k.clone().unwrap_or_else(|| vec![base.cluster.k]);
        if fusion.is_empty() || cluster.is_empty() || ks.is_empty() {
            return Err(MpecError::InvalidConfig("grid has an empty axis".into()));
        }
        for [a, b] in &fusion {
            check_weight_pair("w_cov", *a, "w_rbf", *b)?;
        }
        for [a, b] in &cluster {
            check_weight_pair("w1", *a, "w2", *b)?;
        }
        if ks.contains(&0) {
            return Err(MpecError::InvalidConfig("grid k values must be positive".into()));
        }
        let mut cells = Vec::with_capacity(fusion.len() * cluster.len() * ks.len());
        for f in &fusion {
            for c in &cluster {
                for &k in &ks {
                    cells.push(GridCell {
                        w_cov: f[0],
                        w_rbf: f[1],
                        w1: c[0],
                        w2: c[1],
                        k,
                    });
                }
            }
        }
        Ok(cells)
    }
}
