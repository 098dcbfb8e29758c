//! Weak learners and the ridge meta-model behind one classifier contract.
//!
//! Every learner is fitted on dense feature rows with class ids in
//! `0..class_count` and produces one score row of width `class_count` per
//! input. Classes absent from a particular training set still get a column.

mod forest;
mod logreg;
mod mlp;
mod ridge;
mod svm;

use serde::{Deserialize, Serialize};

use crate::error::{MpecError, Result};

pub use forest::{ForestModel, ForestParams};
pub use logreg::{LogRegModel, LogRegParams};
pub use mlp::{gradient_check, GradientCheck, MlpModel, MlpParams, GRADIENT_CHECK_TOL};
pub use ridge::{ridge_solve, RidgeModel, RidgeParams};
pub use svm::{SvmModel, SvmParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Svm,
    LogReg,
    Mlp,
    Forest,
    Ridge,
}

impl LearnerKind {
    /// The four base learners of the stacking ensemble, in meta-feature order.
    pub const WEAK: [LearnerKind; 4] = [
        LearnerKind::Svm,
        LearnerKind::LogReg,
        LearnerKind::Mlp,
        LearnerKind::Forest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::Svm => "svm",
            LearnerKind::LogReg => "logreg",
            LearnerKind::Mlp => "mlp",
            LearnerKind::Forest => "forest",
            LearnerKind::Ridge => "ridge",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerParams {
    pub svm: SvmParams,
    pub logreg: LogRegParams,
    pub mlp: MlpParams,
    pub forest: ForestParams,
    pub ridge: RidgeParams,
}

impl LearnerParams {
    pub fn validate(&self) -> Result<()> {
        self.svm.validate()?;
        self.logreg.validate()?;
        self.mlp.validate()?;
        self.forest.validate()?;
        self.ridge.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LearnerModel {
    Svm(SvmModel),
    LogReg(LogRegModel),
    Mlp(MlpModel),
    Forest(ForestModel),
    Ridge(RidgeModel),
    /// Stand-in for a training set holding a single class.
    Constant { class: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedLearner {
    pub kind: LearnerKind,
    pub class_count: usize,
    pub n_features: usize,
    pub training_seed: u64,
    pub model: LearnerModel,
}

/// Checks rows, labels and class coverage; returns the feature width.
fn validate_training(x: &[Vec<f64>], y: &[usize], class_count: usize) -> Result<usize> {
    if x.is_empty() {
        return Err(MpecError::EmptyInput("training rows"));
    }
    if x.len() != y.len() {
        return Err(MpecError::LengthMismatch(x.len(), y.len()));
    }
    let width = check_rows(x, None)?;
    if let Some(&bad) = y.iter().find(|&&c| c >= class_count) {
        return Err(MpecError::LabelOutOfRange {
            label: bad as u64,
            limit: class_count as u64,
        });
    }
    if y.iter().all(|&c| c == y[0]) {
        return Err(MpecError::SingleClass);
    }
    Ok(width)
}

fn check_rows(x: &[Vec<f64>], expected: Option<usize>) -> Result<usize> {
    let width = expected.unwrap_or_else(|| x.first().map_or(0, Vec::len));
    if width == 0 {
        return Err(MpecError::Shape("feature rows are empty".into()));
    }
    for row in x {
        if row.len() != width {
            return Err(MpecError::Shape(format!(
                "feature row of width {} where {width} expected",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(MpecError::NumericalFailure("non-finite feature value".into()));
        }
    }
    Ok(width)
}

pub fn fit(
    kind: LearnerKind,
    x: &[Vec<f64>],
    y: &[usize],
    class_count: usize,
    params: &LearnerParams,
    seed: u64,
) -> Result<TrainedLearner> {
    let n_features = validate_training(x, y, class_count)?;
    let model = match kind {
        LearnerKind::Svm => LearnerModel::Svm(svm::fit(x, y, class_count, &params.svm)?),
        LearnerKind::LogReg => {
            LearnerModel::LogReg(logreg::fit(x, y, class_count, &params.logreg)?)
        }
        LearnerKind::Mlp => LearnerModel::Mlp(mlp::fit(x, y, class_count, &params.mlp, seed)?),
        LearnerKind::Forest => {
            LearnerModel::Forest(forest::fit(x, y, class_count, &params.forest, seed)?)
        }
        LearnerKind::Ridge => LearnerModel::Ridge(ridge::fit(x, y, class_count, &params.ridge)?),
    };
    Ok(TrainedLearner {
        kind,
        class_count,
        n_features,
        training_seed: seed,
        model,
    })
}

impl TrainedLearner {
    /// A learner that always predicts `class`; scores are one-hot, or ±1 for
    /// the margin-style learners.
    pub fn constant(kind: LearnerKind, class: usize, class_count: usize, n_features: usize) -> Self {
        TrainedLearner {
            kind,
            class_count,
            n_features,
            training_seed: 0,
            model: LearnerModel::Constant { class },
        }
    }

    pub fn predict_scores(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if x.is_empty() {
            return Ok(Vec::new());
        }
        check_rows(x, Some(self.n_features))?;
        let l = self.class_count;
        Ok(match &self.model {
            LearnerModel::Svm(m) => x.iter().map(|r| m.decision(r)).collect(),
            LearnerModel::LogReg(m) => x.iter().map(|r| m.probabilities(r)).collect(),
            LearnerModel::Mlp(m) => x.iter().map(|r| m.probabilities(r)).collect(),
            LearnerModel::Forest(m) => x.iter().map(|r| m.votes(r, l)).collect(),
            LearnerModel::Ridge(m) => x.iter().map(|r| m.scores(r)).collect(),
            LearnerModel::Constant { class } => {
                let off = match self.kind {
                    LearnerKind::Svm | LearnerKind::Ridge => -1.0,
                    _ => 0.0,
                };
                let row: Vec<f64> = (0..l).map(|c| if c == *class { 1.0 } else { off }).collect();
                vec![row; x.len()]
            }
        })
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<usize>> {
        Ok(self.predict_scores(x)?.iter().map(|r| argmax(r)).collect())
    }
}

/// Index of the largest score, ties to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}
