//! Classification scores: macro precision/recall/F1, accuracy, confusion.

use serde::{Deserialize, Serialize};

use crate::error::{MpecError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores `predicted` against `truth`. Classes are `0..=max id seen`; the
/// macro averages skip classes with no support in `truth`.
pub fn evaluate(predicted: &[usize], truth: &[usize]) -> Result<EvalReport> {
    if predicted.len() != truth.len() {
        return Err(MpecError::LengthMismatch(predicted.len(), truth.len()));
    }
    if truth.is_empty() {
        return Err(MpecError::EmptyInput("evaluation labels"));
    }
    let classes = predicted.iter().chain(truth).max().unwrap() + 1;
    let mut confusion = vec![vec![0u64; classes]; classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        confusion[t][p] += 1;
    }
    let per_class: Vec<ClassMetrics> = (0..classes)
        .map(|c| {
            let tp = confusion[c][c];
            let support: u64 = confusion[c].iter().sum();
            let predicted_c: u64 = confusion.iter().map(|row| row[c]).sum();
            let precision = ratio(tp, predicted_c);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                class: c,
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let present: Vec<&ClassMetrics> = per_class.iter().filter(|m| m.support > 0).collect();
    let macro_avg = |f: fn(&ClassMetrics) -> f64| present.iter().map(|m| f(m)).sum::<f64>() / present.len() as f64;
    let correct: u64 = (0..classes).map(|c| confusion[c][c]).sum();
    Ok(EvalReport {
        precision: macro_avg(|m| m.precision),
        recall: macro_avg(|m| m.recall),
        f1: macro_avg(|m| m.f1),
        accuracy: ratio(correct, truth.len() as u64),
        confusion,
        per_class,
    })
}

impl EvalReport {
    /// Per-class rows as CSV with a header line.
    pub fn per_class_csv(&self) -> String {
        let mut out = String::from("class,precision,recall,f1,support\n");
        for m in &self.per_class {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                m.class, m.precision, m.recall, m.f1, m.support
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let y = [0, 1, 2, 2, 1];
        let r = evaluate(&y, &y).unwrap();
        assert_eq!((r.precision, r.recall, r.f1, r.accuracy), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn two_by_two_by_hand() {
        let r = evaluate(&[0, 1, 0, 1], &[0, 0, 1, 1]).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.precision, 0.5);
        assert_eq!(r.recall, 0.5);
        assert_eq!(r.f1, 0.5);
        assert_eq!(r.confusion, vec![vec![1, 1], vec![1, 1]]);
    }

    #[test]
    fn constant_prediction_on_balanced_classes() {
        let truth: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let r = evaluate(&vec![2; 40], &truth).unwrap();
        assert_eq!(r.accuracy, 0.25);
        assert_eq!(r.per_class[0].precision, 0.0);
    }

    #[test]
    fn classes_absent_from_truth_are_not_averaged() {
        let r = evaluate(&[0, 2], &[0, 0]).unwrap();
        assert_eq!(r.recall, 0.5);
        assert_eq!(r.precision, 1.0);
    }

    #[test]
    fn rejects_mismatched_lengths() {
        assert!(matches!(evaluate(&[0], &[0, 1]), Err(MpecError::LengthMismatch(1, 2))));
        assert!(evaluate(&[], &[]).is_err());
    }

    #[test]
    fn csv_has_header_plus_one_row_per_class() {
        let r = evaluate(&[0, 1, 2, 3], &[0, 1, 2, 3]).unwrap();
        assert_eq!(r.per_class_csv().lines().count(), 5);
    }
}
