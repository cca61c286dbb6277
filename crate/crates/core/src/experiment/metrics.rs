use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NUM_CLASSES;

/// Binary classification metrics. Class 0 is rumor. Precision, recall and
/// F1 are macro averages of the per-class values; a ratio with a zero
/// denominator counts as 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub rumor_precision: f64,
    pub rumor_recall: f64,
    pub rumor_f1: f64,
    /// `confusion[true][predicted]`.
    pub confusion: [[usize; NUM_CLASSES]; NUM_CLASSES],
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl Metrics {
    pub fn from_confusion(confusion: [[usize; NUM_CLASSES]; NUM_CLASSES]) -> Self {
        let n: usize = confusion.iter().flatten().sum();
        let correct: usize = (0..NUM_CLASSES).map(|c| confusion[c][c]).sum();
        let mut per_class = [(0.0, 0.0, 0.0); NUM_CLASSES];
        for (c, slot) in per_class.iter_mut().enumerate() {
            let predicted: usize = (0..NUM_CLASSES).map(|t| confusion[t][c]).sum();
            let actual: usize = confusion[c].iter().sum();
            let p = ratio(confusion[c][c], predicted);
            let r = ratio(confusion[c][c], actual);
            *slot = (p, r, f1(p, r));
        }
        let k = NUM_CLASSES as f64;
        Self {
            n,
            accuracy: ratio(correct, n),
            precision: per_class.iter().map(|c| c.0).sum::<f64>() / k,
            recall: per_class.iter().map(|c| c.1).sum::<f64>() / k,
            f1: per_class.iter().map(|c| c.2).sum::<f64>() / k,
            rumor_precision: per_class[0].0,
            rumor_recall: per_class[0].1,
            rumor_f1: per_class[0].2,
            confusion,
        }
    }

    /// Named values in report order.
    pub fn named(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("accuracy", self.accuracy),
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1", self.f1),
            ("rumor_precision", self.rumor_precision),
            ("rumor_recall", self.rumor_recall),
            ("rumor_f1", self.rumor_f1),
        ]
    }
}

pub fn compute_metrics(predictions: &[usize], labels: &[usize]) -> Result<Metrics> {
    if predictions.len() != labels.len() {
        return Err(Error::InvalidData(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut confusion = [[0usize; NUM_CLASSES]; NUM_CLASSES];
    for (&p, &t) in predictions.iter().zip(labels) {
        if p >= NUM_CLASSES || t >= NUM_CLASSES {
            return Err(Error::InvalidData(format!("class index out of range: {p}/{t}")));
        }
        confusion[t][p] += 1;
    }
    Ok(Metrics::from_confusion(confusion))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_correct() {
        let m = compute_metrics(&[0, 1, 1, 0], &[0, 1, 1, 0]).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.f1, 1.0);
    }

    #[test]
    fn constant_rumor_predictor() {
        let labels = [0, 0, 1, 1];
        let m = compute_metrics(&[0; 4], &labels).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert!((m.f1 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.rumor_recall, 1.0);
        assert_eq!(m.confusion, [[2, 0], [2, 0]]);
    }

    #[test]
    fn length_mismatch() {
        assert!(compute_metrics(&[0], &[]).is_err());
    }
}
