//! Confusion-matrix metrics.
//!
//! Per-class precision/recall/F treat each class in turn as the positive
//! one. Macro values are unweighted means over the two classes; macro F is
//! the mean of the per-class F values.

use serde::{Deserialize, Serialize};

/// Rows are actual classes, columns predicted (0 Expert, 1 Inexpert).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn from_predictions(actual: &[usize], predicted: &[usize]) -> Self {
        let mut cm = Self::default();
        for (&a, &p) in actual.iter().zip(predicted) {
            cm.record(a, p);
        }
        cm
    }

    pub fn record(&mut self, actual: usize, predicted: usize) {
        self.counts[actual][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        self.counts[0][0] + self.counts[1][1]
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.correct(), self.total())
    }

    /// Metrics with class `c` as the positive class.
    pub fn class_metrics(&self, c: usize) -> ClassMetrics {
        let o = 1 - c;
        let tp = self.counts[c][c];
        let fn_ = self.counts[c][o];
        let fp = self.counts[o][c];
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f_measure = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        ClassMetrics { precision, recall, f_measure, support: tp + fn_ }
    }
}

/// `0/0` is reported as 0.
fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub per_class_expert: ClassMetrics,
    pub per_class_inexpert: ClassMetrics,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f_measure: f64,
    pub confusion_matrix: ConfusionMatrix,
    pub total_time: f64,
}

impl EvalReport {
    pub fn from_confusion(cm: ConfusionMatrix, total_time: f64) -> Self {
        let e = cm.class_metrics(0);
        let i = cm.class_metrics(1);
        EvalReport {
            accuracy: cm.accuracy(),
            per_class_expert: e,
            per_class_inexpert: i,
            macro_precision: (e.precision + i.precision) / 2.0,
            macro_recall: (e.recall + i.recall) / 2.0,
            macro_f_measure: (e.f_measure + i.f_measure) / 2.0,
            confusion_matrix: cm,
            total_time,
        }
    }

    pub fn min_class_f(&self) -> f64 {
        self.per_class_expert.f_measure.min(self.per_class_inexpert.f_measure)
    }
}
