use serde::{Deserialize, Serialize};

use super::PredictiveModel;
use crate::dataset::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    Weighted,
    Macro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    fn ratio(num: usize, den: usize) -> f64 {
        if den == 0 { 0.0 } else { num as f64 / den as f64 }
    }

    /// Per-class (negative, positive) precision.
    pub fn precision_per_class(&self) -> [f64; 2] {
        [Self::ratio(self.tn, self.tn + self.fn_), Self::ratio(self.tp, self.tp + self.fp)]
    }

    /// Per-class (negative, positive) recall.
    pub fn recall_per_class(&self) -> [f64; 2] {
        [Self::ratio(self.tn, self.tn + self.fp), Self::ratio(self.tp, self.tp + self.fn_)]
    }

    pub fn accuracy(&self) -> f64 {
        Self::ratio(self.tp + self.tn, self.total())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub averaging: Averaging,
    pub confusion: Confusion,
}

impl Metrics {
    pub fn from_confusion(c: Confusion, averaging: Averaging) -> Self {
        let p = c.precision_per_class();
        let r = c.recall_per_class();
        let support = [(c.tn + c.fp) as f64, (c.tp + c.fn_) as f64];
        let total = support[0] + support[1];
        let avg = |v: [f64; 2]| match averaging {
            Averaging::Macro => (v[0] + v[1]) / 2.0,
            Averaging::Weighted if total > 0.0 => (v[0] * support[0] + v[1] * support[1]) / total,
            Averaging::Weighted => 0.0,
        };
        Metrics {
            precision: avg(p),
            recall: avg(r),
            accuracy: c.accuracy(),
            averaging,
            confusion: c,
        }
    }
}

/// Support-weighted precision and recall plus accuracy at `threshold`.
pub fn evaluate(model: &dyn PredictiveModel, test: &Dataset, threshold: f64) -> Metrics {
    evaluate_with(model, test, threshold, Averaging::Weighted)
}

pub fn evaluate_with(model: &dyn PredictiveModel, test: &Dataset, threshold: f64, averaging: Averaging) -> Metrics {
    let mut c = Confusion::default();
    for (row, &t) in test.rows.iter().zip(&test.target) {
        let pred = model.predict_positive(row) > threshold;
        match (pred, t == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Metrics::from_confusion(c, averaging)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testutil::{dataset, numeric_schema};

    fn half_and_half() -> Dataset {
        let rows = (0..100).map(|i| vec![i as f64]).collect();
        let target = (0..100).map(|i| u8::from(i >= 50)).collect();
        dataset(numeric_schema(1), rows, target)
    }

    #[test]
    fn perfect_predictor() {
        let d = half_and_half();
        let m = evaluate(&|r: &[f64]| if r[0] >= 50.0 { 0.9 } else { 0.1 }, &d, 0.5);
        assert_eq!((m.precision, m.recall, m.accuracy), (1.0, 1.0, 1.0));
    }

    #[test]
    fn always_positive_predictor() {
        let d = half_and_half();
        let m = evaluate(&|_: &[f64]| 0.8, &d, 0.5);
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.confusion, Confusion { tp: 50, fp: 50, tn: 0, fn_: 0 });
        // negative class has no predictions: its precision is defined as 0
        assert_eq!(m.precision, 0.25);
        assert_eq!(m.recall, 0.5);
    }

    #[test]
    fn single_class_test_set_is_defined() {
        let d = dataset(numeric_schema(1), vec![vec![0.0]; 4], vec![1; 4]);
        let m = evaluate(&|_: &[f64]| 0.2, &d, 0.5);
        assert_eq!(m.accuracy, 0.0);
        assert!(m.precision.is_finite() && m.recall.is_finite());
    }

    #[test]
    fn weighted_recall_equals_accuracy() {
        let d = half_and_half();
        let m = evaluate(&|r: &[f64]| if r[0] >= 30.0 { 0.9 } else { 0.1 }, &d, 0.5);
        assert!((m.recall - m.accuracy).abs() < 1e-12);
        let mac = evaluate_with(&|r: &[f64]| if r[0] >= 30.0 { 0.9 } else { 0.1 }, &d, 0.5, Averaging::Macro);
        assert!((mac.recall - 0.8).abs() < 1e-12);
    }
}
