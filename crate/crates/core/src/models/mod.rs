//! Classifiers behind a single raw-row prediction interface.
//!
//! Every model encodes internally, so explainers always perturb rows in the
//! original feature space.

mod bundle;
mod gbt;
mod logistic;
mod metrics;
mod registry;

use std::any::Any;

pub use bundle::{load_bundle, read_bundle, save_bundle, write_bundle, ModelBundle, BUNDLE_FORMAT, BUNDLE_VERSION};
pub use gbt::{train_gbt, GbtHyper, GbtModel, Tree, TreeNode};
pub use logistic::{train_logistic, LogisticHyper, LogisticModel};
pub use metrics::{evaluate, Averaging, Confusion, Metrics};
pub use registry::{ModelFamily, ModelRegistry};

use crate::dataset::Schema;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean logistic loss of margins against 0/1 labels.
pub fn mean_log_loss(margins: &[f64], y: &[f64]) -> f64 {
    let total: f64 = margins
        .iter()
        .zip(y)
        .map(|(&z, &t)| {
            let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            softplus - t * z
        })
        .sum();
    total / margins.len().max(1) as f64
}

pub fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-15, 1.0 - 1e-15);
    (p / (1.0 - p)).ln()
}

/// Argmax label of a positive-class probability; ties go to the negative
/// class.
pub fn label_of(p: f64) -> u8 {
    u8::from(p > 0.5)
}

/// Anything that maps a raw row to a positive-class probability.
///
/// Implementations must be deterministic pure functions of the row.
pub trait PredictiveModel: Send + Sync {
    fn predict_positive(&self, row: &[f64]) -> f64;

    /// Log-odds of the positive class.
    fn margin(&self, row: &[f64]) -> f64 {
        logit(self.predict_positive(row))
    }

    /// `[negative, positive]`
    fn predict_proba(&self, row: &[f64]) -> [f64; 2] {
        let p = self.predict_positive(row);
        [1.0 - p, p]
    }

    /// Argmax class; ties go to the negative class.
    fn predict_label(&self, row: &[f64]) -> u8 {
        label_of(self.predict_positive(row))
    }

    fn predict_batch(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| self.predict_positive(r)).collect()
    }
}

impl<F> PredictiveModel for F
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn predict_positive(&self, row: &[f64]) -> f64 {
        self(row)
    }
}

/// A model produced by a registered family, persistable as a bundle.
pub trait TrainedModel: PredictiveModel {
    fn family(&self) -> &'static str;
    fn schema(&self) -> &Schema;
    /// (negative, positive)
    fn class_labels(&self) -> (&str, &str);
    fn hyperparameters(&self) -> serde_json::Value;
    fn parameters(&self) -> serde_json::Value;
    fn as_any(&self) -> &dyn Any;
}

#[cfg(test)]
pub(crate) mod testutil {
    use crate::dataset::{CohortFilter, Dataset, FeatureMeta, QuestionId, QuestionSpec, Schema};

    pub fn dataset(schema: Schema, rows: Vec<Vec<f64>>, target: Vec<u8>) -> Dataset {
        let n = rows.len();
        Dataset {
            schema,
            rows,
            target,
            question: QuestionSpec::standard(QuestionId::Da, &CohortFilter::lung()),
            class_labels: ("Alive".into(), "Dead".into()),
            row_ids: (0..n).collect(),
            provenance_seed: 0,
        }
    }

    pub fn numeric_schema(m: usize) -> Schema {
        Schema::new(
            (0..m)
                .map(|j| FeatureMeta::numeric(&format!("x{j}"), &format!("x{j}"), None))
                .collect(),
        )
        .unwrap()
    }
}
