//! Tabular data preparation: ingestion, cleaning, per-question datasets,
//! balancing, splitting, encoding, and the synthetic record generator.

mod clean;
mod encode;
mod io;
mod question;
mod resample;
mod schema;
pub mod synth;

pub use clean::{clean, CleanReport, CleaningRules, Implication, RangeRule};
pub use encode::{encode, Encoder, EncodingStrategy};
pub use io::{load_csv, write_csv};
pub use question::{make_question_dataset, CohortFilter, QuestionId, QuestionSpec};
pub use resample::{balance, split};
pub use schema::{FeatureKind, FeatureMeta, Schema};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows straight from ingestion; any cell may be null.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub schema: Schema,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl RawTable {
    pub fn new(schema: Schema, rows: Vec<Vec<Option<f64>>>) -> Result<Self> {
        let t = RawTable { schema, rows };
        t.validate()?;
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.schema.len() {
                return Err(Error::Dataset(format!(
                    "row {i} has {} cells, schema has {}",
                    row.len(),
                    self.schema.len()
                )));
            }
            for (f, cell) in self.schema.iter().zip(row) {
                if let Some(v) = cell {
                    if !f.accepts(*v) {
                        return Err(Error::OutOfVocabulary {
                            feature: f.display_name.clone(),
                            value: v.to_string(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let j = self.schema.require(name)?;
        Ok(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn null_row_count(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.iter().any(Option::is_none))
            .count()
    }
}

/// A fully materialized binary classification dataset for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: Schema,
    pub rows: Vec<Vec<f64>>,
    pub target: Vec<u8>,
    pub question: QuestionSpec,
    /// (negative label, positive label)
    pub class_labels: (String, String),
    /// Index of each row in the table it was derived from.
    pub row_ids: Vec<usize>,
    pub provenance_seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    /// (negatives, positives)
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.target.iter().filter(|&&t| t == 1).count();
        (self.target.len() - pos, pos)
    }

    pub fn positive_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.class_counts().1 as f64 / self.len() as f64
    }

    /// Keeps the rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            target: indices.iter().map(|&i| self.target[i]).collect(),
            question: self.question.clone(),
            class_labels: self.class_labels.clone(),
            row_ids: indices.iter().map(|&i| self.row_ids[i]).collect(),
            provenance_seed: self.provenance_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.len() != self.target.len() || self.rows.len() != self.row_ids.len() {
            return Err(Error::Dataset("rows, target and row ids differ in length".into()));
        }
        for row in &self.rows {
            self.schema.check_row(row)?;
        }
        if self.target.iter().any(|&t| t > 1) {
            return Err(Error::Dataset("target must be binary".into()));
        }
        for name in &self.question.excluded_features {
            if self.schema.index_of(name).is_some() {
                return Err(Error::Dataset(format!(
                    "excluded feature `{name}` present among inputs"
                )));
            }
        }
        Ok(())
    }

    /// Stable fingerprint of the dataset contents.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.schema.hash().as_bytes());
        for (row, t) in self.rows.iter().zip(&self.target) {
            for v in row {
                h.update(v.to_le_bytes());
            }
            h.update([*t]);
        }
        hex::encode(h.finalize())
    }
}
