//! Explainable Boosting Machine: a generalized additive model whose
//! per-feature shape functions are grown by cyclic gradient boosting.
//!
//! Each visit to a feature fits one depth-1 Newton step on the logistic-loss
//! gradient over that feature's bins, scaled by the learning rate. The shape
//! is then re-centred to zero data-weighted mean and the offset folded into
//! the intercept, so `raw(x) = intercept + sum_j shape_j(x_j)` at all times.

use std::any::Any;

use serde::{Deserialize, Serialize};

use crate::attribution::{Attribution, Units};
use crate::dataset::{Dataset, FeatureKind, Schema};
use crate::error::{Error, Result};
use crate::models::{mean_log_loss as log_loss, sigmoid, PredictiveModel, TrainedModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EbmHyper {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_bins: usize,
    /// Minimum rows on each side of a shape-function split.
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for EbmHyper {
    fn default() -> Self {
        EbmHyper { rounds: 300, learning_rate: 0.05, max_bins: 64, min_leaf: 20, seed: 0 }
    }
}

/// Piecewise-constant additive score for one feature, in log-odds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeFunction {
    pub feature: String,
    pub kind: FeatureKind,
    /// Ascending cut points (numeric); bin `b` holds `cuts[b-1] <= x < cuts[b]`.
    pub cuts: Vec<f64>,
    /// Category names (categorical); one bin per category.
    pub categories: Vec<String>,
    pub scores: Vec<f64>,
    /// Training rows per bin.
    pub counts: Vec<usize>,
}

impl ShapeFunction {
    pub fn n_bins(&self) -> usize {
        self.scores.len()
    }

    /// Bin of a cell value; out-of-range inputs clamp to the terminal bins.
    #[inline]
    pub fn bin(&self, value: f64) -> usize {
        match self.kind {
            FeatureKind::Numeric => self.cuts.partition_point(|&c| c <= value),
            FeatureKind::Categorical => {
                if value <= 0.0 {
                    0
                } else {
                    (value as usize).min(self.scores.len() - 1)
                }
            }
        }
    }

    #[inline]
    pub fn score(&self, value: f64) -> f64 {
        self.scores[self.bin(value)]
    }

    /// Count-weighted mean score over the training data.
    pub fn weighted_mean(&self) -> f64 {
        let n: usize = self.counts.iter().sum();
        if n == 0 {
            return 0.0;
        }
        self.scores.iter().zip(&self.counts).map(|(s, &c)| s * c as f64).sum::<f64>() / n as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EbmModel {
    pub schema: Schema,
    pub class_labels: (String, String),
    pub intercept: f64,
    pub shapes: Vec<ShapeFunction>,
    pub hyper: EbmHyper,
    /// Training log-loss before boosting and after each full round.
    #[serde(default)]
    pub loss_trace: Vec<f64>,
}

impl EbmModel {
    pub fn raw_score(&self, row: &[f64]) -> f64 {
        self.intercept + self.shapes.iter().zip(row).map(|(s, &v)| s.score(v)).sum::<f64>()
    }
}

impl PredictiveModel for EbmModel {
    fn margin(&self, row: &[f64]) -> f64 {
        self.raw_score(row)
    }

    fn predict_positive(&self, row: &[f64]) -> f64 {
        sigmoid(self.raw_score(row))
    }
}

impl TrainedModel for EbmModel {
    fn family(&self) -> &'static str {
        "ebm"
    }
    fn schema(&self) -> &Schema {
        &self.schema
    }
    fn class_labels(&self) -> (&str, &str) {
        (&self.class_labels.0, &self.class_labels.1)
    }
    fn hyperparameters(&self) -> serde_json::Value {
        serde_json::to_value(&self.hyper).expect("serializable")
    }
    fn parameters(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("serializable")
    }
    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Equal-frequency cut points over a column.
fn quantile_cuts(values: &[f64], max_bins: usize) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut uniq = v.clone();
    uniq.dedup();
    if uniq.len() <= max_bins {
        return uniq.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    let n = v.len();
    let mut cuts: Vec<f64> = Vec::with_capacity(max_bins - 1);
    for k in 1..max_bins {
        let idx = k * n / max_bins;
        if idx == 0 || idx >= n || v[idx - 1] == v[idx] {
            // cut at the next value change after idx
            let Some(off) = v[idx.max(1)..].windows(2).position(|w| w[0] != w[1]) else { continue };
            let at = idx.max(1) + off;
            let c = 0.5 * (v[at] + v[at + 1]);
            if cuts.last().map_or(true, |&l| c > l) {
                cuts.push(c);
            }
            continue;
        }
        let c = 0.5 * (v[idx - 1] + v[idx]);
        if cuts.last().map_or(true, |&l| c > l) {
            cuts.push(c);
        }
    }
    cuts
}


/// Fits an EBM by round-robin boosting over features.
pub fn train_ebm(train: &Dataset, hyper: &EbmHyper) -> Result<EbmModel> {
    if hyper.max_bins < 2 {
        return Err(Error::Config("ebm: max_bins must be >= 2".into()));
    }
    if !(hyper.learning_rate > 0.0) {
        return Err(Error::Config("ebm: learning_rate must be > 0".into()));
    }
    if train.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    let (neg, pos) = train.class_counts();
    if neg == 0 || pos == 0 {
        return Err(Error::Training("ebm needs both classes".into()));
    }
    let n = train.len();
    let mut shapes = Vec::with_capacity(train.n_features());
    let mut bins: Vec<Vec<u32>> = Vec::with_capacity(train.n_features());
    for (j, f) in train.schema.iter().enumerate() {
        let col: Vec<f64> = train.rows.iter().map(|r| r[j]).collect();
        let mut shape = match f.kind {
            FeatureKind::Numeric => {
                let cuts = quantile_cuts(&col, hyper.max_bins);
                let nb = cuts.len() + 1;
                ShapeFunction {
                    feature: f.display_name.clone(),
                    kind: f.kind,
                    cuts,
                    categories: Vec::new(),
                    scores: vec![0.0; nb],
                    counts: vec![0; nb],
                }
            }
            FeatureKind::Categorical => ShapeFunction {
                feature: f.display_name.clone(),
                kind: f.kind,
                cuts: Vec::new(),
                categories: f.categories.clone(),
                scores: vec![0.0; f.categories.len()],
                counts: vec![0; f.categories.len()],
            },
        };
        let b: Vec<u32> = col.iter().map(|&v| shape.bin(v) as u32).collect();
        for &k in &b {
            shape.counts[k as usize] += 1;
        }
        bins.push(b);
        shapes.push(shape);
    }

    let y: Vec<f64> = train.target.iter().map(|&t| f64::from(t)).collect();
    let prior = pos as f64 / n as f64;
    let mut intercept = (prior / (1.0 - prior)).ln();
    let mut margins = vec![intercept; n];
    let mut trace = vec![log_loss(&margins, &y)];
    const HESS_FLOOR: f64 = 1e-9;

    for _ in 0..hyper.rounds {
        for (shape, b) in shapes.iter_mut().zip(&bins) {
            let nb = shape.n_bins();
            let mut g = vec![0.0; nb];
            let mut h = vec![0.0; nb];
            for (i, &k) in b.iter().enumerate() {
                let p = sigmoid(margins[i]);
                g[k as usize] += p - y[i];
                h[k as usize] += p * (1.0 - p);
            }
            let (gt, ht): (f64, f64) = (g.iter().sum(), h.iter().sum());
            let mut best: Option<(f64, usize, f64, f64)> = None;
            let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0usize);
            for s in 1..nb {
                gl += g[s - 1];
                hl += h[s - 1];
                nl += shape.counts[s - 1];
                let nr = n - nl;
                if nl < hyper.min_leaf || nr < hyper.min_leaf || shape.counts[s - 1] == 0 {
                    continue;
                }
                let (gr, hr) = (gt - gl, ht - hl);
                let gain = gl * gl / (hl + HESS_FLOOR) + gr * gr / (hr + HESS_FLOOR);
                if best.map_or(true, |(bg, ..)| gain > bg) {
                    best = Some((gain, s, gl, hl));
                }
            }
            let Some((_, split, gl, hl)) = best else { continue };
            let left = -hyper.learning_rate * gl / (hl + HESS_FLOOR);
            let right = -hyper.learning_rate * (gt - gl) / (ht - hl + HESS_FLOOR);
            for (k, s) in shape.scores.iter_mut().enumerate() {
                *s += if k < split { left } else { right };
            }
            for (i, &k) in b.iter().enumerate() {
                margins[i] += if (k as usize) < split { left } else { right };
            }
            let mean = shape.weighted_mean();
            for s in &mut shape.scores {
                *s -= mean;
            }
            intercept += mean;
        }
        trace.push(log_loss(&margins, &y));
    }

    Ok(EbmModel {
        schema: train.schema.clone(),
        class_labels: train.class_labels.clone(),
        intercept,
        shapes,
        hyper: hyper.clone(),
        loss_trace: trace,
    })
}

/// `[negative, positive]` probabilities.
pub fn ebm_predict(model: &EbmModel, row: &[f64]) -> [f64; 2] {
    model.predict_proba(row)
}

/// Exact additive explanation in log-odds: base = intercept, one shape
/// lookup per feature.
pub fn ebm_local_explain(model: &EbmModel, row: &[f64]) -> Attribution {
    let contributions: Vec<f64> = model.shapes.iter().zip(row).map(|(s, &v)| s.score(v)).collect();
    Attribution {
        features: model.schema.names(),
        base_value: model.intercept,
        fx: model.intercept + contributions.iter().sum::<f64>(),
        contributions,
        explained_class: model.class_labels.1.clone(),
        units: Units::LogOdds,
    }
}

/// Mean absolute shape score per feature over `data`, descending; ties keep
/// schema order.
pub fn ebm_global_importance(model: &EbmModel, data: &Dataset) -> Vec<(String, f64)> {
    let n = data.len().max(1) as f64;
    let mut out: Vec<(String, f64)> = model
        .shapes
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let total: f64 = data.rows.iter().map(|r| s.score(r[j]).abs()).sum();
            (s.feature.clone(), total / n)
        })
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    out
}
