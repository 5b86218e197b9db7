use std::any::Any;

use serde::{Deserialize, Serialize};

use super::{sigmoid, PredictiveModel, TrainedModel};
use crate::dataset::{Dataset, EncodingStrategy, Encoder, Schema};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticHyper {
    /// L2 penalty on weights (bias unpenalized), sum-of-losses scale.
    pub l2: f64,
    pub max_iters: usize,
    /// Convergence threshold on the gradient norm of the mean objective.
    pub tol: f64,
    pub seed: u64,
}

impl Default for LogisticHyper {
    fn default() -> Self {
        LogisticHyper { l2: 1.0, max_iters: 500, tol: 1e-6, seed: 0 }
    }
}

/// `p(x) = sigmoid(w . standardize(onehot(x)) + b)`
///
/// Numeric columns are standardized with training mean and deviation;
/// indicator columns are used as-is.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticModel {
    pub schema: Schema,
    pub class_labels: (String, String),
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub hyper: LogisticHyper,
    /// Objective value after each accepted iteration.
    #[serde(default)]
    pub loss_trace: Vec<f64>,
    #[serde(skip)]
    encoder: Option<Encoder>,
}

impl LogisticModel {
    fn encoder(&self) -> Encoder {
        Encoder::new(&self.schema, EncodingStrategy::OneHot)
    }

    pub(crate) fn rebuild(mut self) -> Self {
        self.encoder = Some(self.encoder());
        self
    }

    /// Weight of each one-hot column in original (unstandardized) units.
    pub fn raw_weights(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.scale).map(|(w, s)| w / s).collect()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.encoder().column_names().to_vec()
    }
}

impl PredictiveModel for LogisticModel {
    fn margin(&self, row: &[f64]) -> f64 {
        let enc = self.encoder.as_ref().expect("encoder built");
        let mut z = self.bias;
        for (j, &v) in row.iter().enumerate() {
            let cols = enc.columns_of(j);
            if self.schema.get(j).is_categorical() {
                let k = v as usize;
                // indicator columns are never centered or scaled
                if v >= 0.0 && k < cols.len() {
                    z += self.weights[cols.start + k];
                }
            } else {
                let c = cols.start;
                z += self.weights[c] * (v - self.center[c]) / self.scale[c];
            }
        }
        z
    }

    fn predict_positive(&self, row: &[f64]) -> f64 {
        sigmoid(self.margin(row))
    }
}

impl TrainedModel for LogisticModel {
    fn family(&self) -> &'static str {
        "logistic"
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

struct Problem {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    l2: f64,
}

impl Problem {
    /// Mean log-loss plus penalty, and its gradient (bias last).
    fn eval(&self, w: &[f64], b: f64, grad: &mut [f64]) -> f64 {
        let n = self.x.len() as f64;
        let d = w.len();
        grad.fill(0.0);
        let mut loss = 0.0;
        for (xi, &yi) in self.x.iter().zip(&self.y) {
            let z = b + xi.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
            // log(1 + e^z) - y z, computed stably
            let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            loss += softplus - yi * z;
            let r = sigmoid(z) - yi;
            for (g, a) in grad[..d].iter_mut().zip(xi) {
                *g += r * a;
            }
            grad[d] += r;
        }
        let mut penalty = 0.0;
        for (g, wj) in grad[..d].iter_mut().zip(w) {
            *g += self.l2 * wj;
            penalty += wj * wj;
        }
        for g in grad.iter_mut() {
            *g /= n;
        }
        (loss + 0.5 * self.l2 * penalty) / n
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Fits by L2-regularized maximum likelihood using gradient descent with
/// Barzilai-Borwein step sizes and Armijo backtracking; only iterations that
/// decrease the objective are accepted.
///
/// A single-class training set is accepted: the bias then drifts toward the
/// observed class while the penalty holds the weights near zero.
pub fn train_logistic(train: &Dataset, hyper: &LogisticHyper) -> Result<LogisticModel> {
    if train.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    if !(hyper.l2 >= 0.0) || !(hyper.tol > 0.0) {
        return Err(Error::Config("logistic: l2 must be >= 0 and tol > 0".into()));
    }
    let enc = Encoder::new(&train.schema, EncodingStrategy::OneHot);
    let d = enc.width();
    let n = train.len();
    let mut x = Vec::with_capacity(n);
    for row in &train.rows {
        x.push(enc.encode(&train.schema, row)?);
    }

    let mut center = vec![0.0; d];
    let mut scale = vec![1.0; d];
    for (j, f) in train.schema.iter().enumerate() {
        if f.is_categorical() {
            continue;
        }
        let c = enc.columns_of(j).start;
        let mean = x.iter().map(|r| r[c]).sum::<f64>() / n as f64;
        let var = x.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n as f64;
        center[c] = mean;
        scale[c] = if var > 1e-24 { var.sqrt() } else { 1.0 };
    }
    for r in &mut x {
        for c in 0..d {
            r[c] = (r[c] - center[c]) / scale[c];
        }
    }
    let y: Vec<f64> = train.target.iter().map(|&t| f64::from(t)).collect();
    let problem = Problem { x, y, l2: hyper.l2 };

    let mut w = vec![0.0; d];
    let prior = (train.positive_rate()).clamp(1e-6, 1.0 - 1e-6);
    let mut b = (prior / (1.0 - prior)).ln();
    let mut grad = vec![0.0; d + 1];
    let mut loss = problem.eval(&w, b, &mut grad);
    if !loss.is_finite() {
        return Err(Error::Training("non-finite initial loss".into()));
    }
    let mut trace = vec![loss];
    let mut step = 1.0;
    let mut new_grad = vec![0.0; d + 1];
    let mut cand_w = vec![0.0; d];

    for _ in 0..hyper.max_iters {
        let gnorm = norm(&grad);
        if gnorm < hyper.tol {
            break;
        }
        let mut accepted = false;
        let mut t = step;
        for _ in 0..60 {
            for j in 0..d {
                cand_w[j] = w[j] - t * grad[j];
            }
            let cand_b = b - t * grad[d];
            let cand_loss = problem.eval(&cand_w, cand_b, &mut new_grad);
            if !cand_loss.is_finite() {
                return Err(Error::Training("non-finite loss; check input scaling".into()));
            }
            if cand_loss <= loss - 1e-4 * t * gnorm * gnorm {
                // Barzilai-Borwein step for the next iteration
                let mut sy = 0.0;
                let mut ss = 0.0;
                for j in 0..=d {
                    let s = if j < d { cand_w[j] - w[j] } else { cand_b - b };
                    let yv = new_grad[j] - grad[j];
                    sy += s * yv;
                    ss += s * s;
                }
                step = if sy > 1e-300 { (ss / sy).clamp(1e-6, 1e6) } else { t * 2.0 };
                w.copy_from_slice(&cand_w);
                b = cand_b;
                std::mem::swap(&mut grad, &mut new_grad);
                loss = cand_loss;
                trace.push(loss);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    Ok(LogisticModel {
        schema: train.schema.clone(),
        class_labels: train.class_labels.clone(),
        center,
        scale,
        weights: w,
        bias: b,
        hyper: hyper.clone(),
        loss_trace: trace,
        encoder: None,
    }
    .rebuild())
}
