use std::any::Any;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{mean_log_loss as log_loss, sigmoid, PredictiveModel, TrainedModel};
use crate::dataset::{Dataset, Schema};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtHyper {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// Minimum sampled rows on each side of a split.
    pub min_leaf: usize,
    /// Fraction of rows drawn (without replacement) for each tree.
    pub subsample: f64,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    pub seed: u64,
}

impl Default for GbtHyper {
    fn default() -> Self {
        GbtHyper {
            n_trees: 200,
            max_depth: 4,
            learning_rate: 0.1,
            min_leaf: 20,
            subsample: 0.8,
            lambda: 1.0,
            seed: 0,
        }
    }
}

pub const LEAF: u32 = u32::MAX;

/// One node of a flat binary tree. Rows with `x[feature] < threshold` go
/// left. Leaves have `feature == LEAF`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    pub value: f64,
}

impl TreeNode {
    fn leaf(value: f64) -> Self {
        TreeNode { feature: LEAF, threshold: 0.0, left: 0, right: 0, value }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature == LEAF
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    #[inline]
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            let n = &self.nodes[i];
            if n.feature == LEAF {
                return n.value;
            }
            // Index select instead of a branch: the outcome is data dependent.
            let right = usize::from(!(row[n.feature as usize] < n.threshold));
            i = [n.left, n.right][right] as usize;
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            let n = &t.nodes[i];
            if n.is_leaf() {
                0
            } else {
                1 + go(t, n.left as usize).max(go(t, n.right as usize))
            }
        }
        go(self, 0)
    }
}

/// Gradient-boosted trees on ordinal-encoded rows (categories split by index).
///
/// `margin(x) = base_score + learning_rate * sum(tree(x))`
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GbtModel {
    pub schema: Schema,
    pub class_labels: (String, String),
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    pub hyper: GbtHyper,
    /// Training log-loss before any tree, then after each tree.
    #[serde(default)]
    pub loss_trace: Vec<f64>,
}

impl GbtModel {
    pub fn tree_sum(&self, row: &[f64]) -> f64 {
        self.trees.iter().fold(0.0, |acc, t| acc + t.predict(row))
    }
}

impl PredictiveModel for GbtModel {
    fn margin(&self, row: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.tree_sum(row)
    }

    fn predict_positive(&self, row: &[f64]) -> f64 {
        sigmoid(self.margin(row))
    }

    /// Tree-major evaluation; bit-identical to row-by-row prediction.
    fn predict_batch(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        let mut sums = vec![0.0; rows.len()];
        for t in &self.trees {
            for (s, r) in sums.iter_mut().zip(rows) {
                *s += t.predict(r);
            }
        }
        sums.into_iter().map(|s| sigmoid(self.base_score + self.learning_rate * s)).collect()
    }
}

impl TrainedModel for GbtModel {
    fn family(&self) -> &'static str {
        "gbt"
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

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Default)]
struct Stats {
    g: f64,
    h: f64,
    n: usize,
}

#[derive(Clone, Copy)]
struct Best {
    gain: f64,
    feature: u32,
    threshold: f64,
    left: Stats,
}

fn score(s: Stats, lambda: f64) -> f64 {
    s.g * s.g / (s.h + lambda)
}

/// Level-wise exact greedy tree growth on pre-sorted columns.
fn grow_tree(
    cols: &[Vec<f64>],
    sorted: &[Vec<u32>],
    grad: &[f64],
    hess: &[f64],
    in_sample: &[bool],
    hyper: &GbtHyper,
) -> Tree {
    let n = grad.len();
    let lambda = hyper.lambda;
    let mut node_of: Vec<u32> = in_sample.iter().map(|&s| if s { 0 } else { NONE }).collect();
    let mut root = Stats::default();
    for i in 0..n {
        if in_sample[i] {
            root.g += grad[i];
            root.h += hess[i];
            root.n += 1;
        }
    }
    let mut nodes = vec![TreeNode::leaf(0.0)];
    let mut stats = vec![root];
    let mut frontier = vec![0u32];

    for _ in 0..hyper.max_depth {
        if frontier.is_empty() {
            break;
        }
        let mut slot = vec![NONE; nodes.len()];
        for (s, &nd) in frontier.iter().enumerate() {
            slot[nd as usize] = s as u32;
        }
        let k = frontier.len();
        let mut best: Vec<Option<Best>> = vec![None; k];
        let mut acc = vec![Stats::default(); k];
        let mut last = vec![f64::NAN; k];

        for (j, order) in sorted.iter().enumerate() {
            acc.fill(Stats::default());
            let col = &cols[j];
            for &i in order {
                let i = i as usize;
                let nd = node_of[i];
                if nd == NONE {
                    continue;
                }
                let s = slot[nd as usize];
                if s == NONE {
                    continue;
                }
                let s = s as usize;
                let x = col[i];
                let a = acc[s];
                if a.n > 0 && x > last[s] {
                    let total = stats[frontier[s] as usize];
                    let right = Stats { g: total.g - a.g, h: total.h - a.h, n: total.n - a.n };
                    if a.n >= hyper.min_leaf && right.n >= hyper.min_leaf {
                        let gain = score(a, lambda) + score(right, lambda) - score(total, lambda);
                        if best[s].map_or(true, |b| gain > b.gain) {
                            best[s] = Some(Best {
                                gain,
                                feature: j as u32,
                                threshold: 0.5 * (last[s] + x),
                                left: a,
                            });
                        }
                    }
                }
                let a = &mut acc[s];
                a.g += grad[i];
                a.h += hess[i];
                a.n += 1;
                last[s] = x;
            }
        }

        let mut next = Vec::new();
        let mut split_of = vec![None; nodes.len()];
        for (s, &nd) in frontier.iter().enumerate() {
            let Some(b) = best[s] else { continue };
            if b.gain <= 1e-12 {
                continue;
            }
            let total = stats[nd as usize];
            let right = Stats { g: total.g - b.left.g, h: total.h - b.left.h, n: total.n - b.left.n };
            let l = nodes.len() as u32;
            nodes.push(TreeNode::leaf(0.0));
            stats.push(b.left);
            nodes.push(TreeNode::leaf(0.0));
            stats.push(right);
            let node = &mut nodes[nd as usize];
            node.feature = b.feature;
            node.threshold = b.threshold;
            node.left = l;
            node.right = l + 1;
            split_of[nd as usize] = Some((b.feature as usize, b.threshold, l));
            next.push(l);
            next.push(l + 1);
        }
        for i in 0..n {
            let nd = node_of[i];
            if nd == NONE {
                continue;
            }
            if let Some((f, thr, l)) = split_of[nd as usize] {
                node_of[i] = if cols[f][i] < thr { l } else { l + 1 };
            }
        }
        frontier = next;
    }

    for (node, s) in nodes.iter_mut().zip(&stats) {
        if node.is_leaf() {
            node.value = -s.g / (s.h + lambda);
        }
    }
    Tree { nodes }
}

/// Boosts trees on the logistic loss with second-order leaf values.
pub fn train_gbt(train: &Dataset, hyper: &GbtHyper) -> Result<GbtModel> {
    if hyper.n_trees < 1 {
        return Err(Error::Config("gbt: n_trees must be >= 1".into()));
    }
    if hyper.max_depth < 1 {
        return Err(Error::Config("gbt: max_depth must be >= 1".into()));
    }
    if !(hyper.learning_rate > 0.0) || !(hyper.subsample > 0.0 && hyper.subsample <= 1.0) || !(hyper.lambda >= 0.0) {
        return Err(Error::Config("gbt: invalid learning_rate, subsample or lambda".into()));
    }
    if train.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    let (neg, pos) = train.class_counts();
    if neg == 0 || pos == 0 {
        return Err(Error::Training("gbt needs both classes".into()));
    }
    for row in &train.rows {
        train.schema.check_row(row)?;
    }

    let n = train.len();
    let m = train.n_features();
    let cols: Vec<Vec<f64>> = (0..m).map(|j| train.rows.iter().map(|r| r[j]).collect()).collect();
    let sorted: Vec<Vec<u32>> = cols
        .iter()
        .map(|c| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let y: Vec<f64> = train.target.iter().map(|&t| f64::from(t)).collect();
    let prior = pos as f64 / n as f64;
    let base_score = (prior / (1.0 - prior)).ln();

    let mut margins = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(hyper.n_trees);
    let mut trace = vec![log_loss(&margins, &y)];
    let n_sample = ((n as f64 * hyper.subsample).round() as usize).clamp(1, n);

    for t in 0..hyper.n_trees {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            grad[i] = p - y[i];
            hess[i] = (p * (1.0 - p)).max(1e-16);
        }
        let mut in_sample = vec![n_sample == n; n];
        if n_sample < n {
            let mut r = rng::stream(hyper.seed, t as u64);
            for i in sample(&mut r, n, n_sample) {
                in_sample[i] = true;
            }
        }
        let tree = grow_tree(&cols, &sorted, &grad, &hess, &in_sample, hyper);
        for (i, row) in train.rows.iter().enumerate() {
            margins[i] += hyper.learning_rate * tree.predict(row);
        }
        trace.push(log_loss(&margins, &y));
        trees.push(tree);
    }

    Ok(GbtModel {
        schema: train.schema.clone(),
        class_labels: train.class_labels.clone(),
        base_score,
        learning_rate: hyper.learning_rate,
        trees,
        hyper: hyper.clone(),
        loss_trace: trace,
    })
}
