#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use attriblab::dataset::{CohortFilter, Dataset, FeatureMeta, QuestionId, QuestionSpec, Schema};
use attriblab::models::sigmoid;
use attriblab::rng::{self, Rng};
use rand::Rng as _;
use rand_distr::StandardNormal;

pub fn numeric_schema(m: usize) -> Schema {
    Schema::new((0..m).map(|j| FeatureMeta::numeric(&format!("x{j}"), &format!("x{j}"), None)).collect()).unwrap()
}

pub fn names(m: usize) -> Vec<String> {
    (0..m).map(|j| format!("x{j}")).collect()
}

pub fn dataset(schema: Schema, rows: Vec<Vec<f64>>, target: Vec<u8>) -> Dataset {
    let n = rows.len();
    Dataset {
        schema,
        rows,
        target,
        question: QuestionSpec::standard(QuestionId::Da, &CohortFilter::lung()),
        class_labels: ("Neg".into(), "Pos".into()),
        row_ids: (0..n).collect(),
        provenance_seed: 0,
    }
}

pub fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Rows of independent features drawn by `draw`, labels from a Bernoulli
/// with `sigmoid(logit(row))`.
pub fn logistic_data(
    m: usize,
    n: usize,
    seed: u64,
    draw: impl Fn(usize, &mut Rng) -> f64,
    logit: impl Fn(&[f64]) -> f64,
) -> Dataset {
    let mut r = rng::stream(seed, 0x7e57);
    let mut rows = Vec::with_capacity(n);
    let mut target = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..m).map(|j| draw(j, &mut r)).collect();
        let p = sigmoid(logit(&row));
        target.push(u8::from(r.gen::<f64>() < p));
        rows.push(row);
    }
    dataset(numeric_schema(m), rows, target)
}

/// Every file under `dir`, keyed by path relative to it.
pub fn read_tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// A small but complete pipeline run: two questions, all families and
/// explainers, a handful of instances.
pub const SMALL_RUN: &str = r#"
seed = 7
threads = 1

[data]
rows = 8000

[questions]
ids = ["DA", "MD"]
balance_cap = 1200

[hyper.gbt]
n_trees = 30

[hyper.ebm]
rounds = 40

[explain]
instances = 6
histogram_n = 6

[explainers.shap]
background_size = 20

[explainers.lime]
n_samples = 1000

[explainers.anchors]
max_rule_samples = 2000
"#;
