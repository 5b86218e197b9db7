//! Anchors: a conjunction of the instance's own bin/category conditions whose
//! conditional precision clears `tau` with confidence `1 - delta`.
//!
//! Candidate rules are compared by KL-LUCB best-arm identification inside a
//! beam search over rule length.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureKind;
use crate::error::{Error, Result};
use crate::lime::TrainingStats;
use crate::models::{label_of, PredictiveModel};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredicateForm {
    CategoryEquals,
    InNumericBin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub feature: String,
    /// Schema index of the feature.
    pub index: usize,
    pub form: PredicateForm,
    /// Bin (numeric) or category index.
    pub bin: usize,
    /// Category text, or the bin's condition, e.g. `61 < Age <= 70`.
    pub text: String,
    /// Exclusive lower and inclusive upper bound of a numeric bin.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl Predicate {
    /// The predicate `row` satisfies on feature `j`.
    pub fn of_row(stats: &TrainingStats, row: &[f64], j: usize) -> Self {
        let f = &stats.features[j];
        let bin = f.bin(row[j]);
        let (form, (lower, upper)) = match f.meta.kind {
            FeatureKind::Categorical => (PredicateForm::CategoryEquals, (None, None)),
            FeatureKind::Numeric => (PredicateForm::InNumericBin, f.interval(bin)),
        };
        Predicate { feature: f.meta.display_name.clone(), index: j, form, bin, text: f.describe(bin), lower, upper }
    }

    pub fn holds(&self, stats: &TrainingStats, row: &[f64]) -> bool {
        stats.features[self.index].bin(row[self.index]) == self.bin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorRule {
    /// In the order the search added them.
    pub predicates: Vec<Predicate>,
    pub precision_estimate: f64,
    pub precision_lower_bound: f64,
    pub coverage_estimate: f64,
    /// Samples drawn for this rule's precision estimate.
    pub samples_used: usize,
    /// Samples drawn across the whole search.
    pub total_samples: usize,
    /// False when no rule reached the precision threshold and this is the
    /// best-precision fallback.
    pub anchoring: bool,
    pub predicted_class: u8,
}

impl AnchorRule {
    /// `IF Grade = 3 AND M Best = 1 THEN PREDICT Deceased (precision 0.97, coverage 0.08)`
    pub fn to_text(&self, class_label: &str) -> String {
        let cond = if self.predicates.is_empty() {
            "TRUE".to_string()
        } else {
            self.predicates.iter().map(|p| p.text.as_str()).collect::<Vec<_>>().join(" AND ")
        };
        format!(
            "IF {cond} THEN PREDICT {class_label} (precision {:.2}, coverage {:.2})",
            self.precision_estimate, self.coverage_estimate
        )
    }

    pub fn features(&self) -> Vec<&str> {
        self.predicates.iter().map(|p| p.feature.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnchorConfig {
    pub tau: f64,
    pub delta: f64,
    /// KL-LUCB stops once the gap between arms is below this.
    pub epsilon: f64,
    pub beam_width: usize,
    pub batch_size: usize,
    pub max_len: usize,
    pub coverage_samples: usize,
    /// Per-rule precision sample cap.
    pub max_rule_samples: usize,
    pub seed: u64,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        AnchorConfig {
            tau: 0.95,
            delta: 0.05,
            epsilon: 0.1,
            beam_width: 10,
            batch_size: 100,
            max_len: 5,
            coverage_samples: 10_000,
            max_rule_samples: 10_000,
            seed: 0,
        }
    }
}

impl AnchorConfig {
    pub fn validate(&self) -> Result<()> {
        let open = |x: f64| x > 0.0 && x < 1.0;
        if !open(self.tau) || !open(self.delta) {
            return Err(Error::Config("anchors: tau and delta must lie in (0, 1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("anchors: epsilon must be > 0".into()));
        }
        if self.beam_width == 0 || self.batch_size == 0 || self.max_len == 0 || self.coverage_samples == 0 {
            return Err(Error::Config("anchors: beam_width, batch_size, max_len and coverage_samples must be positive".into()));
        }
        if self.max_rule_samples < self.batch_size {
            return Err(Error::Config("anchors: max_rule_samples must be >= batch_size".into()));
        }
        Ok(())
    }
}

fn draw_conditional(row_bins: &[usize], fixed: &[bool], stats: &TrainingStats, rng: &mut Rng) -> Vec<f64> {
    stats
        .features
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let b = if fixed[j] { row_bins[j] } else { f.draw_bin(rng) };
            f.draw_in_bin(b, rng)
        })
        .collect()
}

fn fixed_mask(m: usize, rule: &[Predicate]) -> Vec<bool> {
    let mut fixed = vec![false; m];
    for p in rule {
        fixed[p.index] = true;
    }
    fixed
}

/// Rows from the training marginals with every rule feature held in the
/// instance's bin or category.
pub fn sample_conditional(row: &[f64], rule: &[Predicate], stats: &TrainingStats, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let bins = stats.bins_of(row);
    let fixed = fixed_mask(stats.len(), rule);
    let mut rng = rng::stream(seed, 0xa1);
    (0..n).map(|_| draw_conditional(&bins, &fixed, stats, &mut rng)).collect()
}

pub fn estimate_precision(
    model: &dyn PredictiveModel,
    row: &[f64],
    rule: &[Predicate],
    stats: &TrainingStats,
    n: usize,
    seed: u64,
) -> f64 {
    let label = model.predict_label(row);
    let rows = sample_conditional(row, rule, stats, n.max(1), seed);
    model.predict_batch(&rows).into_iter().filter(|&p| label_of(p) == label).count() as f64 / rows.len() as f64
}

pub fn estimate_coverage(rule: &[Predicate], stats: &TrainingStats, n: usize, seed: u64) -> f64 {
    let mut rng = rng::stream(seed, 0xc0);
    let n = n.max(1);
    let hits = (0..n)
        .filter(|_| {
            let z = stats.draw_row(&mut rng);
            rule.iter().all(|p| p.holds(stats, &z))
        })
        .count();
    hits as f64 / n as f64
}

fn kl_bernoulli(p: f64, q: f64) -> f64 {
    let p = p.clamp(1e-7, 1.0 - 1e-7);
    let q = q.clamp(1e-7, 1.0 - 1e-7);
    p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln()
}

/// Largest q >= p with KL(p, q) <= level.
pub fn kl_upper(p: f64, level: f64) -> f64 {
    let (mut lo, mut hi) = (p, (p + (level / 2.0).sqrt()).min(1.0));
    for _ in 0..17 {
        let q = (lo + hi) / 2.0;
        if kl_bernoulli(p, q) > level { hi = q } else { lo = q }
    }
    hi
}

/// Smallest q <= p with KL(p, q) <= level.
pub fn kl_lower(p: f64, level: f64) -> f64 {
    let (mut lo, mut hi) = ((p - (level / 2.0).sqrt()).max(0.0), p);
    for _ in 0..17 {
        let q = (lo + hi) / 2.0;
        if kl_bernoulli(p, q) > level { lo = q } else { hi = q }
    }
    lo
}

/// Exploration rate for `n_arms` arms at round `t`.
fn lucb_beta(n_arms: usize, t: usize, delta: f64) -> f64 {
    let temp = (405.5 * n_arms as f64 * (t as f64).powf(1.1) / delta).ln();
    temp + temp.ln()
}

fn key(features: &[usize]) -> Vec<usize> {
    let mut k = features.to_vec();
    k.sort_unstable();
    k
}

struct Arm {
    features: Vec<usize>,
    fixed: Vec<bool>,
    rng: Rng,
    n: usize,
    hits: usize,
}

impl Arm {
    fn mean(&self) -> f64 {
        if self.n == 0 { 0.0 } else { self.hits as f64 / self.n as f64 }
    }
}

struct Search<'a> {
    model: &'a dyn PredictiveModel,
    stats: &'a TrainingStats,
    row: &'a [f64],
    bins: Vec<usize>,
    label: u8,
    cfg: &'a AnchorConfig,
    /// Bins of the shared coverage sample.
    coverage_bins: Vec<Vec<usize>>,
    arms: BTreeMap<Vec<usize>, Arm>,
}

impl<'a> Search<'a> {
    /// Arms are keyed by feature set; `features` keeps the order in which
    /// predicates were first added.
    fn arm(&mut self, features: &[usize]) -> &mut Arm {
        let m = self.stats.len();
        let seed = self.cfg.seed;
        let key = key(features);
        self.arms.entry(key.clone()).or_insert_with(|| {
            let bytes: Vec<u8> = key.iter().flat_map(|&j| (j as u32).to_le_bytes()).collect();
            let mut fixed = vec![false; m];
            features.iter().for_each(|&j| fixed[j] = true);
            Arm { features: features.to_vec(), fixed, rng: rng::stream(seed, rng::hash_bytes(&bytes)), n: 0, hits: 0 }
        })
    }

    fn sample_arm(arm: &mut Arm, model: &dyn PredictiveModel, stats: &TrainingStats, bins: &[usize], label: u8, k: usize) {
        let rows: Vec<Vec<f64>> = (0..k).map(|_| draw_conditional(bins, &arm.fixed, stats, &mut arm.rng)).collect();
        arm.hits += model.predict_batch(&rows).into_iter().filter(|&p| label_of(p) == label).count();
        arm.n += k;
    }

    fn sample(&mut self, features: &[usize], k: usize) {
        let (model, stats, label, cap) = (self.model, self.stats, self.label, self.cfg.max_rule_samples);
        let bins = self.bins.clone();
        let arm = self.arm(features);
        let k = k.min(cap.saturating_sub(arm.n));
        Self::sample_arm(arm, model, stats, &bins, label, k);
    }

    /// First batch for every new candidate, in parallel. Results do not
    /// depend on scheduling because each arm owns its stream.
    fn initialise(&mut self, candidates: &[Vec<usize>]) {
        for c in candidates {
            self.arm(c);
        }
        let (model, stats, label, batch) = (self.model, self.stats, self.label, self.cfg.batch_size);
        let bins = &self.bins;
        let mut fresh: Vec<&mut Arm> = self.arms.values_mut().filter(|a| a.n == 0).collect();
        fresh.par_iter_mut().for_each(|a| Self::sample_arm(a, model, stats, bins, label, batch));
    }

    fn bounds(&self, features: &[usize]) -> (f64, f64) {
        let a = &self.arms[&key(features)];
        let level = (1.0 / self.cfg.delta).ln() / a.n.max(1) as f64;
        (kl_lower(a.mean(), level), kl_upper(a.mean(), level))
    }

    fn coverage(&self, features: &[usize]) -> f64 {
        let hits = self.coverage_bins.iter().filter(|b| features.iter().all(|&j| b[j] == self.bins[j])).count();
        hits as f64 / self.coverage_bins.len() as f64
    }

    fn capped(&self, features: &[usize]) -> bool {
        self.arms[&key(features)].n >= self.cfg.max_rule_samples
    }

    /// KL-LUCB: indices of the `top_n` highest-precision candidates.
    fn lucb(&mut self, cands: &[Vec<usize>], top_n: usize) -> Vec<usize> {
        let k = cands.len();
        if k <= top_n {
            return (0..k).collect();
        }
        let mut t = 1;
        loop {
            let means: Vec<f64> = cands.iter().map(|c| self.arms[&key(c)].mean()).collect();
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| means[a].total_cmp(&means[b]).then(b.cmp(&a)));
            let (not_j, j) = order.split_at(k - top_n);
            let beta = lucb_beta(k, t, self.cfg.delta);
            let level = |c: usize| beta / self.arms[&key(&cands[c])].n.max(1) as f64;
            let ut = *not_j
                .iter()
                .max_by(|&&a, &&b| kl_upper(means[a], level(a)).total_cmp(&kl_upper(means[b], level(b))))
                .expect("non-empty");
            let lt = *j
                .iter()
                .min_by(|&&a, &&b| kl_lower(means[a], level(a)).total_cmp(&kl_lower(means[b], level(b))))
                .expect("non-empty");
            let gap = kl_upper(means[ut], level(ut)) - kl_lower(means[lt], level(lt));
            if gap <= self.cfg.epsilon || (self.capped(&cands[ut]) && self.capped(&cands[lt])) {
                return j.to_vec();
            }
            let batch = self.cfg.batch_size;
            self.sample(&cands[ut].clone(), batch);
            self.sample(&cands[lt].clone(), batch);
            t += 1;
        }
    }

    /// Samples until the rule is confidently on one side of tau.
    fn settle(&mut self, features: &[usize]) -> (f64, f64) {
        loop {
            let (lb, ub) = self.bounds(features);
            if lb >= self.cfg.tau || ub < self.cfg.tau || self.capped(features) {
                return (lb, ub);
            }
            self.sample(features, self.cfg.batch_size);
        }
    }

    fn rule(&self, features: &[usize], anchoring: bool) -> AnchorRule {
        let a = &self.arms[&key(features)];
        AnchorRule {
            predicates: a.features.iter().map(|&j| Predicate::of_row(self.stats, self.row, j)).collect(),
            precision_estimate: a.mean(),
            precision_lower_bound: self.bounds(features).0,
            coverage_estimate: self.coverage(features),
            samples_used: a.n,
            total_samples: self.arms.values().map(|a| a.n).sum(),
            anchoring,
            predicted_class: self.label,
        }
    }
}

pub fn find_anchor(model: &dyn PredictiveModel, row: &[f64], stats: &TrainingStats, cfg: &AnchorConfig) -> Result<AnchorRule> {
    cfg.validate()?;
    let m = stats.len();
    if row.len() != m {
        return Err(Error::Schema(format!("anchors: row has {} values, stats have {m}", row.len())));
    }
    let mut cov_rng = rng::stream(cfg.seed, 0xc0);
    let coverage_bins = (0..cfg.coverage_samples).map(|_| stats.bins_of(&stats.draw_row(&mut cov_rng))).collect();
    let mut s = Search {
        model,
        stats,
        row,
        bins: stats.bins_of(row),
        label: model.predict_label(row),
        cfg,
        coverage_bins,
        arms: BTreeMap::new(),
    };

    s.initialise(&[vec![]]);
    if s.settle(&[]).0 >= cfg.tau {
        return Ok(s.rule(&[], true));
    }

    let mut beam: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..cfg.max_len.min(m) {
        let mut cands: Vec<Vec<usize>> = Vec::new();
        for rule in &beam {
            for j in (0..m).filter(|j| !rule.contains(j)) {
                let mut c = rule.clone();
                c.push(j);
                if !cands.iter().any(|x| key(x) == key(&c)) {
                    cands.push(c);
                }
            }
        }
        if cands.is_empty() {
            break;
        }
        s.initialise(&cands);
        let chosen: Vec<Vec<usize>> = s.lucb(&cands, cfg.beam_width).into_iter().map(|i| cands[i].clone()).collect();
        // Highest coverage first; once a rule qualifies, rules with lower
        // coverage cannot win and are left unsettled.
        let mut by_coverage: Vec<&Vec<usize>> = chosen.iter().collect();
        by_coverage.sort_by(|a, b| s.coverage(b).total_cmp(&s.coverage(a)));
        let mut best: Option<(f64, f64, &Vec<usize>)> = None;
        for c in by_coverage {
            if best.is_some_and(|(bc, _, _)| s.coverage(c) < bc) {
                break;
            }
            let (lb, _) = s.settle(c);
            if lb >= cfg.tau {
                let score = (s.coverage(c), s.arms[&key(c)].mean());
                if best.map_or(true, |(bc, bp, _)| score.0 > bc || (score.0 == bc && score.1 > bp)) {
                    best = Some((score.0, score.1, c));
                }
            }
        }
        if let Some((_, _, c)) = best {
            return Ok(s.rule(c, true));
        }
        beam = chosen;
    }

    let fallback = s
        .arms
        .values()
        .max_by(|a, b| {
            a.mean().total_cmp(&b.mean()).then(b.features.len().cmp(&a.features.len())).then(b.features.cmp(&a.features))
        })
        .map(|a| a.features.clone())
        .unwrap_or_default();
    Ok(s.rule(&fallback, false))
}

/// Per-instance seeds derived from the instance index.
pub fn find_anchor_many(
    model: &dyn PredictiveModel,
    rows: &[Vec<f64>],
    stats: &TrainingStats,
    cfg: &AnchorConfig,
) -> Result<Vec<AnchorRule>> {
    rows.par_iter()
        .enumerate()
        .map(|(i, r)| find_anchor(model, r, stats, &AnchorConfig { seed: rng::derive_seed(cfg.seed, i as u64), ..cfg.clone() }))
        .collect()
}
