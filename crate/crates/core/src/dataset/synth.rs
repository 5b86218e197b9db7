//! Synthetic master-table generator with a known logistic ground truth.
//!
//! Every non-target feature is drawn independently from its configured
//! marginal. Each target feature is then drawn from a logistic model over
//! those features, so explainer output can be checked against the true
//! effect strengths.

use std::collections::BTreeMap;

use rand::distributions::{Distribution as _, WeightedIndex};
use rand::Rng as _;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FeatureKind, FeatureMeta, Implication, RawTable, Schema};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Marginal {
    /// Normal truncated to the feature's plausible range.
    Normal {
        mean: f64,
        sd: f64,
        #[serde(default)]
        round: bool,
    },
    Uniform {
        min: f64,
        max: f64,
        #[serde(default)]
        round: bool,
    },
    /// Category weights, aligned with the feature's categories.
    Categorical { weights: Vec<f64> },
    /// Drawn from a logistic target mechanism.
    Target,
}

impl Marginal {
    fn moments(&self) -> Option<(f64, f64)> {
        match *self {
            Marginal::Normal { mean, sd, .. } => Some((mean, sd)),
            Marginal::Uniform { min, max, .. } => Some(((min + max) / 2.0, (max - min) / 12f64.sqrt())),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGen {
    #[serde(flatten)]
    pub meta: FeatureMeta,
    pub marginal: Marginal,
}

/// Indicator effect `strength * 1[x < below]` or `strength * 1[x > above]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEffect {
    #[serde(default)]
    pub below: Option<f64>,
    #[serde(default)]
    pub above: Option<f64>,
    pub strength: f64,
}

/// Contribution of one feature to a target's log-odds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    pub feature: String,
    /// Log-odds per standard deviation of a numeric feature.
    #[serde(default)]
    pub linear: f64,
    #[serde(default)]
    pub step: Option<StepEffect>,
    /// Log-odds per category; unlisted categories contribute 0.
    #[serde(default)]
    pub levels: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetGen {
    pub feature: String,
    pub positive: String,
    pub intercept: f64,
    #[serde(default)]
    pub effects: Vec<Effect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Probability that a row receives one null cell.
    #[serde(default)]
    pub null_rate: f64,
    /// Probability that a row receives one implausible or contradictory cell.
    #[serde(default)]
    pub inconsistency_rate: f64,
    pub features: Vec<FeatureGen>,
    #[serde(default)]
    pub targets: Vec<TargetGen>,
    /// Honored by clean rows, deliberately broken by inconsistency injection.
    #[serde(default)]
    pub implications: Vec<Implication>,
}

/// Default generator: the 26-column appendix schema with two targets.
pub const APPENDIX_GENERATOR_TOML: &str = include_str!("../../configs/appendix_generator.toml");

enum CompiledEffect {
    Linear { col: usize, mean: f64, sd: f64, coef: f64 },
    Step { col: usize, below: Option<f64>, above: Option<f64>, strength: f64 },
    Levels { col: usize, coefs: Vec<f64> },
}

struct CompiledTarget {
    col: usize,
    positive: usize,
    intercept: f64,
    effects: Vec<CompiledEffect>,
}

struct CompiledImplication {
    if_col: usize,
    if_in: Vec<usize>,
    then_col: usize,
    then_in: Vec<usize>,
}

/// A validated generator ready to draw rows.
pub struct Generator {
    config: GeneratorConfig,
    schema: Schema,
    samplers: Vec<Option<ColumnSampler>>,
    targets: Vec<CompiledTarget>,
    implications: Vec<CompiledImplication>,
}

enum ColumnSampler {
    Normal { dist: Normal<f64>, range: Option<(f64, f64)>, round: bool },
    Uniform { min: f64, max: f64, round: bool },
    Categorical(WeightedIndex<f64>),
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("{name} = {p} is not a probability")));
    }
    Ok(())
}

fn categories_of(schema: &Schema, col: usize, names: &[String]) -> Result<Vec<usize>> {
    let f = schema.get(col);
    names
        .iter()
        .map(|n| {
            f.category_index(n).ok_or_else(|| Error::OutOfVocabulary {
                feature: f.display_name.clone(),
                value: n.clone(),
            })
        })
        .collect()
}

impl GeneratorConfig {
    pub fn appendix() -> Self {
        toml::from_str(APPENDIX_GENERATOR_TOML).expect("bundled generator config parses")
    }

    pub fn schema(&self) -> Result<Schema> {
        Schema::new(self.features.iter().map(|f| f.meta.clone()).collect())
    }

    pub fn target(&self, feature: &str) -> Option<&TargetGen> {
        self.targets.iter().find(|t| t.feature == feature)
    }

    /// Size of a feature's effect on a target, in log-odds: `|linear|` plus
    /// the step magnitude plus the spread of category levels (including the
    /// implicit zero level).
    pub fn effect_strength(&self, target: &str, feature: &str) -> f64 {
        let Some(t) = self.target(target) else { return 0.0 };
        t.effects
            .iter()
            .filter(|e| e.feature == feature)
            .map(|e| {
                let levels = if e.levels.is_empty() {
                    0.0
                } else {
                    let hi = e.levels.values().copied().fold(0.0, f64::max);
                    let lo = e.levels.values().copied().fold(0.0, f64::min);
                    hi - lo
                };
                e.linear.abs() + e.step.as_ref().map_or(0.0, |s| s.strength.abs()) + levels
            })
            .sum()
    }
}

impl Generator {
    pub fn new(config: GeneratorConfig) -> Result<Self> {
        check_prob("null_rate", config.null_rate)?;
        check_prob("inconsistency_rate", config.inconsistency_rate)?;
        let schema = config.schema()?;

        let mut samplers = Vec::with_capacity(schema.len());
        for f in &config.features {
            let name = &f.meta.display_name;
            let s = match (&f.marginal, f.meta.kind) {
                (Marginal::Target, FeatureKind::Categorical) => {
                    if !config.targets.iter().any(|t| &t.feature == name) {
                        return Err(Error::Config(format!("`{name}` is marked target but has no mechanism")));
                    }
                    None
                }
                (Marginal::Categorical { weights }, FeatureKind::Categorical) => {
                    if weights.len() != f.meta.categories.len() {
                        return Err(Error::Config(format!("`{name}`: weights do not match categories")));
                    }
                    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                        return Err(Error::Config(format!("`{name}`: invalid category weights")));
                    }
                    let w = WeightedIndex::new(weights.iter().copied())
                        .map_err(|e| Error::Config(format!("`{name}`: {e}")))?;
                    Some(ColumnSampler::Categorical(w))
                }
                (Marginal::Normal { mean, sd, round }, FeatureKind::Numeric) => {
                    let dist = Normal::new(*mean, *sd)
                        .map_err(|e| Error::Config(format!("`{name}`: {e}")))?;
                    Some(ColumnSampler::Normal { dist, range: f.meta.plausible_range, round: *round })
                }
                (Marginal::Uniform { min, max, round }, FeatureKind::Numeric) => {
                    if !(min < max) {
                        return Err(Error::Config(format!("`{name}`: empty uniform range")));
                    }
                    Some(ColumnSampler::Uniform { min: *min, max: *max, round: *round })
                }
                _ => {
                    return Err(Error::Config(format!("`{name}`: marginal does not match feature kind")))
                }
            };
            samplers.push(s);
        }

        let mut targets = Vec::new();
        for t in &config.targets {
            let col = schema.require(&t.feature)?;
            if !matches!(config.features[col].marginal, Marginal::Target) {
                return Err(Error::Config(format!("target `{}` must use the target marginal", t.feature)));
            }
            if schema.get(col).categories.len() != 2 {
                return Err(Error::Config(format!("target `{}` must have two categories", t.feature)));
            }
            let positive = categories_of(&schema, col, std::slice::from_ref(&t.positive))?[0];
            let mut effects = Vec::new();
            for e in &t.effects {
                let ecol = schema.require(&e.feature)?;
                let g = &config.features[ecol];
                if matches!(g.marginal, Marginal::Target) {
                    return Err(Error::Config(format!("target `{}` cannot depend on target `{}`", t.feature, e.feature)));
                }
                if e.linear != 0.0 {
                    let (mean, sd) = g.marginal.moments().ok_or_else(|| {
                        Error::Config(format!("linear effect on non-numeric `{}`", e.feature))
                    })?;
                    effects.push(CompiledEffect::Linear { col: ecol, mean, sd, coef: e.linear });
                }
                if let Some(s) = &e.step {
                    if g.meta.is_categorical() {
                        return Err(Error::Config(format!("step effect on categorical `{}`", e.feature)));
                    }
                    effects.push(CompiledEffect::Step { col: ecol, below: s.below, above: s.above, strength: s.strength });
                }
                if !e.levels.is_empty() {
                    if !g.meta.is_categorical() {
                        return Err(Error::Config(format!("level effects on numeric `{}`", e.feature)));
                    }
                    let mut coefs = vec![0.0; g.meta.categories.len()];
                    for (cat, v) in &e.levels {
                        let i = categories_of(&schema, ecol, std::slice::from_ref(cat))?[0];
                        coefs[i] = *v;
                    }
                    effects.push(CompiledEffect::Levels { col: ecol, coefs });
                }
            }
            targets.push(CompiledTarget { col, positive, intercept: t.intercept, effects });
        }

        let mut implications = Vec::new();
        for imp in &config.implications {
            let if_col = schema.require(&imp.if_feature)?;
            let then_col = schema.require(&imp.then_feature)?;
            implications.push(CompiledImplication {
                if_col,
                if_in: categories_of(&schema, if_col, &imp.if_in)?,
                then_col,
                then_in: categories_of(&schema, then_col, &imp.then_in)?,
            });
        }

        Ok(Generator { config, schema, samplers, targets, implications })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    /// Ground-truth log-odds of `target` for a full raw row.
    pub fn logit(&self, target: &str, row: &[f64]) -> Option<f64> {
        let col = self.schema.index_of(target)?;
        let t = self.targets.iter().find(|t| t.col == col)?;
        Some(Self::eval_logit(t, row))
    }

    fn eval_logit(t: &CompiledTarget, row: &[f64]) -> f64 {
        let mut z = t.intercept;
        for e in &t.effects {
            z += match *e {
                CompiledEffect::Linear { col, mean, sd, coef } => coef * (row[col] - mean) / sd,
                CompiledEffect::Step { col, below, above, strength } => {
                    let x = row[col];
                    let hit = below.is_some_and(|b| x < b) || above.is_some_and(|a| x > a);
                    if hit { strength } else { 0.0 }
                }
                CompiledEffect::Levels { col, ref coefs } => coefs[row[col] as usize],
            };
        }
        z
    }

    fn draw_column(&self, col: usize, r: &mut rng::Rng) -> f64 {
        match self.samplers[col].as_ref().expect("non-target column") {
            ColumnSampler::Categorical(w) => w.sample(r) as f64,
            ColumnSampler::Uniform { min, max, round } => {
                let v = r.gen_range(*min..*max);
                if *round { v.round() } else { v }
            }
            ColumnSampler::Normal { dist, range, round } => {
                let fix = |v: f64| if *round { v.round() } else { v };
                match range {
                    None => fix(dist.sample(r)),
                    Some((lo, hi)) => {
                        for _ in 0..64 {
                            let v = fix(dist.sample(r));
                            if v >= *lo && v <= *hi {
                                return v;
                            }
                        }
                        fix(dist.sample(r)).clamp(*lo, *hi)
                    }
                }
            }
        }
    }

    fn clean_row(&self, r: &mut rng::Rng) -> Vec<f64> {
        let m = self.schema.len();
        let mut row = vec![0.0; m];
        for (col, s) in self.samplers.iter().enumerate() {
            if s.is_some() {
                row[col] = self.draw_column(col, r);
            }
        }
        for t in &self.targets {
            let p = 1.0 / (1.0 + (-Self::eval_logit(t, &row)).exp());
            let positive = r.gen::<f64>() < p;
            row[t.col] = if positive { t.positive as f64 } else { (1 - t.positive) as f64 };
        }
        // repair implication violations by redrawing the antecedent
        for imp in &self.implications {
            let holds = |row: &[f64]| {
                !imp.if_in.contains(&(row[imp.if_col] as usize))
                    || imp.then_in.contains(&(row[imp.then_col] as usize))
            };
            let mut tries = 0;
            while !holds(&row) && tries < 256 {
                row[imp.if_col] = self.draw_column(imp.if_col, r);
                tries += 1;
            }
            if !holds(&row) {
                let n = self.schema.get(imp.if_col).categories.len();
                if let Some(c) = (0..n).find(|c| !imp.if_in.contains(c)) {
                    row[imp.if_col] = c as f64;
                }
            }
        }
        row
    }

    fn inject_inconsistency(&self, row: &mut [Option<f64>], r: &mut rng::Rng) {
        let violatable: Vec<&CompiledImplication> = self
            .implications
            .iter()
            .filter(|imp| {
                row[imp.then_col].is_some_and(|v| !imp.then_in.contains(&(v as usize)))
            })
            .collect();
        let ranged: Vec<usize> = self
            .schema
            .iter()
            .enumerate()
            .filter(|(_, f)| f.plausible_range.is_some())
            .map(|(i, _)| i)
            .collect();
        let use_implication = !violatable.is_empty() && (ranged.is_empty() || r.gen_bool(0.5));
        if use_implication {
            let imp = violatable[r.gen_range(0..violatable.len())];
            row[imp.if_col] = Some(imp.if_in[r.gen_range(0..imp.if_in.len())] as f64);
        } else if !ranged.is_empty() {
            let col = ranged[r.gen_range(0..ranged.len())];
            let (lo, hi) = self.schema.get(col).plausible_range.unwrap();
            let span = (hi - lo).abs().max(1.0);
            row[col] = Some(if r.gen_bool(0.5) { hi + span * r.gen_range(0.5..10.0) } else { lo - span * r.gen_range(0.5..10.0) });
        }
    }

    fn row(&self, index: u64, seed: u64) -> Vec<Option<f64>> {
        let mut r = rng::stream(seed, index);
        let clean = self.clean_row(&mut r);
        let mut row: Vec<Option<f64>> = clean.into_iter().map(Some).collect();
        if r.gen::<f64>() < self.config.inconsistency_rate {
            self.inject_inconsistency(&mut row, &mut r);
        }
        if r.gen::<f64>() < self.config.null_rate {
            let col = r.gen_range(0..row.len());
            row[col] = None;
        }
        row
    }

    /// Draws `n` rows; row `i` depends only on `(seed, i)`.
    pub fn generate(&self, n: usize, seed: u64) -> RawTable {
        let rows = (0..n as u64).into_par_iter().map(|i| self.row(i, seed)).collect();
        RawTable { schema: self.schema.clone(), rows }
    }
}

/// Validates `config` and draws `n` rows.
pub fn generate_synthetic(config: &GeneratorConfig, n: usize, seed: u64) -> Result<RawTable> {
    Ok(Generator::new(config.clone())?.generate(n, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{clean, CleaningRules};

    #[test]
    fn bundled_config_is_valid_and_has_26_columns() {
        let g = Generator::new(GeneratorConfig::appendix()).unwrap();
        assert_eq!(g.schema().len(), 26);
        assert_eq!(g.config().targets.len(), 2);
    }

    #[test]
    fn zero_rows() {
        let t = generate_synthetic(&GeneratorConfig::appendix(), 0, 1).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn deterministic_and_prefix_stable() {
        let c = GeneratorConfig::appendix();
        let a = generate_synthetic(&c, 50, 4).unwrap();
        let b = generate_synthetic(&c, 80, 4).unwrap();
        assert_eq!(a.rows[..], b.rows[..50]);
        assert_ne!(a.rows, generate_synthetic(&c, 50, 5).unwrap().rows);
        a.validate().unwrap();
    }

    #[test]
    fn clean_is_identity_without_injection() {
        let mut c = GeneratorConfig::appendix();
        c.null_rate = 0.0;
        c.inconsistency_rate = 0.0;
        let t = generate_synthetic(&c, 2000, 11).unwrap();
        let rules = CleaningRules { implications: c.implications.clone(), ..CleaningRules::default() };
        let (cleaned, report) = clean(&t, &rules).unwrap();
        assert_eq!(cleaned, t);
        assert_eq!(report.kept_rows, 2000);
    }

    #[test]
    fn injected_rows_are_caught_by_cleaning() {
        let mut c = GeneratorConfig::appendix();
        c.null_rate = 0.0;
        c.inconsistency_rate = 0.2;
        let t = generate_synthetic(&c, 2000, 3).unwrap();
        let rules = CleaningRules { implications: c.implications.clone(), ..CleaningRules::default() };
        let (cleaned, _) = clean(&t, &rules).unwrap();
        let dropped = 2000 - cleaned.len();
        assert!((300..=500).contains(&dropped), "dropped {dropped}");
    }

    #[test]
    fn invalid_probabilities_rejected() {
        let mut c = GeneratorConfig::appendix();
        c.null_rate = 1.5;
        assert!(Generator::new(c).is_err());
        let mut c = GeneratorConfig::appendix();
        if let Marginal::Categorical { weights } = &mut c.features[1].marginal {
            weights[0] = -1.0;
        }
        assert!(Generator::new(c).is_err());
    }

    #[test]
    fn effect_strengths_are_retrievable() {
        let c = GeneratorConfig::appendix();
        assert!(c.effect_strength("Reduction", "Time Delay") > c.effect_strength("Reduction", "Cycle"));
        assert_eq!(c.effect_strength("STATUS", "Weight"), 0.45 + 0.7);
        assert_eq!(c.effect_strength("STATUS", "CNS"), 0.0);
    }
}
