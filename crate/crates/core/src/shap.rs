//! Shapley additive explanations over an interventional value function:
//! `v(S)` is the mean model output when features in `S` come from the row and
//! the rest from each background row.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{Attribution, Units};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::models::{logit, PredictiveModel};
use crate::rng;

/// Hard cap for exact enumeration (2^M model sweeps).
pub const EXACT_LIMIT: usize = 20;
const MAX_FEATURES: usize = 64;

/// A subset of the M features, stored as a bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coalition {
    bits: u64,
    width: usize,
}

impl Coalition {
    pub fn empty(width: usize) -> Self {
        assert!(width <= MAX_FEATURES);
        Coalition { bits: 0, width }
    }

    pub fn full(width: usize) -> Self {
        assert!(width <= MAX_FEATURES);
        let bits = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
        Coalition { bits, width }
    }

    pub fn from_bits(bits: u64, width: usize) -> Self {
        Coalition { bits: bits & Coalition::full(width).bits, width }
    }

    pub fn from_mask(mask: &[bool]) -> Self {
        let bits = mask.iter().enumerate().filter(|(_, &b)| b).fold(0u64, |acc, (j, _)| acc | 1 << j);
        Coalition::from_bits(bits, mask.len())
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn contains(&self, j: usize) -> bool {
        self.bits >> j & 1 == 1
    }

    pub fn size(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn complement(&self) -> Self {
        Coalition { bits: !self.bits & Coalition::full(self.width).bits, width: self.width }
    }

    pub fn with(&self, j: usize) -> Self {
        Coalition { bits: self.bits | 1 << j, width: self.width }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Enumerate when all coalitions fit the budget, sample otherwise.
    #[default]
    Auto,
    /// Always sample, even when enumeration would be affordable.
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapConfig {
    pub background_size: usize,
    /// Coalition budget; `None` means `2M + 2048`.
    pub n_coalitions: Option<usize>,
    /// `None` means 0 when enumerating and 1e-6 when sampling.
    pub ridge: Option<f64>,
    pub sampling: Sampling,
    pub units: Units,
    pub seed: u64,
}

impl Default for ShapConfig {
    fn default() -> Self {
        ShapConfig {
            background_size: 100,
            n_coalitions: None,
            ridge: None,
            sampling: Sampling::Auto,
            units: Units::Probability,
            seed: 0,
        }
    }
}

impl ShapConfig {
    pub fn coalitions_for(&self, m: usize) -> usize {
        self.n_coalitions.unwrap_or(2 * m + 2048)
    }

    pub fn enumerates(&self, m: usize) -> bool {
        self.sampling == Sampling::Auto && m < MAX_FEATURES && (1u128 << m) <= self.coalitions_for(m) as u128
    }

    pub fn validate(&self) -> Result<()> {
        if self.background_size == 0 {
            return Err(Error::Config("shap: background_size must be >= 1".into()));
        }
        if let Some(r) = self.ridge {
            if !(r >= 0.0) {
                return Err(Error::Config("shap: ridge must be >= 0".into()));
            }
        }
        Ok(())
    }
}

/// Seeded sample of up to `size` rows without replacement, in source order.
pub fn sample_background(rows: &[Vec<f64>], size: usize, seed: u64) -> Vec<Vec<f64>> {
    background_indices(rows.len(), size, seed).into_iter().map(|i| rows[i].clone()).collect()
}

/// The sorted row indices `sample_background` would pick out of `n` rows.
pub fn background_indices(n: usize, size: usize, seed: u64) -> Vec<usize> {
    if size >= n {
        return (0..n).collect();
    }
    let mut idx = sample(&mut rng::stream(seed, 0xb6), n, size).into_vec();
    idx.sort_unstable();
    idx
}

struct Game<'a> {
    model: &'a dyn PredictiveModel,
    row: &'a [f64],
    background: &'a [Vec<f64>],
    units: Units,
    /// One composite row per background row.
    batch: Vec<Vec<f64>>,
}

impl<'a> Game<'a> {
    fn new(model: &'a dyn PredictiveModel, row: &'a [f64], background: &'a [Vec<f64>], units: Units) -> Result<Self> {
        if background.is_empty() {
            return Err(Error::Config("shap: background is empty".into()));
        }
        if row.len() > MAX_FEATURES {
            return Err(Error::TooManyFeatures { features: row.len(), limit: MAX_FEATURES });
        }
        if let Some(b) = background.iter().find(|b| b.len() != row.len()) {
            return Err(Error::Schema(format!("background row has {} values, expected {}", b.len(), row.len())));
        }
        Ok(Game { model, row, background, units, batch: background.to_vec() })
    }

    fn width(&self) -> usize {
        self.row.len()
    }

    fn value(&mut self, s: Coalition) -> f64 {
        let mean = if s.size() == self.width() {
            self.model.predict_positive(self.row)
        } else {
            for (composite, b) in self.batch.iter_mut().zip(self.background) {
                for (j, slot) in composite.iter_mut().enumerate() {
                    *slot = if s.contains(j) { self.row[j] } else { b[j] };
                }
            }
            let total = self.model.predict_batch(&self.batch).into_iter().fold(0.0, |a, p| a + p);
            total / self.background.len() as f64
        };
        match self.units {
            Units::Probability => mean,
            Units::LogOdds => logit(mean),
        }
    }
}

/// `v(S)`: mean positive-class probability over background rows with the
/// features in `S` taken from `row`.
pub fn value_function(model: &dyn PredictiveModel, row: &[f64], background: &[Vec<f64>], s: &Coalition) -> Result<f64> {
    if s.width() != row.len() {
        return Err(Error::Schema(format!("coalition width {} for {} features", s.width(), row.len())));
    }
    Ok(Game::new(model, row, background, Units::Probability)?.value(*s))
}

fn default_names(m: usize) -> Vec<String> {
    (0..m).map(|j| format!("x{j}")).collect()
}

fn attribution(base: f64, phi: Vec<f64>, fx: f64, units: Units) -> Attribution {
    Attribution {
        features: default_names(phi.len()),
        base_value: base,
        contributions: phi,
        fx,
        explained_class: "positive".into(),
        units,
    }
}

/// Shapley values by full enumeration of all `2^M` coalitions.
pub fn exact_shap(model: &dyn PredictiveModel, row: &[f64], background: &[Vec<f64>], limit: usize) -> Result<Attribution> {
    exact_shap_units(model, row, background, limit, Units::Probability)
}

pub fn exact_shap_units(
    model: &dyn PredictiveModel,
    row: &[f64],
    background: &[Vec<f64>],
    limit: usize,
    units: Units,
) -> Result<Attribution> {
    let m = row.len();
    let limit = limit.min(EXACT_LIMIT);
    if m > limit {
        return Err(Error::TooManyFeatures { features: m, limit });
    }
    let mut game = Game::new(model, row, background, units)?;
    let values: Vec<f64> = (0..1u64 << m).map(|b| game.value(Coalition::from_bits(b, m))).collect();
    // weight(s) = s!(M-s-1)!/M! = 1 / (M * C(M-1, s))
    let weight: Vec<f64> = (0..m).map(|s| 1.0 / (m as f64 * binomial(m - 1, s))).collect();
    let mut phi = vec![0.0; m];
    for (bits, &v) in values.iter().enumerate() {
        let s = bits.count_ones() as usize;
        for (j, p) in phi.iter_mut().enumerate() {
            if bits >> j & 1 == 0 {
                *p += weight[s] * (values[bits | 1 << j] - v);
            }
        }
    }
    Ok(attribution(values[0], phi, values[values.len() - 1], units))
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Shapley kernel weight of one coalition of size `s` (0 < s < M).
pub fn kernel_weight(m: usize, s: usize) -> f64 {
    (m - 1) as f64 / (binomial(m, s) * s as f64 * (m - s) as f64)
}

/// Interior coalitions with their regression weights.
fn coalition_plan(m: usize, cfg: &ShapConfig) -> Result<(BTreeMap<u64, f64>, bool)> {
    let mut plan = BTreeMap::new();
    if cfg.enumerates(m) {
        for bits in 1..(1u64 << m) - 1 {
            plan.insert(bits, kernel_weight(m, bits.count_ones() as usize));
        }
        return Ok((plan, true));
    }
    let budget = cfg.coalitions_for(m);
    if budget < m + 2 {
        return Err(Error::Config(format!("shap: n_coalitions {budget} < M + 2 = {}", m + 2)));
    }
    let full = Coalition::full(m);
    for j in 0..m {
        let single = Coalition::empty(m).with(j);
        plan.insert(single.bits(), kernel_weight(m, 1));
        plan.insert(full.bits() & !(1 << j), kernel_weight(m, m - 1));
    }
    let sizes: Vec<usize> = (2..=m.saturating_sub(2)).collect();
    let pairs = budget.saturating_sub(plan.len()) / 2;
    if sizes.is_empty() || pairs == 0 {
        return Ok((plan, false));
    }
    let mass: Vec<f64> = sizes.iter().map(|&s| (m - 1) as f64 / (s * (m - s)) as f64).collect();
    let each = mass.iter().sum::<f64>() / (2 * pairs) as f64;
    let pick = WeightedIndex::new(&mass).expect("positive masses");
    let mut rng = rng::stream(cfg.seed, 0x5a);
    for _ in 0..pairs {
        let s = sizes[pick.sample(&mut rng)];
        let bits = sample(&mut rng, m, s).iter().fold(0u64, |acc, j| acc | 1 << j);
        let c = Coalition::from_bits(bits, m);
        *plan.entry(c.bits()).or_insert(0.0) += each;
        *plan.entry(c.complement().bits()).or_insert(0.0) += each;
    }
    Ok((plan, false))
}

/// Kernel SHAP: weighted least squares on coalition indicators with the
/// endpoints `g(empty) = v(empty)` and `g(full) = f(row)` imposed exactly.
pub fn kernel_shap(model: &dyn PredictiveModel, row: &[f64], background: &[Vec<f64>], cfg: &ShapConfig) -> Result<Attribution> {
    cfg.validate()?;
    let m = row.len();
    if m == 0 {
        return Err(Error::Schema("shap: row has no features".into()));
    }
    let mut game = Game::new(model, row, background, cfg.units)?;
    let v0 = game.value(Coalition::empty(m));
    let fx = game.value(Coalition::full(m));
    let delta = fx - v0;
    if m == 1 {
        return Ok(attribution(v0, vec![delta], fx, cfg.units));
    }
    let (plan, enumerated) = coalition_plan(m, cfg)?;
    let ridge = cfg.ridge.unwrap_or(if enumerated { 0.0 } else { 1e-6 });

    // Eliminate the last feature through efficiency:
    // y - z_last * delta = sum_{j<last} (z_j - z_last) phi_j
    let k = m - 1;
    let mut a = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    let mut x = vec![0.0; k];
    for (&bits, &w) in &plan {
        let s = Coalition::from_bits(bits, m);
        let zl = f64::from(u8::from(s.contains(k)));
        let y = game.value(s) - v0 - zl * delta;
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = f64::from(u8::from(s.contains(j))) - zl;
        }
        for i in 0..k {
            if x[i] == 0.0 {
                continue;
            }
            let wx = w * x[i];
            rhs[i] += wx * y;
            for j in 0..=i {
                a[(i, j)] += wx * x[j];
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            a[(j, i)] = a[(i, j)];
        }
        a[(i, i)] += ridge;
    }
    let scale = (0..k).map(|i| a[(i, i)]).fold(0.0, f64::max);
    let chol = a.cholesky().ok_or_else(|| Error::Singular("shap: coalition system is not positive definite".into()))?;
    let l = chol.l();
    if (0..k).any(|i| l[(i, i)] * l[(i, i)] <= 1e-12 * scale) {
        return Err(Error::Singular("shap: coalition system is rank deficient; use more coalitions or a ridge".into()));
    }
    let sol = chol.solve(&rhs);
    let mut phi: Vec<f64> = sol.iter().copied().collect();
    phi.push(delta - phi.iter().sum::<f64>());
    Ok(attribution(v0, phi, fx, cfg.units))
}

/// Per-instance config: same settings, seed derived from the instance index.
pub fn instance_config(cfg: &ShapConfig, index: usize) -> ShapConfig {
    ShapConfig { seed: rng::derive_seed(cfg.seed, index as u64), ..cfg.clone() }
}

/// Explains many rows in parallel; output is independent of thread count.
pub fn kernel_shap_many(
    model: &dyn PredictiveModel,
    rows: &[Vec<f64>],
    background: &[Vec<f64>],
    cfg: &ShapConfig,
) -> Result<Vec<Attribution>> {
    rows.par_iter()
        .enumerate()
        .map(|(i, r)| kernel_shap(model, r, background, &instance_config(cfg, i)))
        .collect()
}

/// Beeswarm data: columns are features ordered by mean |phi| descending
/// (ties by schema order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapSummary {
    pub features: Vec<String>,
    /// Schema index of each column.
    pub order: Vec<usize>,
    pub mean_abs: Vec<f64>,
    pub mean: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
    pub base_values: Vec<f64>,
    pub fx: Vec<f64>,
    pub units: Units,
}

pub fn shap_global_summary(
    model: &dyn PredictiveModel,
    data: &Dataset,
    background: &[Vec<f64>],
    cfg: &ShapConfig,
) -> Result<ShapSummary> {
    if data.is_empty() {
        return Err(Error::Dataset("shap summary needs at least one instance".into()));
    }
    let attrs = kernel_shap_many(model, &data.rows, background, cfg)?;
    summarize(&attrs, &data.rows, &data.schema.names(), cfg.units)
}

/// Builds the summary from attributions already computed for `rows`.
pub fn summarize(attrs: &[Attribution], rows: &[Vec<f64>], names: &[String], units: Units) -> Result<ShapSummary> {
    if attrs.is_empty() || attrs.len() != rows.len() {
        return Err(Error::Dataset(format!("{} attributions for {} rows", attrs.len(), rows.len())));
    }
    let m = names.len();
    if attrs.iter().any(|a| a.contributions.len() != m) || rows.iter().any(|r| r.len() != m) {
        return Err(Error::Dataset("attribution width differs from the feature count".into()));
    }
    let n = attrs.len() as f64;
    let mut mean_abs = vec![0.0; m];
    let mut mean = vec![0.0; m];
    for a in attrs {
        for (j, &p) in a.contributions.iter().enumerate() {
            mean_abs[j] += p.abs() / n;
            mean[j] += p / n;
        }
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| mean_abs[b].total_cmp(&mean_abs[a]));
    Ok(ShapSummary {
        features: order.iter().map(|&j| names[j].to_string()).collect(),
        mean_abs: order.iter().map(|&j| mean_abs[j]).collect(),
        mean: order.iter().map(|&j| mean[j]).collect(),
        phi: attrs.iter().map(|a| order.iter().map(|&j| a.contributions[j]).collect()).collect(),
        values: rows.iter().map(|r| order.iter().map(|&j| r[j]).collect()).collect(),
        base_values: attrs.iter().map(|a| a.base_value).collect(),
        fx: attrs.iter().map(|a| a.fx).collect(),
        order,
        units,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceSegment {
    pub feature: String,
    /// Display text, e.g. `M Best = 1`.
    pub label: String,
    pub phi: f64,
    pub start: f64,
    pub end: f64,
}

/// Force-plot geometry. Positive segments stack upward from the base value,
/// negative segments then stack downward and finish at the terminus, which
/// equals `fx` whenever the attribution is efficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceLayout {
    pub base_value: f64,
    pub fx: f64,
    pub terminus: f64,
    pub positive: Vec<ForceSegment>,
    pub negative: Vec<ForceSegment>,
    pub units: Units,
}

impl ForceLayout {
    /// Sum of positive widths minus sum of negative widths.
    pub fn net_width(&self) -> f64 {
        self.positive.iter().map(|s| s.end - s.start).sum::<f64>() - self.negative.iter().map(|s| s.start - s.end).sum::<f64>()
    }
}

/// `labels[j]` is the display text for feature `j`.
pub fn force_plot_data(a: &Attribution, labels: &[String]) -> ForceLayout {
    let mut pos: Vec<usize> = (0..a.contributions.len()).filter(|&j| a.contributions[j] > 0.0).collect();
    let mut neg: Vec<usize> = (0..a.contributions.len()).filter(|&j| a.contributions[j] < 0.0).collect();
    let by_size = |x: &usize, y: &usize| a.contributions[*y].abs().total_cmp(&a.contributions[*x].abs());
    pos.sort_by(by_size);
    neg.sort_by(by_size);
    let label = |j: usize| labels.get(j).cloned().unwrap_or_else(|| a.features[j].clone());
    let mut at = a.base_value;
    let mut segment = |j: usize| {
        let start = at;
        at += a.contributions[j];
        ForceSegment { feature: a.features[j].clone(), label: label(j), phi: a.contributions[j], start, end: at }
    };
    let positive: Vec<ForceSegment> = pos.into_iter().map(&mut segment).collect();
    let negative: Vec<ForceSegment> = neg.into_iter().map(&mut segment).collect();
    ForceLayout { base_value: a.base_value, fx: a.fx, terminus: at, positive, negative, units: a.units }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(w: Vec<f64>, bias: f64) -> impl Fn(&[f64]) -> f64 + Send + Sync {
        move |r: &[f64]| bias + r.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>()
    }

    /// Shapley values by averaging marginal contributions over all orderings.
    fn permutation_oracle(v: &dyn Fn(u64) -> f64, m: usize) -> Vec<f64> {
        fn perms(items: Vec<usize>) -> Vec<Vec<usize>> {
            if items.len() <= 1 {
                return vec![items];
            }
            let mut out = Vec::new();
            for i in 0..items.len() {
                let mut rest = items.clone();
                let head = rest.remove(i);
                for mut p in perms(rest) {
                    p.insert(0, head);
                    out.push(p);
                }
            }
            out
        }
        let all = perms((0..m).collect());
        let mut phi = vec![0.0; m];
        for p in &all {
            let mut s = 0u64;
            for &j in p {
                phi[j] += v(s | 1 << j) - v(s);
                s |= 1 << j;
            }
        }
        phi.iter().map(|x| x / all.len() as f64).collect()
    }

    #[test]
    fn value_function_endpoints_and_linear_composite() {
        let f = linear(vec![1.0, -2.0, 0.5], 0.1);
        let row = [1.0, 2.0, 3.0];
        let bg = vec![vec![0.0, 1.0, -1.0], vec![2.0, 0.0, 1.0]];
        let full = value_function(&f, &row, &bg, &Coalition::full(3)).unwrap();
        assert_eq!(full, f(&row));
        let empty = value_function(&f, &row, &bg, &Coalition::empty(3)).unwrap();
        assert!((empty - (f(&bg[0]) + f(&bg[1])) / 2.0).abs() < 1e-12);
        let one = vec![vec![5.0, 6.0, 7.0]];
        let s = Coalition::from_mask(&[true, false, true]);
        let v = value_function(&f, &row, &one, &s).unwrap();
        assert!((v - (1.0 * 1.0 - 2.0 * 6.0 + 0.5 * 3.0 + 0.1)).abs() < 1e-12);
    }

    #[test]
    fn exact_matches_permutation_oracle() {
        let f = |r: &[f64]| (r[0] * r[1] + (r[2] - r[3]).max(0.0) + 0.3 * r[4]).tanh() * 0.5 + 0.5;
        let row = [1.0, 0.5, 2.0, -1.0, 0.3];
        let bg = vec![vec![0.0, 0.2, 0.1, 0.4, -1.0], vec![-1.0, 1.0, 0.0, 0.0, 2.0]];
        let a = exact_shap(&f, &row, &bg, 20).unwrap();
        let v = |bits: u64| value_function(&f, &row, &bg, &Coalition::from_bits(bits, 5)).unwrap();
        let oracle = permutation_oracle(&v, 5);
        for (p, o) in a.contributions.iter().zip(&oracle) {
            assert!((p - o).abs() < 1e-12);
        }
        assert!(a.efficiency_gap() < 1e-9);
    }

    #[test]
    fn exact_axioms() {
        let c = |_: &[f64]| 0.7;
        let a = exact_shap(&c, &[1.0, 2.0], &[vec![0.0, 0.0]], 20).unwrap();
        assert_eq!(a.contributions, vec![0.0, 0.0]);
        assert_eq!(a.base_value, 0.7);

        // AND game
        let and = |r: &[f64]| f64::from(u8::from(r[0] == 1.0 && r[1] == 1.0));
        let a = exact_shap(&and, &[1.0, 1.0], &[vec![0.0, 0.0]], 20).unwrap();
        assert!((a.contributions[0] - 0.5).abs() < 1e-12 && (a.contributions[1] - 0.5).abs() < 1e-12);

        // v(S) = |S|/3
        let sym = |r: &[f64]| r.iter().sum::<f64>() / 3.0;
        let a = exact_shap(&sym, &[1.0; 3], &[vec![0.0; 3]], 20).unwrap();
        for p in a.contributions {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_limit_is_enforced() {
        let f = |_: &[f64]| 0.5;
        let r = exact_shap(&f, &[0.0; 5], &[vec![0.0; 5]], 4);
        assert!(matches!(r, Err(Error::TooManyFeatures { features: 5, limit: 4 })));
        let r = exact_shap(&f, &[0.0; 21], &[vec![0.0; 21]], 30);
        assert!(matches!(r, Err(Error::TooManyFeatures { limit: 20, .. })));
    }

    #[test]
    fn game_linearity() {
        let f1 = |r: &[f64]| 0.2 * r[0] * r[1];
        let f2 = |r: &[f64]| 0.1 * (r[2] - r[0]).abs();
        let sum = |r: &[f64]| f1(r) + f2(r);
        let row = [1.0, 2.0, 3.0];
        let bg = vec![vec![0.5, 0.0, 1.0], vec![2.0, 1.0, 0.0]];
        let a = exact_shap(&f1, &row, &bg, 20).unwrap();
        let b = exact_shap(&f2, &row, &bg, 20).unwrap();
        let s = exact_shap(&sum, &row, &bg, 20).unwrap();
        for j in 0..3 {
            assert!((s.contributions[j] - a.contributions[j] - b.contributions[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_enumeration_matches_exact() {
        let f = |r: &[f64]| 1.0 / (1.0 + (-(r[0] * r[1] - r[2] + 0.5 * r[3] * r[3] - r[5])).exp());
        let row = [0.3, -1.2, 0.8, 1.5, 0.0, 2.0];
        let bg: Vec<Vec<f64>> = (0..7).map(|i| (0..6).map(|j| ((i * 7 + j * 3) % 5) as f64 / 2.0 - 1.0).collect()).collect();
        let e = exact_shap(&f, &row, &bg, 20).unwrap();
        let k = kernel_shap(&f, &row, &bg, &ShapConfig::default()).unwrap();
        for (a, b) in e.contributions.iter().zip(&k.contributions) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        // feature 4 is a dummy
        assert!(k.contributions[4].abs() < 1e-12);
        assert!(k.efficiency_gap() < 1e-9);
    }

    #[test]
    fn kernel_symmetry_under_enumeration() {
        let f = |r: &[f64]| (r[0] + r[1]).sin() + r[2];
        let k = kernel_shap(&f, &[1.0, 1.0, 0.5], &[vec![0.0, 0.0, 0.0]], &ShapConfig::default()).unwrap();
        assert!((k.contributions[0] - k.contributions[1]).abs() < 1e-9);
    }

    #[test]
    fn kernel_constant_model_under_sampling() {
        let f = |_: &[f64]| 0.42;
        let cfg = ShapConfig { n_coalitions: Some(60), ..ShapConfig::default() };
        let k = kernel_shap(&f, &[1.0; 12], &[vec![0.0; 12]], &cfg).unwrap();
        assert!(k.contributions.iter().all(|p| p.abs() < 1e-9));
        assert!((k.base_value - 0.42).abs() < 1e-12);
    }

    #[test]
    fn kernel_sampling_duplicate_features_and_efficiency() {
        let f = |r: &[f64]| 1.0 / (1.0 + (-(r[0] + r[1] - 0.5 * r[2] + 0.2 * r[3] * r[4])).exp());
        let mut row = vec![0.9, 0.9, 1.0, -0.5, 1.5];
        row.extend([0.2; 7]);
        let bg: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let d = (i % 4) as f64 / 3.0 - 0.5;
                let mut b = vec![d, d, -d, d * 2.0, 0.5 - d];
                b.extend([d; 7]);
                b
            })
            .collect();
        let cfg = ShapConfig { n_coalitions: Some(4096), sampling: Sampling::Sample, seed: 3, ..ShapConfig::default() };
        let k = kernel_shap(&f, &row, &bg, &cfg).unwrap();
        assert!((k.contributions[0] - k.contributions[1]).abs() < 2e-2);
        assert!(k.efficiency_gap() < 1e-6);
        let again = kernel_shap(&f, &row, &bg, &cfg).unwrap();
        assert_eq!(k, again);
    }

    #[test]
    fn too_small_budget_is_rejected() {
        let f = |r: &[f64]| r[0];
        let cfg = ShapConfig { n_coalitions: Some(10), ..ShapConfig::default() };
        let r = kernel_shap(&f, &[0.0; 12], &[vec![1.0; 12]], &cfg);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn log_odds_units_reconstruct_margin() {
        let f = |r: &[f64]| crate::models::sigmoid(r[0] - 2.0 * r[1]);
        let cfg = ShapConfig { units: Units::LogOdds, ..ShapConfig::default() };
        let k = kernel_shap(&f, &[1.0, -1.0], &[vec![0.0, 0.0]], &cfg).unwrap();
        assert!((k.fx - 3.0).abs() < 1e-9);
        assert!((k.base_value + 0.0).abs() < 1e-9);
        // single background row + logit link makes the game additive
        assert!((k.contributions[0] - 1.0).abs() < 1e-9 && (k.contributions[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn parallel_matches_serial() {
        let f = |r: &[f64]| (r.iter().sum::<f64>() * 0.1).tanh() * 0.5 + 0.5;
        let rows: Vec<Vec<f64>> = (0..6).map(|i| (0..14).map(|j| ((i + j) % 3) as f64).collect()).collect();
        let bg = vec![vec![0.0; 14], vec![1.0; 14]];
        let cfg = ShapConfig { n_coalitions: Some(100), seed: 9, ..ShapConfig::default() };
        let par = kernel_shap_many(&f, &rows, &bg, &cfg).unwrap();
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(par[i], kernel_shap(&f, r, &bg, &instance_config(&cfg, i)).unwrap());
        }
    }

    #[test]
    fn background_sample_is_seeded_subset() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64]).collect();
        let a = sample_background(&rows, 10, 1);
        assert_eq!(a.len(), 10);
        assert_eq!(a, sample_background(&rows, 10, 1));
        assert!(a.windows(2).all(|w| w[0][0] < w[1][0]));
        assert_eq!(sample_background(&rows, 100, 1).len(), 50);
    }

    #[test]
    fn force_layout() {
        let mut a = attribution(0.4, vec![0.0, 0.0], 0.4, Units::Probability);
        let l = force_plot_data(&a, &[]);
        assert!(l.positive.is_empty() && l.negative.is_empty());
        assert_eq!(l.terminus, l.base_value);

        a.contributions = vec![0.3, 0.0];
        a.fx = 0.7;
        let l = force_plot_data(&a, &["x0 = 1".into(), "x1 = 2".into()]);
        assert_eq!(l.positive.len(), 1);
        assert!((l.positive[0].end - l.positive[0].start - 0.3).abs() < 1e-12);
        assert_eq!(l.positive[0].label, "x0 = 1");

        a.contributions = vec![0.3, -0.1];
        a.fx = 0.6;
        let l = force_plot_data(&a, &[]);
        assert!((l.terminus - 0.6).abs() < 1e-12);
        assert!((l.net_width() - (a.fx - a.base_value)).abs() < 1e-12);
    }
}
