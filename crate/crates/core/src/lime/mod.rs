//! Tabular LIME: perturb around a row, weight samples by proximity, and fit a
//! sparse ridge surrogate to the positive-class probability.

mod stats;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use stats::{FeatureStats, TrainingStats};

use crate::dataset::FeatureKind;
use crate::error::{Error, Result};
use crate::models::PredictiveModel;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "KernelWidthRepr", into = "KernelWidthRepr")]
pub enum KernelWidth {
    /// `0.75 * sqrt(M)`
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum KernelWidthRepr {
    Fixed(f64),
    Named(String),
}

impl TryFrom<KernelWidthRepr> for KernelWidth {
    type Error = String;
    fn try_from(r: KernelWidthRepr) -> std::result::Result<Self, String> {
        match r {
            KernelWidthRepr::Fixed(w) if w > 0.0 => Ok(KernelWidth::Fixed(w)),
            KernelWidthRepr::Fixed(w) => Err(format!("kernel_width must be > 0, got {w}")),
            KernelWidthRepr::Named(s) if s == "auto" => Ok(KernelWidth::Auto),
            KernelWidthRepr::Named(s) => Err(format!("kernel_width must be a number or \"auto\", got {s:?}")),
        }
    }
}

impl From<KernelWidth> for KernelWidthRepr {
    fn from(k: KernelWidth) -> Self {
        match k {
            KernelWidth::Auto => KernelWidthRepr::Named("auto".into()),
            KernelWidth::Fixed(w) => KernelWidthRepr::Fixed(w),
        }
    }
}

impl KernelWidth {
    pub fn resolve(self, m: usize) -> f64 {
        match self {
            KernelWidth::Auto => 0.75 * (m as f64).sqrt(),
            KernelWidth::Fixed(w) => w,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimeConfig {
    pub n_samples: usize,
    pub kernel_width: KernelWidth,
    pub top_k: usize,
    pub ridge: f64,
    /// Quartile-bin indicators for numerics; otherwise standardized values.
    pub discretize: bool,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig { n_samples: 5000, kernel_width: KernelWidth::Auto, top_k: 8, ridge: 1.0, discretize: true, seed: 0 }
    }
}

impl LimeConfig {
    pub fn validate(&self, m: usize) -> Result<()> {
        if self.top_k == 0 || self.top_k > m {
            return Err(Error::Config(format!("lime: top_k must be in 1..={m}, got {}", self.top_k)));
        }
        if self.n_samples < 10 * self.top_k {
            return Err(Error::Config(format!("lime: n_samples must be >= 10 * top_k = {}", 10 * self.top_k)));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::Config("lime: ridge must be >= 0".into()));
        }
        Ok(())
    }
}

/// Perturbed samples around one row. Sample 0 is the row itself.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbourhood {
    /// Interpretable representation: bin/category match indicators, or
    /// standardized numeric values when not discretizing.
    pub interpretable: Vec<Vec<f64>>,
    pub raw: Vec<Vec<f64>>,
    pub distances: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn sample_neighbourhood(row: &[f64], stats: &TrainingStats, cfg: &LimeConfig) -> Result<Neighbourhood> {
    if stats.is_empty() {
        return Err(Error::Dataset("lime: empty training statistics".into()));
    }
    let m = stats.len();
    if row.len() != m {
        return Err(Error::Schema(format!("lime: row has {} values, stats have {m}", row.len())));
    }
    let sigma = cfg.kernel_width.resolve(m);
    let norm = (m as f64).sqrt();
    let row_bins = stats.bins_of(row);
    let continuous = |f: &FeatureStats| !cfg.discretize && f.meta.kind == FeatureKind::Numeric;
    let standardize = |f: &FeatureStats, x: f64| if f.sd > 0.0 { (x - f.mean) / f.sd } else { 0.0 };

    let mut rng = rng::stream(cfg.seed, 0x11);
    let n = cfg.n_samples.max(1);
    let mut out = Neighbourhood {
        interpretable: Vec::with_capacity(n),
        raw: Vec::with_capacity(n),
        distances: Vec::with_capacity(n),
        weights: Vec::with_capacity(n),
    };
    for i in 0..n {
        let mut z = Vec::with_capacity(m);
        let mut raw = Vec::with_capacity(m);
        let mut dist = 0.0;
        for (j, f) in stats.features.iter().enumerate() {
            let keep = i == 0 || rng.gen_bool(0.5);
            let (x, b) = if keep {
                (row[j], row_bins[j])
            } else {
                let b = f.draw_bin(&mut rng);
                (f.draw_in_bin(b, &mut rng), b)
            };
            if continuous(f) {
                let s = standardize(f, x);
                dist += (s - standardize(f, row[j])).abs();
                z.push(s);
            } else {
                let hit = b == row_bins[j];
                dist += f64::from(u8::from(!hit));
                z.push(f64::from(u8::from(hit)));
            }
            raw.push(x);
        }
        let d = dist / norm;
        out.weights.push((-d * d / (sigma * sigma)).exp());
        out.distances.push(d);
        out.interpretable.push(z);
        out.raw.push(raw);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeWeight {
    pub feature: String,
    /// The row's own condition, e.g. `M Best = 1` or `Age > 78`.
    pub condition: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeExplanation {
    pub intercept: f64,
    /// Selected features, by |weight| descending then schema order.
    pub weights: Vec<LimeWeight>,
    pub local_fit_r2: f64,
    /// `[negative, positive]` model probabilities at the row.
    pub class_probs: [f64; 2],
    pub explained_class: String,
    /// Surrogate prediction at the row.
    pub local_prediction: f64,
    /// Every neighbourhood prediction was identical; weights are zero.
    pub degenerate: bool,
}

struct Fit {
    coef: Vec<f64>,
    intercept: f64,
    sse: f64,
}

/// Ridge weighted least squares with an unpenalized intercept.
fn ridge_fit(cols: &[usize], z: &[Vec<f64>], y: &[f64], w: &[f64], lambda: f64) -> Fit {
    let k = cols.len();
    let wsum: f64 = w.iter().sum();
    let ybar = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / wsum;
    let mut xbar = vec![0.0; k];
    for (zi, &wi) in z.iter().zip(w) {
        for (a, &c) in cols.iter().enumerate() {
            xbar[a] += wi * zi[c] / wsum;
        }
    }
    let mut g = DMatrix::<f64>::zeros(k, k);
    let mut r = DVector::<f64>::zeros(k);
    let mut xc = vec![0.0; k];
    for ((zi, &yi), &wi) in z.iter().zip(y).zip(w) {
        for (a, &c) in cols.iter().enumerate() {
            xc[a] = zi[c] - xbar[a];
        }
        for a in 0..k {
            r[a] += wi * xc[a] * (yi - ybar);
            for b in 0..=a {
                g[(a, b)] += wi * xc[a] * xc[b];
            }
        }
    }
    let trace: f64 = (0..k).map(|a| g[(a, a)]).sum();
    for a in 0..k {
        for b in 0..a {
            g[(b, a)] = g[(a, b)];
        }
        g[(a, a)] += lambda;
    }
    let coef: Vec<f64> = match g.clone().cholesky() {
        Some(c) => c.solve(&r).iter().copied().collect(),
        None => {
            // rank-deficient with no ridge: tiny jitter picks the minimum-norm-like solution
            let jitter = 1e-10 * trace.max(1.0);
            for a in 0..k {
                g[(a, a)] += jitter;
            }
            g.cholesky().map_or(vec![0.0; k], |c| c.solve(&r).iter().copied().collect())
        }
    };
    let intercept = ybar - coef.iter().zip(&xbar).map(|(c, x)| c * x).sum::<f64>();
    let sse = z
        .iter()
        .zip(y)
        .zip(w)
        .map(|((zi, &yi), &wi)| {
            let pred = intercept + cols.iter().zip(&coef).map(|(&c, b)| zi[c] * b).sum::<f64>();
            wi * (yi - pred) * (yi - pred)
        })
        .sum();
    Fit { coef, intercept, sse }
}

fn select_features(z: &[Vec<f64>], y: &[f64], w: &[f64], m: usize, k: usize, lambda: f64) -> Vec<usize> {
    if k >= m {
        return (0..m).collect();
    }
    if k <= 6 {
        let mut chosen: Vec<usize> = Vec::with_capacity(k);
        while chosen.len() < k {
            let mut best: Option<(f64, usize)> = None;
            for j in (0..m).filter(|j| !chosen.contains(j)) {
                let mut cols = chosen.clone();
                cols.push(j);
                let sse = ridge_fit(&cols, z, y, w, lambda).sse;
                if best.map_or(true, |(b, _)| sse < b) {
                    best = Some((sse, j));
                }
            }
            chosen.push(best.expect("candidates remain").1);
        }
        chosen
    } else {
        let all: Vec<usize> = (0..m).collect();
        let fit = ridge_fit(&all, z, y, w, lambda);
        let mut order = all;
        order.sort_by(|&a, &b| fit.coef[b].abs().total_cmp(&fit.coef[a].abs()));
        order.truncate(k);
        order
    }
}

pub fn lime_explain(model: &dyn PredictiveModel, row: &[f64], stats: &TrainingStats, cfg: &LimeConfig) -> Result<LimeExplanation> {
    let m = stats.len();
    cfg.validate(m)?;
    let nb = sample_neighbourhood(row, stats, cfg)?;
    let y: Vec<f64> = model.predict_batch(&nb.raw);
    let p = y[0];
    let row_bins = stats.bins_of(row);
    let condition = |j: usize| {
        let f = &stats.features[j];
        if !cfg.discretize && f.meta.kind == FeatureKind::Numeric {
            format!("{} = {}", f.meta.display_name, f.meta.format_value(row[j]))
        } else {
            f.describe(row_bins[j])
        }
    };
    let entry = |j: usize, weight: f64| LimeWeight { feature: stats.features[j].meta.display_name.clone(), condition: condition(j), weight };

    let spread = y.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - y.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if spread <= 0.0 {
        return Ok(LimeExplanation {
            intercept: p,
            weights: (0..cfg.top_k).map(|j| entry(j, 0.0)).collect(),
            local_fit_r2: 1.0,
            class_probs: [1.0 - p, p],
            explained_class: "positive".into(),
            local_prediction: p,
            degenerate: true,
        });
    }

    let selected = select_features(&nb.interpretable, &y, &nb.weights, m, cfg.top_k, cfg.ridge);
    let fit = ridge_fit(&selected, &nb.interpretable, &y, &nb.weights, cfg.ridge);
    let wsum: f64 = nb.weights.iter().sum();
    let ybar = y.iter().zip(&nb.weights).map(|(y, w)| y * w).sum::<f64>() / wsum;
    let sst: f64 = y.iter().zip(&nb.weights).map(|(y, w)| w * (y - ybar) * (y - ybar)).sum();
    let local_prediction = fit.intercept + selected.iter().zip(&fit.coef).map(|(&j, c)| nb.interpretable[0][j] * c).sum::<f64>();

    let mut pairs: Vec<(usize, f64)> = selected.into_iter().zip(fit.coef).collect();
    pairs.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
    Ok(LimeExplanation {
        intercept: fit.intercept,
        weights: pairs.into_iter().map(|(j, w)| entry(j, w)).collect(),
        local_fit_r2: 1.0 - fit.sse / sst,
        class_probs: [1.0 - p, p],
        explained_class: "positive".into(),
        local_prediction,
        degenerate: false,
    })
}

/// Per-instance seeds derived from the instance index; output is independent
/// of thread count.
pub fn lime_explain_many(
    model: &dyn PredictiveModel,
    rows: &[Vec<f64>],
    stats: &TrainingStats,
    cfg: &LimeConfig,
) -> Result<Vec<LimeExplanation>> {
    rows.par_iter()
        .enumerate()
        .map(|(i, r)| lime_explain(model, r, stats, &LimeConfig { seed: rng::derive_seed(cfg.seed, i as u64), ..cfg.clone() }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FeatureMeta, Schema};

    fn uniform_stats(m: usize, n: usize, seed: u64) -> (TrainingStats, Vec<Vec<f64>>) {
        let mut rng = rng::rng_from(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|j| rng.gen_range(0.0..(1.0 + j as f64))).collect()).collect();
        let schema = crate::models::testutil::numeric_schema(m);
        (TrainingStats::from_rows(&schema, &rows).unwrap(), rows)
    }

    #[test]
    fn sample_zero_is_the_row() {
        let (stats, rows) = uniform_stats(4, 200, 1);
        let nb = sample_neighbourhood(&rows[3], &stats, &LimeConfig::default()).unwrap();
        assert_eq!(nb.raw[0], rows[3]);
        assert!(nb.interpretable[0].iter().all(|&z| z == 1.0));
        assert_eq!(nb.weights[0], 1.0);
    }

    #[test]
    fn wide_kernel_flattens_weights() {
        let (stats, rows) = uniform_stats(4, 200, 1);
        let cfg = LimeConfig { kernel_width: KernelWidth::Fixed(1e9), ..LimeConfig::default() };
        let nb = sample_neighbourhood(&rows[0], &stats, &cfg).unwrap();
        assert!(nb.weights.iter().all(|&w| (w - 1.0).abs() < 1e-12));
    }

    #[test]
    fn indicator_rate_is_keep_plus_collision() {
        let schema = Schema::new(vec![
            FeatureMeta::numeric("a", "a", None),
            FeatureMeta::categorical("c", "c", &["x", "y", "z"]),
        ])
        .unwrap();
        let rows: Vec<Vec<f64>> = (0..400).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let stats = TrainingStats::from_rows(&schema, &rows).unwrap();
        let nb = sample_neighbourhood(&rows[7], &stats, &LimeConfig::default()).unwrap();
        for j in 0..2 {
            let rate = nb.interpretable.iter().map(|z| z[j]).sum::<f64>() / nb.interpretable.len() as f64;
            assert!((0.45..=0.75).contains(&rate), "feature {j}: {rate}");
        }
    }

    #[test]
    fn constant_model_is_degenerate() {
        let (stats, rows) = uniform_stats(3, 100, 2);
        let cfg = LimeConfig { top_k: 3, n_samples: 500, ..LimeConfig::default() };
        let e = lime_explain(&|_: &[f64]| 0.3, &rows[0], &stats, &cfg).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.intercept, 0.3);
        assert_eq!(e.weights.len(), 3);
        assert!(e.weights.iter().all(|w| w.weight == 0.0));
    }

    #[test]
    fn linear_model_ranking_and_signs() {
        let (stats, rows) = uniform_stats(3, 500, 3);
        let coef = [0.5, -0.2, 0.05];
        let f = move |r: &[f64]| 0.2 + r.iter().zip(&coef).map(|(x, c)| x * c).sum::<f64>();
        let cfg = LimeConfig { top_k: 3, ridge: 1e-4, discretize: false, ..LimeConfig::default() };
        let e = lime_explain(&f, &rows[10], &stats, &cfg).unwrap();
        // |coef * spread|: x0 0.5*0.29, x1 0.2*0.58, x2 0.05*0.87
        let names: Vec<&str> = e.weights.iter().map(|w| w.feature.as_str()).collect();
        assert_eq!(names, vec!["x0", "x1", "x2"]);
        for w in &e.weights {
            let j: usize = w.feature[1..].parse().unwrap();
            assert_eq!(w.weight.signum(), coef[j].signum());
            let expected = coef[j] * stats.features[j].sd;
            assert!((w.weight - expected).abs() < 1e-4 * expected.abs(), "{} vs {expected}", w.weight);
        }
        assert!(e.local_fit_r2 > 0.999);
    }

    #[test]
    fn forward_selection_finds_the_informative_features() {
        let (stats, rows) = uniform_stats(6, 400, 4);
        let f = |r: &[f64]| 1.0 / (1.0 + (-(2.0 * r[1] - 1.5 * r[4])).exp());
        let cfg = LimeConfig { top_k: 2, ..LimeConfig::default() };
        let e = lime_explain(&f, &rows[5], &stats, &cfg).unwrap();
        let mut names: Vec<&str> = e.weights.iter().map(|w| w.feature.as_str()).collect();
        names.sort();
        assert_eq!(names, vec!["x1", "x4"]);
        assert!(e.local_fit_r2 >= 0.0);
    }

    #[test]
    fn deterministic_and_parallel_consistent() {
        let (stats, rows) = uniform_stats(5, 200, 5);
        let f = |r: &[f64]| (r[0] - r[2]).tanh() * 0.5 + 0.5;
        let cfg = LimeConfig { top_k: 3, n_samples: 300, seed: 7, ..LimeConfig::default() };
        let many = lime_explain_many(&f, &rows[..4], &stats, &cfg).unwrap();
        for (i, r) in rows[..4].iter().enumerate() {
            let one = lime_explain(&f, r, &stats, &LimeConfig { seed: rng::derive_seed(7, i as u64), ..cfg.clone() }).unwrap();
            assert_eq!(many[i], one);
        }
    }

    #[test]
    fn config_validation() {
        let c = LimeConfig { top_k: 9, ..LimeConfig::default() };
        assert!(c.validate(8).is_err());
        let c = LimeConfig { top_k: 4, n_samples: 39, ..LimeConfig::default() };
        assert!(c.validate(8).is_err());
        let parsed: LimeConfig = toml::from_str("kernel_width = \"auto\"\n").unwrap();
        assert_eq!(parsed.kernel_width, KernelWidth::Auto);
        let parsed: LimeConfig = toml::from_str("kernel_width = 2.5\n").unwrap();
        assert_eq!(parsed.kernel_width, KernelWidth::Fixed(2.5));
        assert!(toml::from_str::<LimeConfig>("kernel_width = \"wide\"\n").is_err());
    }
}
