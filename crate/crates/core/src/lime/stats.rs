//! Per-feature training marginals and the quartile discretizer shared by the
//! perturbation-based explainers.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureKind, FeatureMeta, Schema};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub meta: FeatureMeta,
    /// Strictly increasing interior cut points (deduplicated quartiles).
    /// Bin `b` holds `cuts[b-1] < x <= cuts[b]`.
    pub cuts: Vec<f64>,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub sd: f64,
    /// Training frequency of each bin (numeric) or category.
    pub freq: Vec<f64>,
}

impl FeatureStats {
    fn fit(meta: &FeatureMeta, col: &mut [f64]) -> Self {
        col.sort_by(f64::total_cmp);
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let sd = (col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
        let (min, max) = (col[0], col[col.len() - 1]);
        let mut cuts = Vec::new();
        let n_bins = match meta.kind {
            FeatureKind::Numeric => {
                for q in [0.25, 0.5, 0.75] {
                    let c = quantile(col, q);
                    if c < max && cuts.last().map_or(true, |&l| c > l) {
                        cuts.push(c);
                    }
                }
                cuts.len() + 1
            }
            FeatureKind::Categorical => meta.categories.len(),
        };
        let mut stats = FeatureStats { meta: meta.clone(), cuts, min, max, mean, sd, freq: vec![0.0; n_bins] };
        for &x in col.iter() {
            let b = stats.bin(x);
            stats.freq[b] += 1.0;
        }
        stats.freq.iter_mut().for_each(|f| *f /= n);
        stats
    }

    pub fn n_bins(&self) -> usize {
        self.freq.len()
    }

    #[inline]
    pub fn bin(&self, x: f64) -> usize {
        match self.meta.kind {
            FeatureKind::Numeric => self.cuts.partition_point(|&c| c < x),
            FeatureKind::Categorical => (x.max(0.0) as usize).min(self.freq.len() - 1),
        }
    }

    /// `(lower exclusive, upper inclusive)` bounds of a numeric bin.
    pub fn interval(&self, b: usize) -> (Option<f64>, Option<f64>) {
        let lo = if b == 0 { None } else { self.cuts.get(b - 1).copied() };
        (lo, self.cuts.get(b).copied())
    }

    pub fn draw_bin(&self, rng: &mut Rng) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = 0;
        for (b, &f) in self.freq.iter().enumerate() {
            if f > 0.0 {
                acc += f;
                last = b;
                if u < acc {
                    return b;
                }
            }
        }
        last
    }

    /// A raw value inside bin `b`; numeric draws are uniform over the bin's
    /// training range.
    pub fn draw_in_bin(&self, b: usize, rng: &mut Rng) -> f64 {
        match self.meta.kind {
            FeatureKind::Categorical => b as f64,
            FeatureKind::Numeric => {
                let (lo, hi) = self.interval(b);
                let lo = lo.unwrap_or(self.min);
                let hi = hi.unwrap_or(self.max);
                if hi > lo { rng.gen_range(lo..=hi) } else { lo }
            }
        }
    }

    /// Human-readable condition for bin `b`, e.g. `61 < Age <= 70`.
    pub fn describe(&self, b: usize) -> String {
        let name = &self.meta.display_name;
        match self.meta.kind {
            FeatureKind::Categorical => format!("{name} = {}", self.meta.format_value(b as f64)),
            FeatureKind::Numeric => match self.interval(b) {
                (None, None) => format!("{name} = {}", self.meta.format_value(self.min)),
                (None, Some(h)) => format!("{name} <= {}", fmt(h)),
                (Some(l), None) => format!("{name} > {}", fmt(l)),
                (Some(l), Some(h)) => format!("{} < {name} <= {}", fmt(l), fmt(h)),
            },
        }
    }
}

fn fmt(x: f64) -> String {
    if x.fract() == 0.0 { format!("{x:.0}") } else { format!("{x:.2}") }
}

/// Training-set marginals for every feature, in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingStats {
    pub features: Vec<FeatureStats>,
}

impl TrainingStats {
    pub fn fit(data: &Dataset) -> Result<Self> {
        Self::from_rows(&data.schema, &data.rows)
    }

    pub fn from_rows(schema: &Schema, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Dataset("training statistics need at least one row".into()));
        }
        let features = schema
            .iter()
            .enumerate()
            .map(|(j, meta)| {
                let mut col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
                FeatureStats::fit(meta, &mut col)
            })
            .collect();
        Ok(TrainingStats { features })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn bins_of(&self, row: &[f64]) -> Vec<usize> {
        self.features.iter().zip(row).map(|(f, &x)| f.bin(x)).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.meta.display_name.clone()).collect()
    }

    /// One unconstrained draw from the product of training marginals.
    pub fn draw_row(&self, rng: &mut Rng) -> Vec<f64> {
        self.features.iter().map(|f| f.draw_in_bin(f.draw_bin(rng), rng)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testutil::{dataset, numeric_schema};

    #[test]
    fn quartile_bins_are_balanced() {
        let rows: Vec<Vec<f64>> = (1..=100).map(|i| vec![i as f64]).collect();
        let d = dataset(numeric_schema(1), rows, vec![0; 100]);
        let s = TrainingStats::fit(&d).unwrap();
        let f = &s.features[0];
        assert_eq!(f.cuts, vec![25.75, 50.5, 75.25]);
        assert_eq!(f.bin(25.0), 0);
        assert_eq!(f.bin(25.75), 0);
        assert_eq!(f.bin(26.0), 1);
        assert_eq!(f.bin(100.0), 3);
        assert!(f.freq.iter().all(|&q| (q - 0.25).abs() < 1e-9));
        assert_eq!(f.describe(0), "x0 <= 25.75");
        assert_eq!(f.describe(3), "x0 > 75.25");
    }

    #[test]
    fn repeated_values_collapse_cuts() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![if i < 36 { 1.0 } else { 2.0 }]).collect();
        let d = dataset(numeric_schema(1), rows, vec![0; 40]);
        let s = TrainingStats::fit(&d).unwrap();
        assert_eq!(s.features[0].cuts, vec![1.0]);
        assert_eq!(s.features[0].freq, vec![0.9, 0.1]);
    }

    #[test]
    fn draws_stay_in_bin() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![(i * i) as f64]).collect();
        let d = dataset(numeric_schema(1), rows, vec![0; 50]);
        let s = TrainingStats::fit(&d).unwrap();
        let f = &s.features[0];
        let mut rng = crate::rng::rng_from(1);
        for _ in 0..500 {
            let b = f.draw_bin(&mut rng);
            assert_eq!(f.bin(f.draw_in_bin(b, &mut rng)), b);
        }
    }

    #[test]
    fn empty_rows_error() {
        assert!(TrainingStats::from_rows(&numeric_schema(2), &[]).is_err());
    }
}
