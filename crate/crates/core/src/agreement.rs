//! Cross-explainer agreement: shared top-k features, cross-rank overlap and
//! most-important-feature histograms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::anchors::AnchorRule;
use crate::attribution::Attribution;
use crate::error::{Error, Result};
use crate::lime::LimeExplanation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainerKind {
    Shap,
    Lime,
    Ebm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeatures {
    pub instance_id: usize,
    pub explainer: ExplainerKind,
    pub ordered_features: Vec<String>,
    pub attributions: Vec<f64>,
}

impl RankedFeatures {
    pub fn len(&self) -> usize {
        self.ordered_features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordered_features.is_empty()
    }

    pub fn top(&self) -> Option<&str> {
        self.ordered_features.first().map(String::as_str)
    }
}

/// Orders `names` (given in schema order) by |value| descending; ties keep
/// schema order.
pub fn rank_values(instance_id: usize, explainer: ExplainerKind, names: &[String], values: &[f64]) -> Result<RankedFeatures> {
    if names.len() != values.len() {
        return Err(Error::Schema(format!("{} names for {} values", names.len(), values.len())));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Dataset(format!("non-finite attribution {v}")));
    }
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()));
    let ordered_features: Vec<String> = order.iter().map(|&j| names[j].clone()).collect();
    let mut seen = ordered_features.clone();
    seen.sort();
    seen.dedup();
    if seen.len() != ordered_features.len() {
        return Err(Error::Schema("duplicate feature names in ranking".into()));
    }
    Ok(RankedFeatures { instance_id, explainer, ordered_features, attributions: order.iter().map(|&j| values[j]).collect() })
}

pub fn rank_attribution(instance_id: usize, explainer: ExplainerKind, a: &Attribution) -> Result<RankedFeatures> {
    rank_values(instance_id, explainer, &a.features, &a.contributions)
}

/// LIME weights are already ordered by |weight| then schema order.
pub fn rank_lime(instance_id: usize, e: &LimeExplanation) -> Result<RankedFeatures> {
    let names: Vec<String> = e.weights.iter().map(|w| w.feature.clone()).collect();
    let values: Vec<f64> = e.weights.iter().map(|w| w.weight).collect();
    let r = rank_values(instance_id, ExplainerKind::Lime, &names, &values)?;
    debug_assert_eq!(r.ordered_features, names);
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Rank-j features equal for every j <= k.
    RankExact,
    /// `|top-k(a) ∩ top-k(b)| / k`
    SetOverlap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedRate {
    pub k: usize,
    pub mode: MatchMode,
    pub rate: f64,
    /// Instances that entered the average.
    pub n_instances: usize,
    /// Instances skipped because a ranking is shorter than k.
    pub excluded: usize,
}

fn check_aligned(a: &[RankedFeatures], b: &[RankedFeatures]) -> Result<()> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.instance_id != y.instance_id) {
        return Err(Error::Dataset("rankings cover different instances".into()));
    }
    Ok(())
}

pub fn shared_topk(shap: &[RankedFeatures], lime: &[RankedFeatures], k: usize, mode: MatchMode) -> Result<SharedRate> {
    check_aligned(shap, lime)?;
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    let mut total = 0.0;
    let mut used = 0;
    for (a, b) in shap.iter().zip(lime) {
        if a.len() < k || b.len() < k {
            continue;
        }
        used += 1;
        let (ta, tb) = (&a.ordered_features[..k], &b.ordered_features[..k]);
        total += match mode {
            MatchMode::RankExact => f64::from(u8::from(ta == tb)),
            MatchMode::SetOverlap => ta.iter().filter(|f| tb.contains(f)).count() as f64 / k as f64,
        };
    }
    let rate = if used == 0 { 0.0 } else { total / used as f64 };
    Ok(SharedRate { k, mode, rate, n_instances: used, excluded: shap.len() - used })
}

/// Fraction of instances where `a`'s rank-`rank_a` feature equals `b`'s
/// rank-`rank_b` feature (ranks are 1-based).
pub fn cross_rank_overlap(a: &[RankedFeatures], b: &[RankedFeatures], rank_a: usize, rank_b: usize) -> Result<f64> {
    check_aligned(a, b)?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for (x, y) in a.iter().zip(b) {
        if rank_a == 0 || rank_a > x.len() {
            return Err(Error::OutOfRange { index: rank_a, len: x.len() });
        }
        if rank_b == 0 || rank_b > y.len() {
            return Err(Error::OutOfRange { index: rank_b, len: y.len() });
        }
        hits += usize::from(x.ordered_features[rank_a - 1] == y.ordered_features[rank_b - 1]);
    }
    Ok(hits as f64 / a.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: BTreeMap<String, usize>,
    pub n_instances: usize,
}

impl Histogram {
    /// Most frequent feature; ties go to the alphabetically first.
    pub fn plurality(&self) -> Option<&str> {
        self.counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(k, _)| k.as_str())
    }
}

/// Label counted for an anchor with no predicates.
pub const EMPTY_ANCHOR: &str = "(empty rule)";

/// Counts the first `n` items (or all, if fewer).
pub fn top_feature_histogram<S: AsRef<str>>(firsts: &[S], n: usize) -> Histogram {
    let mut counts = BTreeMap::new();
    let used = &firsts[..n.min(firsts.len())];
    for f in used {
        *counts.entry(f.as_ref().to_string()).or_insert(0) += 1;
    }
    Histogram { counts, n_instances: used.len() }
}

pub fn first_items(ranks: &[RankedFeatures]) -> Vec<String> {
    ranks.iter().map(|r| r.top().unwrap_or(EMPTY_ANCHOR).to_string()).collect()
}

pub fn first_predicates(rules: &[AnchorRule]) -> Vec<String> {
    rules.iter().map(|r| r.predicates.first().map_or(EMPTY_ANCHOR.to_string(), |p| p.feature.clone())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossRank {
    pub rank_a: usize,
    pub rank_b: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub dataset: String,
    pub n_instances: usize,
    pub shared: Vec<SharedRate>,
    /// SHAP rank `rank_a` against LIME rank `rank_b`.
    pub cross_rank: Vec<CrossRank>,
    pub histograms: BTreeMap<String, Histogram>,
}

impl AgreementReport {
    pub fn rate(&self, k: usize, mode: MatchMode) -> Option<f64> {
        self.shared.iter().find(|s| s.k == k && s.mode == mode).map(|s| s.rate)
    }
}

/// Shared rates for k = 1..=3 in both modes, the 3x3 cross-rank table, and
/// histograms over the first `n_hist` instances.
pub fn agreement_report(
    dataset: &str,
    shap: &[RankedFeatures],
    lime: &[RankedFeatures],
    anchors: Option<&[AnchorRule]>,
    n_hist: usize,
) -> Result<AgreementReport> {
    check_aligned(shap, lime)?;
    let mut shared = Vec::new();
    for k in 1..=3 {
        for mode in [MatchMode::RankExact, MatchMode::SetOverlap] {
            shared.push(shared_topk(shap, lime, k, mode)?);
        }
    }
    let depth = shap.iter().chain(lime).map(RankedFeatures::len).min().unwrap_or(0).min(3);
    let mut cross_rank = Vec::new();
    for rank_a in 1..=depth {
        for rank_b in 1..=depth {
            cross_rank.push(CrossRank { rank_a, rank_b, rate: cross_rank_overlap(shap, lime, rank_a, rank_b)? });
        }
    }
    let mut histograms = BTreeMap::new();
    histograms.insert("shap".to_string(), top_feature_histogram(&first_items(shap), n_hist));
    histograms.insert("lime".to_string(), top_feature_histogram(&first_items(lime), n_hist));
    if let Some(rules) = anchors {
        histograms.insert("anchors".to_string(), top_feature_histogram(&first_predicates(rules), n_hist));
    }
    Ok(AgreementReport { dataset: dataset.to_string(), n_instances: shap.len(), shared, cross_rank, histograms })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn ranked(id: usize, kind: ExplainerKind, order: &[&str]) -> RankedFeatures {
        let values: Vec<f64> = (0..order.len()).map(|i| (order.len() - i) as f64).collect();
        rank_values(id, kind, &names(order), &values).unwrap()
    }

    #[test]
    fn ranking_by_magnitude_with_schema_ties() {
        let r = rank_values(0, ExplainerKind::Shap, &names(&["A", "B", "C"]), &[0.5, -0.9, 0.1]).unwrap();
        assert_eq!(r.ordered_features, names(&["B", "A", "C"]));
        assert_eq!(r.attributions, vec![-0.9, 0.5, 0.1]);
        let z = rank_values(0, ExplainerKind::Shap, &names(&["A", "B", "C"]), &[0.0; 3]).unwrap();
        assert_eq!(z.ordered_features, names(&["A", "B", "C"]));
        assert!(rank_values(0, ExplainerKind::Shap, &names(&["A", "A"]), &[1.0, 2.0]).is_err());
        assert!(rank_values(0, ExplainerKind::Shap, &names(&["A"]), &[f64::NAN]).is_err());
    }

    #[test]
    fn shared_modes() {
        let a = vec![ranked(0, ExplainerKind::Shap, &["A", "B", "C"])];
        let b = vec![ranked(0, ExplainerKind::Lime, &["B", "A", "C"])];
        assert_eq!(shared_topk(&a, &a, 2, MatchMode::RankExact).unwrap().rate, 1.0);
        assert_eq!(shared_topk(&a, &b, 2, MatchMode::RankExact).unwrap().rate, 0.0);
        assert_eq!(shared_topk(&a, &b, 2, MatchMode::SetOverlap).unwrap().rate, 1.0);
        assert_eq!(shared_topk(&a, &b, 1, MatchMode::SetOverlap).unwrap().rate, 0.0);
        let short = vec![ranked(0, ExplainerKind::Lime, &["B", "A"])];
        let s = shared_topk(&a, &short, 3, MatchMode::SetOverlap).unwrap();
        assert_eq!((s.n_instances, s.excluded), (0, 1));
        let other = vec![ranked(5, ExplainerKind::Lime, &["B", "A", "C"])];
        assert!(shared_topk(&a, &other, 1, MatchMode::RankExact).is_err());
    }

    #[test]
    fn cross_rank_counts() {
        let mut shap = Vec::new();
        let mut lime = Vec::new();
        for i in 0..100 {
            shap.push(ranked(i, ExplainerKind::Shap, &["A", "B", "C"]));
            let top = if i < 30 { ["B", "A", "C"] } else { ["C", "A", "B"] };
            lime.push(ranked(i, ExplainerKind::Lime, &top));
        }
        assert!((cross_rank_overlap(&shap, &lime, 2, 1).unwrap() - 0.30).abs() < 1e-12);
        assert_eq!(cross_rank_overlap(&shap, &shap, 1, 1).unwrap(), 1.0);
        assert_eq!(cross_rank_overlap(&shap, &shap, 2, 1).unwrap(), 0.0);
        assert!(matches!(cross_rank_overlap(&shap, &lime, 4, 1), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn histograms() {
        let firsts: Vec<&str> = (0..1000).map(|i| if i < 600 { "A" } else { "B" }).collect();
        let h = top_feature_histogram(&firsts, 1000);
        assert_eq!(h.counts["A"], 600);
        assert_eq!(h.counts["B"], 400);
        assert_eq!(h.plurality(), Some("A"));
        let h = top_feature_histogram(&firsts[..10], 1000);
        assert_eq!(h.n_instances, 10);
        assert_eq!(h.counts.values().sum::<usize>(), 10);
    }

    #[test]
    fn report_invariants() {
        let shap: Vec<_> = (0..20).map(|i| ranked(i, ExplainerKind::Shap, if i % 3 == 0 { &["A", "B", "C"] } else { &["B", "C", "A"] })).collect();
        let lime: Vec<_> = (0..20).map(|i| ranked(i, ExplainerKind::Lime, if i % 2 == 0 { &["A", "C", "B"] } else { &["B", "C", "A"] })).collect();
        let r = agreement_report("DA", &shap, &lime, None, 1000).unwrap();
        for k in 1..=3 {
            assert!(r.rate(k, MatchMode::RankExact).unwrap() <= r.rate(k, MatchMode::SetOverlap).unwrap());
            if k > 1 {
                assert!(r.rate(k, MatchMode::RankExact).unwrap() <= r.rate(k - 1, MatchMode::RankExact).unwrap());
            }
        }
        let sym = agreement_report("DA", &lime, &shap, None, 1000).unwrap();
        for k in 1..=3 {
            assert_eq!(r.rate(k, MatchMode::SetOverlap), sym.rate(k, MatchMode::SetOverlap));
        }
        assert_eq!(r.cross_rank.len(), 9);
        assert!(r.histograms.values().all(|h| h.counts.values().sum::<usize>() == 20));
    }
}
