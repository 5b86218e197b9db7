//! Explainers behind one trait, registered by name and built from JSON
//! configuration at runtime.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agreement::{rank_attribution, rank_lime, ExplainerKind, RankedFeatures};
use crate::anchors::{find_anchor, AnchorConfig, AnchorRule};
use crate::attribution::{Attribution, Units};
use crate::dataset::Schema;
use crate::ebm::{ebm_local_explain, EbmModel};
use crate::error::{Error, Result};
use crate::lime::{lime_explain, LimeConfig, LimeExplanation, TrainingStats};
use crate::models::TrainedModel;
use crate::rng;
use crate::shap::{exact_shap_units, instance_config, kernel_shap, ShapConfig, EXACT_LIMIT};

/// Everything an explainer may read besides the model and the row. Built
/// from training data only.
pub struct ExplainContext<'a> {
    pub schema: &'a Schema,
    pub background: &'a [Vec<f64>],
    pub stats: &'a TrainingStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Explanation {
    Additive(Attribution),
    Lime(LimeExplanation),
    Anchor(AnchorRule),
}

impl Explanation {
    /// Feature ranking for agreement analysis; anchors have none.
    pub fn ranked(&self, instance_id: usize, kind: ExplainerKind) -> Result<Option<RankedFeatures>> {
        Ok(match self {
            Explanation::Additive(a) => Some(rank_attribution(instance_id, kind, a)?),
            Explanation::Lime(e) => Some(rank_lime(instance_id, e)?),
            Explanation::Anchor(_) => None,
        })
    }
}

pub trait Explainer: Send + Sync {
    fn name(&self) -> &'static str;

    /// Effective configuration, defaults filled in.
    fn config(&self) -> serde_json::Value;

    /// `instance` seeds any sampling so batches are order independent.
    fn explain(&self, model: &dyn TrainedModel, row: &[f64], instance: usize, ctx: &ExplainContext) -> Result<Explanation>;
}

fn parse<T: serde::de::DeserializeOwned + Default>(name: &str, v: &serde_json::Value) -> Result<T> {
    if v.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("{name}: {e}")))
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("serializable config")
}

pub struct KernelShapExplainer(pub ShapConfig);

impl Explainer for KernelShapExplainer {
    fn name(&self) -> &'static str {
        "shap"
    }
    fn config(&self) -> serde_json::Value {
        to_json(&self.0)
    }
    fn explain(&self, model: &dyn TrainedModel, row: &[f64], instance: usize, ctx: &ExplainContext) -> Result<Explanation> {
        let a = kernel_shap(model, row, ctx.background, &instance_config(&self.0, instance))?;
        Ok(Explanation::Additive(a.with_features(ctx.schema.names()).with_class(model.class_labels().1)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExactShapConfig {
    pub limit: usize,
    pub units: Units,
}

impl Default for ExactShapConfig {
    fn default() -> Self {
        ExactShapConfig { limit: EXACT_LIMIT, units: Units::Probability }
    }
}

pub struct ExactShapExplainer(pub ExactShapConfig);

impl Explainer for ExactShapExplainer {
    fn name(&self) -> &'static str {
        "shap-exact"
    }
    fn config(&self) -> serde_json::Value {
        to_json(&self.0)
    }
    fn explain(&self, model: &dyn TrainedModel, row: &[f64], _: usize, ctx: &ExplainContext) -> Result<Explanation> {
        let a = exact_shap_units(model, row, ctx.background, self.0.limit, self.0.units)?;
        Ok(Explanation::Additive(a.with_features(ctx.schema.names()).with_class(model.class_labels().1)))
    }
}

pub struct LimeExplainer(pub LimeConfig);

impl Explainer for LimeExplainer {
    fn name(&self) -> &'static str {
        "lime"
    }
    fn config(&self) -> serde_json::Value {
        to_json(&self.0)
    }
    fn explain(&self, model: &dyn TrainedModel, row: &[f64], instance: usize, ctx: &ExplainContext) -> Result<Explanation> {
        let cfg = LimeConfig { seed: rng::derive_seed(self.0.seed, instance as u64), ..self.0.clone() };
        let mut e = lime_explain(model, row, ctx.stats, &cfg)?;
        e.explained_class = model.class_labels().1.to_string();
        Ok(Explanation::Lime(e))
    }
}

pub struct AnchorsExplainer(pub AnchorConfig);

impl Explainer for AnchorsExplainer {
    fn name(&self) -> &'static str {
        "anchors"
    }
    fn config(&self) -> serde_json::Value {
        to_json(&self.0)
    }
    fn explain(&self, model: &dyn TrainedModel, row: &[f64], instance: usize, ctx: &ExplainContext) -> Result<Explanation> {
        let cfg = AnchorConfig { seed: rng::derive_seed(self.0.seed, instance as u64), ..self.0.clone() };
        Ok(Explanation::Anchor(find_anchor(model, row, ctx.stats, &cfg)?))
    }
}

/// Exact additive terms of an EBM; other model families are rejected.
pub struct EbmExplainer;

impl Explainer for EbmExplainer {
    fn name(&self) -> &'static str {
        "ebm"
    }
    fn config(&self) -> serde_json::Value {
        serde_json::json!({})
    }
    fn explain(&self, model: &dyn TrainedModel, row: &[f64], _: usize, _: &ExplainContext) -> Result<Explanation> {
        let ebm = model
            .as_any()
            .downcast_ref::<EbmModel>()
            .ok_or_else(|| Error::Config(format!("ebm explainer needs an ebm model, got {}", model.family())))?;
        Ok(Explanation::Additive(ebm_local_explain(ebm, row).with_class(model.class_labels().1)))
    }
}

pub type ExplainerFactory = fn(&serde_json::Value) -> Result<Box<dyn Explainer>>;

#[derive(Clone, Default)]
pub struct ExplainerRegistry {
    factories: BTreeMap<&'static str, ExplainerFactory>,
}

impl ExplainerRegistry {
    pub fn empty() -> Self {
        ExplainerRegistry::default()
    }

    /// shap, shap-exact, lime, anchors and ebm.
    pub fn builtin() -> Self {
        let mut r = ExplainerRegistry::empty();
        r.register("shap", |v| Ok(Box::new(KernelShapExplainer(parse("shap", v)?))));
        r.register("shap-exact", |v| Ok(Box::new(ExactShapExplainer(parse("shap-exact", v)?))));
        r.register("lime", |v| Ok(Box::new(LimeExplainer(parse("lime", v)?))));
        r.register("anchors", |v| Ok(Box::new(AnchorsExplainer(parse("anchors", v)?))));
        r.register("ebm", |v| {
            if v.as_object().is_some_and(|o| !o.is_empty()) {
                return Err(Error::Config("ebm explainer takes no options".into()));
            }
            Ok(Box::new(EbmExplainer))
        });
        r
    }

    pub fn register(&mut self, name: &'static str, factory: ExplainerFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn create(&self, name: &str, config: &serde_json::Value) -> Result<Box<dyn Explainer>> {
        let f = self
            .factories
            .get(name)
            .ok_or_else(|| Error::UnknownStrategy { kind: "explainer", name: name.to_string() })?;
        f(config)
    }
}
