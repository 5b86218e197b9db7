use std::collections::BTreeMap;

use super::{train_gbt, train_logistic, GbtModel, LogisticModel, TrainedModel};
use crate::dataset::Dataset;
use crate::ebm::{train_ebm, EbmModel};
use crate::error::{Error, Result};

pub type TrainFn = fn(&Dataset, &serde_json::Value) -> Result<Box<dyn TrainedModel>>;
pub type LoadFn = fn(serde_json::Value) -> Result<Box<dyn TrainedModel>>;

/// A named model family: how to fit it from JSON hyperparameters and how to
/// rebuild it from bundle parameters.
#[derive(Clone, Copy)]
pub struct ModelFamily {
    pub name: &'static str,
    pub train: TrainFn,
    pub load: LoadFn,
}

#[derive(Clone, Default)]
pub struct ModelRegistry {
    families: BTreeMap<&'static str, ModelFamily>,
}

fn hyper<T: serde::de::DeserializeOwned>(family: &str, v: &serde_json::Value) -> Result<T> {
    let v = if v.is_null() { serde_json::json!({}) } else { v.clone() };
    serde_json::from_value(v).map_err(|e| Error::Config(format!("{family} hyperparameters: {e}")))
}

impl ModelRegistry {
    pub fn empty() -> Self {
        ModelRegistry::default()
    }

    /// logistic, gbt and ebm.
    pub fn builtin() -> Self {
        let mut r = ModelRegistry::empty();
        r.register(ModelFamily {
            name: "logistic",
            train: |d, h| Ok(Box::new(train_logistic(d, &hyper("logistic", h)?)?)),
            load: |p| Ok(Box::new(serde_json::from_value::<LogisticModel>(p)?.rebuild())),
        });
        r.register(ModelFamily {
            name: "gbt",
            train: |d, h| Ok(Box::new(train_gbt(d, &hyper("gbt", h)?)?)),
            load: |p| Ok(Box::new(serde_json::from_value::<GbtModel>(p)?)),
        });
        r.register(ModelFamily {
            name: "ebm",
            train: |d, h| Ok(Box::new(train_ebm(d, &hyper("ebm", h)?)?)),
            load: |p| Ok(Box::new(serde_json::from_value::<EbmModel>(p)?)),
        });
        r
    }

    /// Adds or replaces a family.
    pub fn register(&mut self, family: ModelFamily) {
        self.families.insert(family.name, family);
    }

    pub fn get(&self, name: &str) -> Result<&ModelFamily> {
        self.families
            .get(name)
            .ok_or_else(|| Error::UnknownStrategy { kind: "model family", name: name.to_string() })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.families.keys().copied().collect()
    }

    pub fn train(&self, name: &str, data: &Dataset, hyper: &serde_json::Value) -> Result<Box<dyn TrainedModel>> {
        (self.get(name)?.train)(data, hyper)
    }

    pub fn load(&self, name: &str, params: serde_json::Value) -> Result<Box<dyn TrainedModel>> {
        (self.get(name)?.load)(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_names() {
        assert_eq!(ModelRegistry::builtin().names(), vec!["ebm", "gbt", "logistic"]);
    }

    #[test]
    fn unknown_family_and_bad_hyper() {
        let r = ModelRegistry::builtin();
        assert!(matches!(r.get("svm"), Err(Error::UnknownStrategy { .. })));
        let d = crate::models::testutil::dataset(
            crate::models::testutil::numeric_schema(1),
            vec![vec![0.0], vec![1.0]],
            vec![0, 1],
        );
        let e = r.train("gbt", &d, &serde_json::json!({"n_trees": 10, "depth": 3})).err().unwrap();
        assert!(matches!(e, Error::Config(_)));
    }
}
