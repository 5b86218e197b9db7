use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

/// Metadata for one tabular column.
///
/// Cell values are carried as `f64` everywhere in the toolkit: numeric cells
/// hold the measurement, categorical cells hold the index of the category in
/// `categories`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub source_name: String,
    pub display_name: String,
    pub kind: FeatureKind,
    #[serde(default)]
    pub categories: Vec<String>,
    #[serde(default)]
    pub plausible_range: Option<(f64, f64)>,
    #[serde(default)]
    pub description: String,
}

impl FeatureMeta {
    pub fn numeric(source: &str, display: &str, range: Option<(f64, f64)>) -> Self {
        FeatureMeta {
            source_name: source.to_string(),
            display_name: display.to_string(),
            kind: FeatureKind::Numeric,
            categories: Vec::new(),
            plausible_range: range,
            description: String::new(),
        }
    }

    pub fn categorical(source: &str, display: &str, categories: &[&str]) -> Self {
        FeatureMeta {
            source_name: source.to_string(),
            display_name: display.to_string(),
            kind: FeatureKind::Categorical,
            categories: categories.iter().map(|c| c.to_string()).collect(),
            plausible_range: None,
            description: String::new(),
        }
    }

    pub fn with_description(mut self, text: &str) -> Self {
        self.description = text.to_string();
        self
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == FeatureKind::Categorical
    }

    pub fn category_index(&self, value: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == value)
    }

    /// Human-readable rendering of a cell value.
    pub fn format_value(&self, value: f64) -> String {
        match self.kind {
            FeatureKind::Categorical => self
                .categories
                .get(value as usize)
                .cloned()
                .unwrap_or_else(|| format!("#{value}")),
            FeatureKind::Numeric => {
                if value.fract() == 0.0 && value.abs() < 1e12 {
                    format!("{value:.0}")
                } else {
                    format!("{value:.3}")
                }
            }
        }
    }

    /// True when `value` is a legal cell for this feature.
    pub fn accepts(&self, value: f64) -> bool {
        match self.kind {
            FeatureKind::Numeric => value.is_finite(),
            FeatureKind::Categorical => {
                value >= 0.0 && value.fract() == 0.0 && (value as usize) < self.categories.len()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self.kind {
            FeatureKind::Categorical => {
                if self.categories.is_empty() {
                    return Err(Error::Schema(format!(
                        "categorical feature `{}` has no categories",
                        self.display_name
                    )));
                }
                let mut seen = HashSet::new();
                for c in &self.categories {
                    if !seen.insert(c) {
                        return Err(Error::Schema(format!(
                            "duplicate category `{c}` in `{}`",
                            self.display_name
                        )));
                    }
                }
                if self.plausible_range.is_some() {
                    return Err(Error::Schema(format!(
                        "categorical feature `{}` cannot carry a numeric range",
                        self.display_name
                    )));
                }
            }
            FeatureKind::Numeric => {
                if !self.categories.is_empty() {
                    return Err(Error::Schema(format!(
                        "numeric feature `{}` lists categories",
                        self.display_name
                    )));
                }
                if let Some((lo, hi)) = self.plausible_range {
                    if !(lo <= hi) {
                        return Err(Error::Schema(format!(
                            "empty plausible range for `{}`",
                            self.display_name
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// An ordered, validated list of features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FeatureMeta>", into = "Vec<FeatureMeta>")]
pub struct Schema {
    features: Vec<FeatureMeta>,
}

impl TryFrom<Vec<FeatureMeta>> for Schema {
    type Error = Error;
    fn try_from(features: Vec<FeatureMeta>) -> Result<Self> {
        Schema::new(features)
    }
}

impl From<Schema> for Vec<FeatureMeta> {
    fn from(s: Schema) -> Self {
        s.features
    }
}

impl Schema {
    pub fn new(features: Vec<FeatureMeta>) -> Result<Self> {
        let mut names = HashSet::new();
        let mut sources = HashSet::new();
        for f in &features {
            f.validate()?;
            if !names.insert(f.display_name.as_str()) {
                return Err(Error::Schema(format!(
                    "duplicate display name `{}`",
                    f.display_name
                )));
            }
            if !sources.insert(f.source_name.as_str()) {
                return Err(Error::Schema(format!(
                    "duplicate source name `{}`",
                    f.source_name
                )));
            }
        }
        Ok(Schema { features })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[FeatureMeta] {
        &self.features
    }

    pub fn get(&self, index: usize) -> &FeatureMeta {
        &self.features[index]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, FeatureMeta> {
        self.features.iter()
    }

    pub fn index_of(&self, display_name: &str) -> Option<usize> {
        self.features
            .iter()
            .position(|f| f.display_name == display_name)
    }

    pub fn require(&self, display_name: &str) -> Result<usize> {
        self.index_of(display_name)
            .ok_or_else(|| Error::UnknownFeature(display_name.to_string()))
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.display_name.clone()).collect()
    }

    /// Keeps only the named features, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<(Schema, Vec<usize>)> {
        let idx = names
            .iter()
            .map(|n| self.require(n))
            .collect::<Result<Vec<_>>>()?;
        let feats = idx.iter().map(|&i| self.features[i].clone()).collect();
        Ok((Schema::new(feats)?, idx))
    }

    /// Hex SHA-256 of the canonical JSON form; identifies a schema in bundles.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(&self.features).expect("schema serializes");
        hex::encode(Sha256::digest(json))
    }

    /// Checks that a materialized row conforms to this schema.
    pub fn check_row(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.len() {
            return Err(Error::Dataset(format!(
                "row has {} cells, schema has {}",
                row.len(),
                self.len()
            )));
        }
        for (f, &v) in self.features.iter().zip(row) {
            if !f.accepts(v) {
                return Err(Error::OutOfVocabulary {
                    feature: f.display_name.clone(),
                    value: v.to_string(),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicate_display_names() {
        let err = Schema::new(vec![
            FeatureMeta::numeric("A", "Age", None),
            FeatureMeta::numeric("B", "Age", None),
        ]);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_bad_categoricals() {
        assert!(Schema::new(vec![FeatureMeta::categorical("S", "Sex", &[])]).is_err());
        assert!(Schema::new(vec![FeatureMeta::categorical("S", "Sex", &["F", "F"])]).is_err());
    }

    #[test]
    fn hash_changes_with_vocabulary() {
        let a = Schema::new(vec![FeatureMeta::categorical("S", "Sex", &["F", "M"])]).unwrap();
        let b = Schema::new(vec![FeatureMeta::categorical("S", "Sex", &["F", "M", "X"])]).unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), a.clone().hash());
    }

    #[test]
    fn serde_roundtrip_revalidates() {
        let s = Schema::new(vec![FeatureMeta::numeric("W", "Weight", Some((30.0, 200.0)))]).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: Schema = serde_json::from_str(&json).unwrap();
        assert_eq!(s, back);
        let bad = r#"[{"source_name":"a","display_name":"x","kind":"categorical"}]"#;
        assert!(serde_json::from_str::<Schema>(bad).is_err());
    }
}
