use serde::{Deserialize, Serialize};

use super::{FeatureKind, Schema};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingStrategy {
    OneHot,
    Ordinal,
}

/// Column layout for a schema under one strategy.
///
/// Numerics pass through; one-hot expands each categorical into one
/// indicator per category, in schema then category order.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    strategy: EncodingStrategy,
    /// First encoded column of each feature.
    offsets: Vec<usize>,
    kinds: Vec<(FeatureKind, usize)>,
    names: Vec<String>,
    width: usize,
}

impl Encoder {
    pub fn new(schema: &Schema, strategy: EncodingStrategy) -> Self {
        let mut offsets = Vec::with_capacity(schema.len());
        let mut names = Vec::new();
        let mut kinds = Vec::with_capacity(schema.len());
        for f in schema.iter() {
            offsets.push(names.len());
            kinds.push((f.kind, f.categories.len()));
            match (f.kind, strategy) {
                (FeatureKind::Categorical, EncodingStrategy::OneHot) => {
                    for c in &f.categories {
                        names.push(format!("{}={}", f.display_name, c));
                    }
                }
                _ => names.push(f.display_name.clone()),
            }
        }
        let width = names.len();
        Encoder { strategy, offsets, kinds, names, width }
    }

    pub fn strategy(&self) -> EncodingStrategy {
        self.strategy
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn column_names(&self) -> &[String] {
        &self.names
    }

    /// Encoded columns belonging to feature `j`.
    pub fn columns_of(&self, j: usize) -> std::ops::Range<usize> {
        let end = self.offsets.get(j + 1).copied().unwrap_or(self.width);
        self.offsets[j]..end
    }

    /// Writes the encoding of `row` into `out` (length `width`).
    ///
    /// Returns the out-of-vocabulary feature index on failure.
    pub fn encode_into(&self, row: &[f64], out: &mut [f64]) -> std::result::Result<(), usize> {
        debug_assert_eq!(out.len(), self.width);
        for (j, (&(kind, n_cat), &v)) in self.kinds.iter().zip(row).enumerate() {
            let o = self.offsets[j];
            match (kind, self.strategy) {
                (FeatureKind::Numeric, _) => out[o] = v,
                (FeatureKind::Categorical, s) => {
                    if !(v >= 0.0 && v.fract() == 0.0 && (v as usize) < n_cat) {
                        return Err(j);
                    }
                    match s {
                        EncodingStrategy::Ordinal => out[o] = v,
                        EncodingStrategy::OneHot => {
                            out[o..o + n_cat].fill(0.0);
                            out[o + v as usize] = 1.0;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn encode(&self, schema: &Schema, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.kinds.len() {
            return Err(Error::Dataset(format!(
                "row has {} cells, encoder expects {}",
                row.len(),
                self.kinds.len()
            )));
        }
        let mut out = vec![0.0; self.width];
        self.encode_into(row, &mut out).map_err(|j| Error::OutOfVocabulary {
            feature: schema.get(j).display_name.clone(),
            value: row[j].to_string(),
        })?;
        Ok(out)
    }
}

/// Encodes one row; the layout is a pure function of `(features, strategy)`.
pub fn encode(features: &Schema, row: &[f64], strategy: EncodingStrategy) -> Result<Vec<f64>> {
    Encoder::new(features, strategy).encode(features, row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureMeta;
    use proptest::prelude::*;

    fn schema() -> Schema {
        Schema::new(vec![
            FeatureMeta::numeric("A", "Age", None),
            FeatureMeta::categorical("S", "Sex", &["F", "M"]),
            FeatureMeta::categorical("G", "Grade", &["G1", "G2", "G3"]),
        ])
        .unwrap()
    }

    #[test]
    fn numeric_only_rows_pass_through() {
        let s = Schema::new(vec![
            FeatureMeta::numeric("A", "A", None),
            FeatureMeta::numeric("B", "B", None),
        ])
        .unwrap();
        let row = [1.5, -2.0];
        assert_eq!(encode(&s, &row, EncodingStrategy::OneHot).unwrap(), row);
        assert_eq!(encode(&s, &row, EncodingStrategy::Ordinal).unwrap(), row);
    }

    #[test]
    fn one_hot_indicator_layout() {
        let v = encode(&schema(), &[70.0, 1.0, 2.0], EncodingStrategy::OneHot).unwrap();
        assert_eq!(v, vec![70.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let e = Encoder::new(&schema(), EncodingStrategy::OneHot);
        assert_eq!(e.columns_of(1), 1..3);
        assert_eq!(e.column_names()[2], "Sex=M");
        let o = encode(&schema(), &[70.0, 1.0, 2.0], EncodingStrategy::Ordinal).unwrap();
        assert_eq!(o, vec![70.0, 1.0, 2.0]);
    }

    #[test]
    fn out_of_vocabulary_is_rejected() {
        assert!(matches!(
            encode(&schema(), &[70.0, 2.0, 0.0], EncodingStrategy::OneHot),
            Err(Error::OutOfVocabulary { .. })
        ));
    }

    proptest! {
        #[test]
        fn one_hot_is_injective(a in (0.0f64..100.0, 0usize..2, 0usize..3), b in (0.0f64..100.0, 0usize..2, 0usize..3)) {
            let ra = [a.0, a.1 as f64, a.2 as f64];
            let rb = [b.0, b.1 as f64, b.2 as f64];
            let ea = encode(&schema(), &ra, EncodingStrategy::OneHot).unwrap();
            let eb = encode(&schema(), &rb, EncodingStrategy::OneHot).unwrap();
            prop_assert_eq!(ra == rb, ea == eb);
        }
    }
}
