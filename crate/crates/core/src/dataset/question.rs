use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Dataset, RawTable};
use crate::error::{Error, Result};

/// The four binary prediction tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QuestionId {
    #[serde(rename = "DA")]
    Da,
    #[serde(rename = "LC-DA")]
    LcDa,
    #[serde(rename = "MD")]
    Md,
    #[serde(rename = "LC-MD")]
    LcMd,
}

impl QuestionId {
    pub const ALL: [QuestionId; 4] = [QuestionId::Da, QuestionId::LcDa, QuestionId::Md, QuestionId::LcMd];

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionId::Da => "DA",
            QuestionId::LcDa => "LC-DA",
            QuestionId::Md => "MD",
            QuestionId::LcMd => "LC-MD",
        }
    }

    pub fn is_lung(self) -> bool {
        matches!(self, QuestionId::LcDa | QuestionId::LcMd)
    }

    pub fn is_mortality(self) -> bool {
        matches!(self, QuestionId::Da | QuestionId::LcDa)
    }

    pub fn parse(s: &str) -> Option<Self> {
        QuestionId::ALL.into_iter().find(|q| q.as_str().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for QuestionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Keeps rows whose categorical `feature` starts with one of `code_prefixes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortFilter {
    pub feature: String,
    pub code_prefixes: Vec<String>,
}

impl CohortFilter {
    /// ICD-10 C34.x: malignant neoplasm of bronchus and lung.
    pub fn lung() -> Self {
        CohortFilter {
            feature: "Site".into(),
            code_prefixes: vec!["C34".into()],
        }
    }

    pub fn matches(&self, category: &str) -> bool {
        self.code_prefixes.iter().any(|p| category.starts_with(p.as_str()))
    }
}

impl Default for CohortFilter {
    fn default() -> Self {
        CohortFilter::lung()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSpec {
    pub id: QuestionId,
    pub cohort_filter: Option<CohortFilter>,
    pub target_feature: String,
    pub positive_label: String,
    /// Sorted, duplicate-free.
    pub excluded_features: Vec<String>,
}

pub const MORTALITY_TARGET: &str = "STATUS";
pub const REDUCTION_TARGET: &str = "Reduction";

impl QuestionSpec {
    /// The standard definition of a question; both targets are always
    /// excluded from the inputs.
    pub fn standard(id: QuestionId, lung: &CohortFilter) -> Self {
        let (target, positive) = if id.is_mortality() {
            (MORTALITY_TARGET, "Dead")
        } else {
            (REDUCTION_TARGET, "Y")
        };
        let mut excluded = vec![MORTALITY_TARGET.to_string(), REDUCTION_TARGET.to_string()];
        excluded.sort();
        QuestionSpec {
            id,
            cohort_filter: id.is_lung().then(|| lung.clone()),
            target_feature: target.into(),
            positive_label: positive.into(),
            excluded_features: excluded,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.excluded_features.contains(&self.target_feature) {
            return Err(Error::Config(format!(
                "question {}: target `{}` must be excluded from inputs",
                self.id, self.target_feature
            )));
        }
        let opposing = if self.id.is_mortality() { REDUCTION_TARGET } else { MORTALITY_TARGET };
        if !self.excluded_features.iter().any(|f| f == opposing) {
            return Err(Error::Config(format!(
                "question {}: opposing target `{opposing}` must be excluded from inputs",
                self.id
            )));
        }
        Ok(())
    }
}

/// Applies the cohort filter, binarizes the target and drops excluded
/// features.
pub fn make_question_dataset(raw: &RawTable, q: &QuestionSpec) -> Result<Dataset> {
    q.validate()?;
    let schema = &raw.schema;
    let target_col = schema.require(&q.target_feature)?;
    let target_meta = schema.get(target_col);
    if !target_meta.is_categorical() {
        return Err(Error::Dataset(format!("target `{}` is not categorical", q.target_feature)));
    }
    let positive = target_meta
        .category_index(&q.positive_label)
        .ok_or_else(|| Error::OutOfVocabulary {
            feature: q.target_feature.clone(),
            value: q.positive_label.clone(),
        })? as f64;

    let cohort = match &q.cohort_filter {
        Some(c) => {
            let col = schema.require(&c.feature)?;
            let meta = schema.get(col);
            if !meta.is_categorical() {
                return Err(Error::Config(format!("cohort feature `{}` is not categorical", c.feature)));
            }
            let allowed: Vec<f64> = meta
                .categories
                .iter()
                .enumerate()
                .filter(|(_, name)| c.matches(name))
                .map(|(i, _)| i as f64)
                .collect();
            Some((col, allowed))
        }
        None => None,
    };

    let excluded: Vec<usize> = q
        .excluded_features
        .iter()
        .filter_map(|n| schema.index_of(n))
        .collect();
    let inputs: Vec<usize> = (0..schema.len()).filter(|i| !excluded.contains(i)).collect();
    let input_names: Vec<&str> = inputs.iter().map(|&i| schema.get(i).display_name.as_str()).collect();
    let (input_schema, _) = schema.select(&input_names)?;

    let mut rows = Vec::new();
    let mut target = Vec::new();
    let mut row_ids = Vec::new();
    let mut observed: Vec<f64> = Vec::new();
    for (id, raw_row) in raw.rows.iter().enumerate() {
        if let Some((col, allowed)) = &cohort {
            match raw_row[*col] {
                Some(v) if allowed.contains(&v) => {}
                _ => continue,
            }
        }
        let t = raw_row[target_col].ok_or_else(|| {
            Error::Dataset(format!("row {id}: null target; clean the table first"))
        })?;
        let row = inputs
            .iter()
            .map(|&j| {
                raw_row[j].ok_or_else(|| {
                    Error::Dataset(format!(
                        "row {id}: null `{}`; clean the table first",
                        schema.get(j).display_name
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if !observed.contains(&t) {
            observed.push(t);
        }
        rows.push(row);
        target.push(u8::from(t == positive));
        row_ids.push(id);
    }
    if rows.is_empty() {
        return Err(Error::Dataset(format!("question {}: cohort filter leaves no rows", q.id)));
    }
    if observed.len() != 2 || !observed.contains(&positive) {
        return Err(Error::Dataset(format!(
            "question {}: target `{}` has {} observed categories, expected 2 including `{}`",
            q.id,
            q.target_feature,
            observed.len(),
            q.positive_label
        )));
    }
    let negative = observed.iter().find(|&&v| v != positive).copied().unwrap_or_default();
    Ok(Dataset {
        schema: input_schema,
        rows,
        target,
        question: q.clone(),
        class_labels: (
            target_meta.categories[negative as usize].clone(),
            q.positive_label.clone(),
        ),
        row_ids,
        provenance_seed: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FeatureMeta, Schema};

    fn raw() -> RawTable {
        let schema = Schema::new(vec![
            FeatureMeta::numeric("AGE", "Age", None),
            FeatureMeta::categorical("SITE", "Site", &["C34.1 Lung", "C50.9 Breast"]),
            FeatureMeta::categorical("STATUS", "STATUS", &["Alive", "Dead"]),
            FeatureMeta::categorical("RED", "Reduction", &["N", "Y"]),
        ])
        .unwrap();
        RawTable::new(
            schema,
            vec![
                vec![Some(70.0), Some(0.0), Some(1.0), Some(0.0)],
                vec![Some(50.0), Some(1.0), Some(0.0), Some(1.0)],
                vec![Some(60.0), Some(0.0), Some(0.0), Some(1.0)],
                vec![Some(65.0), Some(1.0), Some(1.0), Some(1.0)],
            ],
        )
        .unwrap()
    }

    #[test]
    fn mortality_target_is_binarized() {
        let d = make_question_dataset(&raw(), &QuestionSpec::standard(QuestionId::Da, &CohortFilter::lung())).unwrap();
        assert_eq!(d.target, vec![1, 0, 0, 1]);
        assert_eq!(d.class_labels, ("Alive".to_string(), "Dead".to_string()));
        assert_eq!(d.schema.names(), vec!["Age", "Site"]);
    }

    #[test]
    fn lung_cohort_keeps_only_c34() {
        let d = make_question_dataset(&raw(), &QuestionSpec::standard(QuestionId::LcDa, &CohortFilter::lung())).unwrap();
        assert_eq!(d.row_ids, vec![0, 2]);
        assert!(d.rows.iter().all(|r| r[1] == 0.0));
    }

    #[test]
    fn both_targets_excluded_for_every_question() {
        for id in QuestionId::ALL {
            let q = QuestionSpec::standard(id, &CohortFilter::lung());
            q.validate().unwrap();
            let d = make_question_dataset(&raw(), &q);
            if let Ok(d) = d {
                d.validate().unwrap();
                assert!(d.schema.index_of("STATUS").is_none());
                assert!(d.schema.index_of("Reduction").is_none());
            }
        }
    }

    #[test]
    fn single_observed_class_is_an_error() {
        // lung rows both have Reduction values N and Y; drop to only "Y" rows
        let mut t = raw();
        t.rows.retain(|r| r[3] == Some(1.0));
        let q = QuestionSpec::standard(QuestionId::Md, &CohortFilter::lung());
        assert!(make_question_dataset(&t, &q).is_err());
    }

    #[test]
    fn empty_cohort_is_an_error() {
        let mut q = QuestionSpec::standard(QuestionId::LcMd, &CohortFilter::lung());
        q.cohort_filter = Some(CohortFilter { feature: "Site".into(), code_prefixes: vec!["C99".into()] });
        assert!(make_question_dataset(&raw(), &q).is_err());
    }
}
