use serde::{Deserialize, Serialize};

use super::{RawTable, Schema};
use crate::error::{Error, Result};

/// Inclusive plausible interval for a numeric feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeRule {
    pub feature: String,
    pub min: f64,
    pub max: f64,
}

/// Cross-field consistency: when `if_feature` takes a value in `if_in`,
/// `then_feature` must take a value in `then_in`.
///
/// Example: a regimen outcome of "Patient died" requires a vital status of
/// "Dead".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Implication {
    pub if_feature: String,
    pub if_in: Vec<String>,
    pub then_feature: String,
    pub then_in: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CleaningRules {
    /// Features whose null cells drop the row; `None` means every feature.
    #[serde(default)]
    pub drop_if_null: Option<Vec<String>>,
    /// Also apply each schema feature's `plausible_range`.
    #[serde(default = "yes")]
    pub use_schema_ranges: bool,
    #[serde(default)]
    pub ranges: Vec<RangeRule>,
    #[serde(default)]
    pub implications: Vec<Implication>,
}

fn yes() -> bool {
    true
}

impl Default for CleaningRules {
    fn default() -> Self {
        CleaningRules {
            drop_if_null: None,
            use_schema_ranges: true,
            ranges: Vec::new(),
            implications: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanReport {
    pub input_rows: usize,
    pub kept_rows: usize,
    /// Rows dropped, attributed to the first rule each row failed.
    pub dropped: Vec<(String, usize)>,
}

enum Check {
    NotNull(Vec<usize>),
    Range { col: usize, min: f64, max: f64 },
    Implies { if_col: usize, if_in: Vec<f64>, then_col: usize, then_in: Vec<f64> },
}

fn category_codes(schema: &Schema, col: usize, values: &[String]) -> Result<Vec<f64>> {
    let f = schema.get(col);
    values
        .iter()
        .map(|v| {
            f.category_index(v)
                .map(|i| i as f64)
                .ok_or_else(|| Error::OutOfVocabulary {
                    feature: f.display_name.clone(),
                    value: v.clone(),
                })
        })
        .collect()
}

fn compile(schema: &Schema, rules: &CleaningRules) -> Result<Vec<(String, Check)>> {
    let mut checks = Vec::new();
    let null_cols = match &rules.drop_if_null {
        None => (0..schema.len()).collect(),
        Some(names) => names
            .iter()
            .map(|n| schema.require(n))
            .collect::<Result<Vec<_>>>()?,
    };
    checks.push(("null".to_string(), Check::NotNull(null_cols)));

    if rules.use_schema_ranges {
        for (col, f) in schema.iter().enumerate() {
            if let Some((min, max)) = f.plausible_range {
                checks.push((format!("range:{}", f.display_name), Check::Range { col, min, max }));
            }
        }
    }
    for r in &rules.ranges {
        let col = schema.require(&r.feature)?;
        if schema.get(col).is_categorical() {
            return Err(Error::Config(format!(
                "range rule on categorical feature `{}`",
                r.feature
            )));
        }
        checks.push((
            format!("range:{}", r.feature),
            Check::Range { col, min: r.min, max: r.max },
        ));
    }
    for imp in &rules.implications {
        let if_col = schema.require(&imp.if_feature)?;
        let then_col = schema.require(&imp.then_feature)?;
        let if_in = category_codes(schema, if_col, &imp.if_in)?;
        let then_in = category_codes(schema, then_col, &imp.then_in)?;
        checks.push((
            format!("consistency:{}->{}", imp.if_feature, imp.then_feature),
            Check::Implies { if_col, if_in, then_col, then_in },
        ));
    }
    Ok(checks)
}

fn passes(check: &Check, row: &[Option<f64>]) -> bool {
    match check {
        Check::NotNull(cols) => cols.iter().all(|&c| row[c].is_some()),
        Check::Range { col, min, max } => match row[*col] {
            Some(v) => v >= *min && v <= *max,
            None => true,
        },
        Check::Implies { if_col, if_in, then_col, then_in } => match (row[*if_col], row[*then_col]) {
            (Some(a), Some(b)) => !if_in.contains(&a) || then_in.contains(&b),
            _ => true,
        },
    }
}

/// Drops every row that fails a rule; surviving rows keep their order.
pub fn clean(raw: &RawTable, rules: &CleaningRules) -> Result<(RawTable, CleanReport)> {
    let checks = compile(&raw.schema, rules)?;
    let mut dropped = vec![0usize; checks.len()];
    let mut rows = Vec::with_capacity(raw.rows.len());
    for row in &raw.rows {
        match checks.iter().position(|(_, c)| !passes(c, row)) {
            Some(i) => dropped[i] += 1,
            None => rows.push(row.clone()),
        }
    }
    let report = CleanReport {
        input_rows: raw.rows.len(),
        kept_rows: rows.len(),
        dropped: checks
            .iter()
            .zip(dropped)
            .map(|((name, _), n)| (name.clone(), n))
            .collect(),
    };
    Ok((
        RawTable {
            schema: raw.schema.clone(),
            rows,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureMeta;

    fn table(rows: Vec<Vec<Option<f64>>>) -> RawTable {
        let schema = Schema::new(vec![
            FeatureMeta::numeric("HEIGHT", "Height", Some((0.5, 2.5))),
            FeatureMeta::categorical("OUTCOME", "Outcome", &["Completed", "Patient died"]),
            FeatureMeta::categorical("STATUS", "STATUS", &["Alive", "Dead"]),
        ])
        .unwrap();
        RawTable::new(schema, rows).unwrap()
    }

    fn rules() -> CleaningRules {
        CleaningRules {
            implications: vec![Implication {
                if_feature: "Outcome".into(),
                if_in: vec!["Patient died".into()],
                then_feature: "STATUS".into(),
                then_in: vec!["Dead".into()],
            }],
            ..CleaningRules::default()
        }
    }

    #[test]
    fn drops_out_of_range_and_keeps_good_rows() {
        let t = table(vec![
            vec![Some(20.0), Some(0.0), Some(0.0)],
            vec![Some(1.7), Some(0.0), Some(0.0)],
        ]);
        let (c, report) = clean(&t, &rules()).unwrap();
        assert_eq!(c.rows, vec![vec![Some(1.7), Some(0.0), Some(0.0)]]);
        assert_eq!(report.kept_rows, 1);
        assert!(report.dropped.contains(&("range:Height".to_string(), 1)));
    }

    #[test]
    fn drops_inconsistent_and_null_rows() {
        let t = table(vec![
            vec![Some(1.6), Some(1.0), Some(0.0)],
            vec![Some(1.6), Some(1.0), Some(1.0)],
            vec![None, Some(0.0), Some(0.0)],
        ]);
        let (c, report) = clean(&t, &rules()).unwrap();
        assert_eq!(c.rows.len(), 1);
        assert_eq!(report.dropped[0], ("null".to_string(), 1));
    }

    #[test]
    fn unknown_feature_is_an_error() {
        let t = table(vec![]);
        let mut r = rules();
        r.ranges.push(RangeRule { feature: "Nope".into(), min: 0.0, max: 1.0 });
        assert!(matches!(clean(&t, &r), Err(Error::UnknownFeature(_))));
        let mut r = rules();
        r.implications[0].then_in = vec!["Zombie".into()];
        assert!(clean(&t, &r).is_err());
    }

    #[test]
    fn idempotent() {
        let t = table(vec![
            vec![Some(1.6), Some(1.0), Some(0.0)],
            vec![Some(1.9), Some(0.0), None],
            vec![Some(1.2), Some(1.0), Some(1.0)],
        ]);
        let (once, _) = clean(&t, &rules()).unwrap();
        let (twice, report) = clean(&once, &rules()).unwrap();
        assert_eq!(once, twice);
        assert_eq!(report.kept_rows, report.input_rows);
    }
}
