//! Line-delimited JSON reports. The first line is a versioned header, every
//! following line is one record.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agreement::AgreementReport;
use crate::error::{Error, Result};
use crate::explain::Explanation;
use crate::models::Metrics;
use crate::shap::{ForceLayout, ShapSummary};

pub const REPORT_FORMAT: &str = "attriblab-report";
pub const REPORT_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportHeader {
    pub format: String,
    pub version: u32,
    /// What the records describe, e.g. `metrics`.
    pub kind: String,
    pub tool_version: String,
}

impl ReportHeader {
    pub fn new(kind: &str) -> Self {
        ReportHeader {
            format: REPORT_FORMAT.into(),
            version: REPORT_VERSION,
            kind: kind.into(),
            tool_version: TOOL_VERSION.into(),
        }
    }
}

/// Row and class counts of one question dataset through balancing and
/// splitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub question: String,
    pub class_labels: (String, String),
    pub cohort_rows: usize,
    /// (negative, positive) before balancing.
    pub cohort_counts: (usize, usize),
    pub balanced_counts: (usize, usize),
    pub train_rows: usize,
    pub test_rows: usize,
    pub schema_hash: String,
    pub train_fingerprint: String,
    pub test_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub question: String,
    pub model: String,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub question: String,
    pub model: String,
    pub method: String,
    /// Position in the recorded test order.
    pub instance: usize,
    pub row_id: usize,
    /// (negative, positive)
    pub class_labels: (String, String),
    pub explanation: Explanation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceRecord {
    pub question: String,
    pub model: String,
    pub instance: usize,
    pub row_id: usize,
    pub layout: ForceLayout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub question: String,
    pub model: String,
    pub summary: ShapSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRecord {
    pub question: String,
    pub model: String,
    /// Descending.
    pub importance: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum Record {
    Dataset(DatasetRecord),
    Metric(MetricRecord),
    Explanation(ExplanationRecord),
    Force(ForceRecord),
    ShapSummary(SummaryRecord),
    Importance(ImportanceRecord),
    Agreement(AgreementReport),
}

/// Header line plus one line per record, each newline terminated.
pub fn to_report_string(kind: &str, records: &[Record]) -> Result<String> {
    let mut out = serde_json::to_string(&ReportHeader::new(kind))?;
    out.push('\n');
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_report(path: &Path, kind: &str, records: &[Record]) -> Result<()> {
    let text = to_report_string(kind, records)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn parse_report(text: &str) -> Result<(ReportHeader, Vec<Record>)> {
    parse_lines(text.lines().map(|l| Ok(l.to_string())))
}

pub fn read_report(path: &Path) -> Result<(ReportHeader, Vec<Record>)> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_lines(BufReader::new(f).lines().map(|l| l.map_err(|e| Error::io(path, e))))
}

fn parse_lines(mut lines: impl Iterator<Item = Result<String>>) -> Result<(ReportHeader, Vec<Record>)> {
    let first = lines.next().ok_or_else(|| Error::Report("empty report".into()))??;
    let header: ReportHeader =
        serde_json::from_str(&first).map_err(|e| Error::Report(format!("bad header: {e}")))?;
    if header.format != REPORT_FORMAT {
        return Err(Error::Report(format!("not a report: format `{}`", header.format)));
    }
    if header.version != REPORT_VERSION {
        return Err(Error::Report(format!("unsupported report version {}", header.version)));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line).map_err(|e| Error::Report(format!("line {}: {e}", i + 2)))?;
        records.push(r);
    }
    Ok((header, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::{Attribution, Units};
    use crate::models::{Averaging, Confusion};

    fn metric() -> Record {
        let c = Confusion { tp: 7, tn: 5, fp: 2, fn_: 1 };
        Record::Metric(MetricRecord {
            question: "DA".into(),
            model: "gbt".into(),
            metrics: Metrics::from_confusion(c, Averaging::Weighted),
        })
    }

    fn additive() -> Record {
        Record::Explanation(ExplanationRecord {
            question: "DA".into(),
            model: "gbt".into(),
            method: "shap".into(),
            instance: 0,
            row_id: 41,
            class_labels: ("Alive".into(), "Dead".into()),
            explanation: Explanation::Additive(Attribution {
                features: vec!["Age".into(), "Grade".into()],
                base_value: 0.1 + 0.2,
                contributions: vec![1.0 / 3.0, -2e-17],
                fx: 0.6333333333333333,
                explained_class: "Dead".into(),
                units: Units::Probability,
            }),
        })
    }

    #[test]
    fn roundtrip_is_exact_and_stable() {
        let records = vec![metric(), additive()];
        let text = to_report_string("mixed", &records).unwrap();
        assert_eq!(text.lines().count(), 3);
        let (h, back) = parse_report(&text).unwrap();
        assert_eq!(h, ReportHeader::new("mixed"));
        assert_eq!(back, records);
        assert_eq!(to_report_string("mixed", &back).unwrap(), text);
    }

    #[test]
    fn header_is_checked() {
        assert!(matches!(parse_report(""), Err(Error::Report(_))));
        let wrong = "{\"format\":\"other\",\"version\":1,\"kind\":\"x\",\"tool_version\":\"0\"}\n";
        assert!(matches!(parse_report(wrong), Err(Error::Report(_))));
        let future = "{\"format\":\"attriblab-report\",\"version\":9,\"kind\":\"x\",\"tool_version\":\"0\"}\n";
        assert!(matches!(parse_report(future), Err(Error::Report(_))));
        let text = to_report_string("m", &[metric()]).unwrap() + "{\"record\":\"nope\"}\n";
        assert!(matches!(parse_report(&text), Err(Error::Report(m)) if m.starts_with("line 3")));
    }

    #[test]
    fn file_roundtrip_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/r.jsonl");
        write_report(&p, "metrics", &[metric()]).unwrap();
        assert_eq!(read_report(&p).unwrap().1, vec![metric()]);
        assert!(matches!(read_report(&dir.path().join("none.jsonl")), Err(Error::MissingFile(_))));
    }
}
