//! Static SVG charts drawn from report records.
//!
//! Charts never recompute anything: every number a chart shows or encodes in
//! a `data-*` attribute is a record value written with the JSON formatter, so
//! it matches the report text character for character. Pixel geometry is
//! rounded independently.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::agreement::{AgreementReport, Histogram, MatchMode};
use crate::anchors::AnchorRule;
use crate::attribution::Attribution;
use crate::error::{Error, Result};
use crate::explain::Explanation;
use crate::lime::LimeExplanation;
use crate::report::{ExplanationRecord, ForceRecord, ImportanceRecord, MetricRecord, Record, SummaryRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    /// File stem, without extension.
    pub name: String,
    pub svg: String,
}

const PALETTE: [&str; 6] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#b07aa1"];
const TOWARD_POSITIVE: &str = "#e8384f";
const TOWARD_NEGATIVE: &str = "#1e88e5";

/// A number exactly as the JSON report writes it.
pub fn num(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| "null".into())
}

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

fn file_stem(parts: &[&str]) -> String {
    parts
        .iter()
        .map(|p| p.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect::<String>())
        .collect::<Vec<_>>()
        .join("_")
}

/// Maps a data interval onto a pixel interval.
#[derive(Clone, Copy)]
struct Scale {
    d0: f64,
    d1: f64,
    r0: f64,
    r1: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64, r0: f64, r1: f64) -> Self {
        let (lo, hi) = if (hi - lo).abs() < 1e-12 { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
        Scale { d0: lo, d1: hi, r0, r1 }
    }

    /// Pads the domain by `frac` of its width on both sides.
    fn padded(lo: f64, hi: f64, frac: f64, r0: f64, r1: f64) -> Self {
        let pad = (hi - lo).abs() * frac;
        Scale::new(lo - pad, hi + pad, r0, r1)
    }

    fn at(&self, v: f64) -> f64 {
        self.r0 + (v - self.d0) / (self.d1 - self.d0) * (self.r1 - self.r0)
    }
}

fn finite_range(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((0.0f64, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

struct Svg {
    w: f64,
    h: f64,
    body: String,
}

impl Svg {
    fn new(w: f64, h: f64, title: &str) -> Self {
        let mut s = Svg { w, h, body: String::new() };
        s.text(w / 2.0, 24.0, "middle", 15.0, "", title);
        s
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, size: f64, attrs: &str, content: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" font-size="{size}"{attrs}>{}</text>"#,
            esc(content)
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, attrs: &str, tip: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{fill}"{attrs}><title>{}</title></rect>"#,
            w.max(0.0),
            h.max(0.0),
            esc(tip)
        );
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, attrs: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}"{attrs}/>"#
        );
    }

    fn circle(&mut self, cx: f64, cy: f64, r: f64, fill: &str, attrs: &str) {
        let _ = writeln!(self.body, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{r}" fill="{fill}"{attrs}/>"#);
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.w,
            h = self.h
        )
    }
}

fn attr(name: &str, value: &str) -> String {
    format!(r#" {name}="{}""#, esc(value))
}

/// One group per entry; bars in `series` order, missing values skipped.
pub fn grouped_bars(title: &str, y_label: &str, series: &[String], groups: &[(String, Vec<Option<f64>>)]) -> String {
    let bar_w = 26.0;
    let gap = 30.0;
    let group_w = series.len() as f64 * bar_w + gap;
    let left = 70.0;
    let w = (left + groups.len() as f64 * group_w + 40.0).max(420.0);
    let h = 420.0;
    let (top, bottom) = (70.0, h - 60.0);
    let (lo, hi) = finite_range(groups.iter().flat_map(|(_, v)| v.iter().flatten().copied()));
    let y = Scale::new(lo, hi.max(1.0), bottom, top);
    let mut s = Svg::new(w, h, title);
    for (i, name) in series.iter().enumerate() {
        let x = left + i as f64 * 110.0;
        s.rect(x, 38.0, 10.0, 10.0, PALETTE[i % PALETTE.len()], "", name);
        s.text(x + 14.0, 47.0, "start", 11.0, "", name);
    }
    s.line(left - 4.0, y.at(0.0), w - 20.0, y.at(0.0), "#333", "");
    s.line(left - 4.0, top, left - 4.0, bottom, "#333", "");
    s.text(18.0, (top + bottom) / 2.0, "middle", 12.0, &format!(r#" transform="rotate(-90 18 {:.2})""#, (top + bottom) / 2.0), y_label);
    for (gi, (group, values)) in groups.iter().enumerate() {
        let gx = left + gap / 2.0 + gi as f64 * group_w;
        s.text(gx + series.len() as f64 * bar_w / 2.0, bottom + 20.0, "middle", 12.0, "", group);
        for (si, v) in values.iter().enumerate() {
            let Some(v) = *v else { continue };
            let x = gx + si as f64 * bar_w;
            let (y0, y1) = (y.at(0.0), y.at(v));
            let label = num(v);
            let attrs = attr("data-group", group) + &attr("data-series", &series[si]) + &attr("data-value", &label);
            s.rect(x + 2.0, y0.min(y1), bar_w - 4.0, (y0 - y1).abs(), PALETTE[si % PALETTE.len()], &attrs, &label);
            let ty = y1.min(y0) - 4.0;
            s.text(
                x + bar_w / 2.0 + 3.0,
                ty,
                "start",
                8.0,
                &(attr("class", "value") + &format!(r#" transform="rotate(-90 {:.2} {ty:.2})""#, x + bar_w / 2.0 + 3.0)),
                &label,
            );
        }
    }
    s.finish()
}

/// One chart per metric: groups are questions, bars are models.
pub fn metric_bars(records: &[&MetricRecord], metric: &str) -> Result<String> {
    let pick = |r: &MetricRecord| match metric {
        "accuracy" => Ok(r.metrics.accuracy),
        "precision" => Ok(r.metrics.precision),
        "recall" => Ok(r.metrics.recall),
        other => Err(Error::Report(format!("unknown metric `{other}`"))),
    };
    let mut models: Vec<String> = Vec::new();
    let mut questions: Vec<String> = Vec::new();
    for r in records {
        if !models.contains(&r.model) {
            models.push(r.model.clone());
        }
        if !questions.contains(&r.question) {
            questions.push(r.question.clone());
        }
    }
    let mut groups = Vec::new();
    for q in &questions {
        let mut row = Vec::new();
        for m in &models {
            row.push(match records.iter().find(|r| &r.question == q && &r.model == m) {
                Some(r) => Some(pick(r)?),
                None => None,
            });
        }
        groups.push((q.clone(), row));
    }
    Ok(grouped_bars(&format!("Test {metric} by question and model"), metric, &models, &groups))
}

/// Groups are datasets, bars are k = 1, 2, 3.
pub fn agreement_bars(reports: &[&AgreementReport], mode: MatchMode) -> String {
    let series: Vec<String> = (1..=3).map(|k| format!("k = {k}")).collect();
    let groups: Vec<(String, Vec<Option<f64>>)> = reports
        .iter()
        .map(|r| (r.dataset.clone(), (1..=3).map(|k| r.rate(k, mode)).collect()))
        .collect();
    let mode_name = match mode {
        MatchMode::RankExact => "rank_exact",
        MatchMode::SetOverlap => "set_overlap",
    };
    grouped_bars(&format!("SHAP and LIME shared top-k features ({mode_name})"), "shared rate", &series, &groups)
}

/// Horizontal bars around a zero axis, one row per `(label, value)`.
fn diverging_bars(title: &str, header: &[(String, String)], rows: &[(String, f64)], positive_name: &str) -> String {
    let row_h = 22.0;
    let top = 60.0 + header.len() as f64 * 18.0;
    let h = top + rows.len().max(1) as f64 * row_h + 40.0;
    let w = 760.0;
    let (lo, hi) = finite_range(rows.iter().map(|r| r.1));
    let x = Scale::padded(lo, hi, 0.05, 300.0, w - 110.0);
    let mut s = Svg::new(w, h, title);
    for (i, (k, v)) in header.iter().enumerate() {
        s.text(20.0, 50.0 + i as f64 * 18.0, "start", 12.0, &(attr("data-key", k) + &attr("data-value", v)), &format!("{k} = {v}"));
    }
    let zero = x.at(0.0);
    s.line(zero, top - 4.0, zero, top + rows.len() as f64 * row_h, "#333", "");
    for (i, (label, v)) in rows.iter().enumerate() {
        let y = top + i as f64 * row_h;
        let end = x.at(*v);
        let fill = if *v >= 0.0 { TOWARD_POSITIVE } else { TOWARD_NEGATIVE };
        let text = num(*v);
        let attrs = attr("data-label", label) + &attr("data-value", &text);
        s.rect(zero.min(end), y + 3.0, (end - zero).abs(), row_h - 6.0, fill, &attrs, &text);
        s.text(290.0, y + row_h - 7.0, "end", 11.0, "", label);
        s.text(w - 100.0, y + row_h - 7.0, "start", 9.0, &attr("class", "value"), &text);
    }
    s.text(w - 110.0, h - 12.0, "end", 11.0, "", &format!("positive pushes toward {positive_name}"));
    s.finish()
}

/// LIME weight bars with both class probabilities in the header.
pub fn lime_bars(rec: &ExplanationRecord, e: &LimeExplanation) -> String {
    let (neg, pos) = &rec.class_labels;
    let header = vec![
        (format!("P({neg})"), num(e.class_probs[0])),
        (format!("P({pos})"), num(e.class_probs[1])),
        ("local fit R2".into(), num(e.local_fit_r2)),
    ];
    let rows: Vec<(String, f64)> = e.weights.iter().map(|w| (w.condition.clone(), w.weight)).collect();
    let title = format!("LIME {} {} instance {} (explaining {})", rec.question, rec.model, rec.instance, e.explained_class);
    diverging_bars(&title, &header, &rows, &e.explained_class)
}

/// Additive terms sorted by magnitude, base value and output in the header.
pub fn additive_bars(rec: &ExplanationRecord, a: &Attribution) -> String {
    let mut idx: Vec<usize> = (0..a.contributions.len()).collect();
    idx.sort_by(|&i, &j| a.contributions[j].abs().total_cmp(&a.contributions[i].abs()));
    let rows: Vec<(String, f64)> = idx.iter().map(|&j| (a.features[j].clone(), a.contributions[j])).collect();
    let header = vec![("base value".to_string(), num(a.base_value)), ("f(x)".to_string(), num(a.fx))];
    let title = format!("{} terms {} {} instance {}", rec.method, rec.question, rec.model, rec.instance);
    diverging_bars(&title, &header, &rows, &a.explained_class)
}

pub fn importance_bars(rec: &ImportanceRecord) -> String {
    let rows = &rec.importance;
    let row_h = 20.0;
    let top = 50.0;
    let w = 720.0;
    let h = top + rows.len().max(1) as f64 * row_h + 30.0;
    let (_, hi) = finite_range(rows.iter().map(|r| r.1));
    let x = Scale::new(0.0, hi, 200.0, w - 120.0);
    let mut s = Svg::new(w, h, &format!("Global importance {} {} (mean |score|)", rec.question, rec.model));
    for (i, (name, v)) in rows.iter().enumerate() {
        let y = top + i as f64 * row_h;
        let text = num(*v);
        let attrs = attr("data-label", name) + &attr("data-value", &text);
        s.rect(x.at(0.0), y + 3.0, x.at(*v) - x.at(0.0), row_h - 6.0, PALETTE[0], &attrs, &text);
        s.text(192.0, y + row_h - 6.0, "end", 11.0, "", name);
        s.text(w - 110.0, y + row_h - 6.0, "start", 9.0, &attr("class", "value"), &text);
    }
    s.finish()
}

/// Base value, then positive segments stacking up, then negative segments
/// stacking down to the model output.
pub fn force_plot(rec: &ForceRecord) -> String {
    let l = &rec.layout;
    let w = 900.0;
    let h = 240.0;
    let segs = l.positive.iter().chain(&l.negative);
    let (lo, hi) = segs
        .clone()
        .flat_map(|g| [g.start, g.end])
        .chain([l.base_value, l.fx, l.terminus])
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let x = Scale::padded(lo, hi, 0.08, 40.0, w - 40.0);
    let mut s = Svg::new(w, h, &format!("Force plot {} {} instance {}", rec.question, rec.model, rec.instance));
    let track = 110.0;
    for (g, fill, lane) in l
        .positive
        .iter()
        .map(|g| (g, TOWARD_POSITIVE, 0.0))
        .chain(l.negative.iter().map(|g| (g, TOWARD_NEGATIVE, 1.0)))
    {
        let (a, b) = (x.at(g.start), x.at(g.end));
        let text = num(g.phi);
        let attrs = attr("data-feature", &g.feature)
            + &attr("data-start", &num(g.start))
            + &attr("data-end", &num(g.end))
            + &attr("data-value", &text);
        s.rect(a.min(b), track - 14.0 + lane * 30.0, (b - a).abs(), 24.0, fill, &(attrs + r#" stroke="white""#), &format!("{}: {text}", g.label));
        if (b - a).abs() > 60.0 {
            s.text((a + b) / 2.0, track + 28.0 + lane * 50.0, "middle", 9.0, "", &g.label);
        }
    }
    let markers = [("base value", l.base_value, 60.0), ("f(x)", l.fx, 78.0)];
    for (name, v, ty) in markers {
        let px = x.at(v);
        s.line(px, ty + 4.0, px, track + 44.0, "#333", r#" stroke-dasharray="3,3""#);
        s.text(px, ty, "middle", 11.0, &(attr("data-key", name) + &attr("data-value", &num(v))), &format!("{name} {}", num(v)));
    }
    s.text(40.0, h - 16.0, "start", 10.0, &attr("data-terminus", &num(l.terminus)), &format!("red pushes toward the positive class, blue away; net width {}", num(l.terminus - l.base_value)));
    s.finish()
}

/// One row per feature in summary order; points at their SHAP value,
/// coloured by the feature value's position within its column.
pub fn beeswarm(rec: &SummaryRecord) -> String {
    let sm = &rec.summary;
    let row_h = 26.0;
    let top = 50.0;
    let w = 820.0;
    let h = top + sm.features.len().max(1) as f64 * row_h + 40.0;
    let (lo, hi) = finite_range(sm.phi.iter().flatten().copied());
    let x = Scale::padded(lo, hi, 0.05, 200.0, w - 30.0);
    let mut s = Svg::new(w, h, &format!("SHAP summary {} {}", rec.question, rec.model));
    let zero = x.at(0.0);
    s.line(zero, top, zero, top + sm.features.len() as f64 * row_h, "#999", "");
    for (c, name) in sm.features.iter().enumerate() {
        let cy = top + c as f64 * row_h + row_h / 2.0;
        s.text(192.0, cy + 4.0, "end", 11.0, &attr("data-mean-abs", &num(sm.mean_abs[c])), name);
        let col: Vec<f64> = sm.values.iter().map(|r| r[c]).collect();
        let (vlo, vhi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        for (i, row) in sm.phi.iter().enumerate() {
            let phi = row[c];
            let t = if vhi > vlo { (col[i] - vlo) / (vhi - vlo) } else { 0.5 };
            let jitter = ((i as f64 * 0.618_033_988_7).fract() - 0.5) * row_h * 0.6;
            let fill = format!("rgb({},{},{})", (30.0 + 202.0 * t) as u8, (136.0 - 80.0 * t) as u8, (229.0 - 150.0 * t) as u8);
            s.circle(x.at(phi), cy + jitter, 2.5, &fill, &attr("data-value", &num(phi)));
        }
    }
    s.text(w / 2.0, h - 12.0, "middle", 11.0, "", &format!("SHAP value ({:?}); colour low to high feature value", sm.units));
    s.finish()
}

pub fn histogram(dataset: &str, explainer: &str, hgram: &Histogram) -> String {
    let mut items: Vec<(&String, &usize)> = hgram.counts.iter().collect();
    items.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
    let series = vec!["instances".to_string()];
    let groups: Vec<(String, Vec<Option<f64>>)> = items.iter().map(|(k, &v)| ((*k).clone(), vec![Some(v as f64)])).collect();
    let title = format!("Top feature by {explainer}, {dataset} ({} instances)", hgram.n_instances);
    grouped_bars(&title, "count", &series, &groups)
}

pub fn anchor_text(rec: &ExplanationRecord, rule: &AnchorRule) -> String {
    let label = if rule.predicted_class == 1 { &rec.class_labels.1 } else { &rec.class_labels.0 };
    let mut lines: Vec<(String, String)> = Vec::new();
    if rule.predicates.is_empty() {
        lines.push(("IF".into(), crate::agreement::EMPTY_ANCHOR.into()));
    }
    for (i, p) in rule.predicates.iter().enumerate() {
        lines.push((if i == 0 { "IF".into() } else { "AND".into() }, p.text.clone()));
    }
    lines.push(("THEN PREDICT".into(), label.clone()));
    let h = 90.0 + lines.len() as f64 * 22.0 + 60.0;
    let mut s = Svg::new(760.0, h, &format!("Anchor {} {} instance {}", rec.question, rec.model, rec.instance));
    for (i, (k, v)) in lines.iter().enumerate() {
        let y = 60.0 + i as f64 * 22.0;
        s.text(40.0, y, "start", 13.0, r#" font-weight="bold""#, k);
        s.text(170.0, y, "start", 13.0, &attr("class", "condition"), v);
    }
    let y = 70.0 + lines.len() as f64 * 22.0;
    let stats = [
        ("precision", num(rule.precision_estimate)),
        ("precision lower bound", num(rule.precision_lower_bound)),
        ("coverage", num(rule.coverage_estimate)),
    ];
    for (i, (k, v)) in stats.iter().enumerate() {
        s.text(40.0, y + i as f64 * 18.0, "start", 11.0, &(attr("data-key", k) + &attr("data-value", v)), &format!("{k} {v}"));
    }
    if !rule.anchoring {
        s.text(40.0, y + 58.0, "start", 11.0, "", "no rule reached the precision target; best found shown");
    }
    s.finish()
}

fn explanation_chart(rec: &ExplanationRecord) -> Chart {
    let name = file_stem(&[&rec.method, &rec.question, &rec.model, &rec.instance.to_string()]);
    let svg = match &rec.explanation {
        Explanation::Additive(a) => additive_bars(rec, a),
        Explanation::Lime(e) => lime_bars(rec, e),
        Explanation::Anchor(r) => anchor_text(rec, r),
    };
    Chart { name, svg }
}

/// Charts for a set of records. Per-instance explanations are drawn for the
/// lowest instance of each (question, model, method).
pub fn render_records(records: &[Record]) -> Result<Vec<Chart>> {
    if records.is_empty() {
        return Err(Error::Report("no records to render".into()));
    }
    let mut charts = Vec::new();
    let metrics: Vec<&MetricRecord> = records.iter().filter_map(|r| if let Record::Metric(m) = r { Some(m) } else { None }).collect();
    if !metrics.is_empty() {
        for metric in ["accuracy", "precision", "recall"] {
            charts.push(Chart { name: format!("metrics_{metric}"), svg: metric_bars(&metrics, metric)? });
        }
    }
    let mut first: BTreeMap<(String, String, String), &ExplanationRecord> = BTreeMap::new();
    for r in records {
        match r {
            Record::Explanation(e) => {
                let key = (e.question.clone(), e.model.clone(), e.method.clone());
                let slot = first.entry(key).or_insert(e);
                if e.instance < slot.instance {
                    *slot = e;
                }
            }
            Record::Force(f) => charts.push(Chart {
                name: file_stem(&["force", &f.question, &f.model, &f.instance.to_string()]),
                svg: force_plot(f),
            }),
            Record::ShapSummary(sm) => charts.push(Chart {
                name: file_stem(&["beeswarm", &sm.question, &sm.model]),
                svg: beeswarm(sm),
            }),
            Record::Importance(im) => charts.push(Chart {
                name: file_stem(&["importance", &im.question, &im.model]),
                svg: importance_bars(im),
            }),
            Record::Dataset(_) | Record::Metric(_) | Record::Agreement(_) => {}
        }
    }
    charts.extend(first.values().map(|e| explanation_chart(e)));
    let reports: Vec<&AgreementReport> = records.iter().filter_map(|r| if let Record::Agreement(a) = r { Some(a) } else { None }).collect();
    if !reports.is_empty() {
        charts.push(Chart { name: "agreement_rank_exact".into(), svg: agreement_bars(&reports, MatchMode::RankExact) });
        charts.push(Chart { name: "agreement_set_overlap".into(), svg: agreement_bars(&reports, MatchMode::SetOverlap) });
        for r in &reports {
            for (explainer, hgram) in &r.histograms {
                charts.push(Chart {
                    name: file_stem(&["histogram", &r.dataset, explainer]),
                    svg: histogram(&r.dataset, explainer, hgram),
                });
            }
        }
    }
    Ok(charts)
}

/// Writes `<name>.svg` files into `dir`, serially, in chart order.
pub fn write_charts(dir: &Path, charts: &[Chart]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::with_capacity(charts.len());
    for c in charts {
        let p = dir.join(format!("{}.svg", c.name));
        std::fs::write(&p, &c.svg).map_err(|e| Error::io(&p, e))?;
        paths.push(p);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::Units;
    use crate::models::{Averaging, Confusion, Metrics};
    use crate::shap::{force_plot_data, ShapSummary};

    /// Every value of `data-<key>` attributes in document order.
    fn data_attr(svg: &str, key: &str) -> Vec<String> {
        let needle = format!("data-{key}=\"");
        let mut out = Vec::new();
        let mut rest = svg;
        while let Some(i) = rest.find(&needle) {
            rest = &rest[i + needle.len()..];
            let end = rest.find('"').unwrap();
            out.push(rest[..end].to_string());
            rest = &rest[end..];
        }
        out
    }

    fn metric(q: &str, model: &str, tp: usize) -> MetricRecord {
        let c = Confusion { tp, tn: 40, fp: 10, fn_: 50 - tp };
        MetricRecord { question: q.into(), model: model.into(), metrics: Metrics::from_confusion(c, Averaging::Weighted) }
    }

    #[test]
    fn single_metric_bar_label_matches_value() {
        let m = metric("DA", "gbt", 37);
        let svg = metric_bars(&[&m], "accuracy").unwrap();
        let values = data_attr(&svg, "value");
        assert_eq!(values, vec![num(m.metrics.accuracy)]);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains(&format!("\"accuracy\":{}", values[0])));
        assert!(svg.contains(&format!(">{}</text>", values[0])));
        assert!(metric_bars(&[&m], "f1").is_err());
    }

    #[test]
    fn grouped_metrics_cover_every_record() {
        let recs = [metric("DA", "logistic", 30), metric("DA", "gbt", 33), metric("MD", "logistic", 35)];
        let refs: Vec<&MetricRecord> = recs.iter().collect();
        let svg = metric_bars(&refs, "recall").unwrap();
        let expect: Vec<String> = recs.iter().map(|r| num(r.metrics.recall)).collect();
        assert_eq!(data_attr(&svg, "value"), expect);
        assert_eq!(data_attr(&svg, "group"), vec!["DA", "DA", "MD"]);
    }

    #[test]
    fn empty_records_are_an_error() {
        assert!(matches!(render_records(&[]), Err(Error::Report(_))));
    }

    #[test]
    fn all_zero_beeswarm_sits_on_the_zero_line() {
        let sm = ShapSummary {
            features: vec!["a".into(), "b".into()],
            order: vec![0, 1],
            mean_abs: vec![0.0, 0.0],
            mean: vec![0.0, 0.0],
            phi: vec![vec![0.0, 0.0]; 5],
            values: (0..5).map(|i| vec![i as f64, 1.0]).collect(),
            base_values: vec![0.5; 5],
            fx: vec![0.5; 5],
            units: Units::Probability,
        };
        let svg = beeswarm(&SummaryRecord { question: "DA".into(), model: "gbt".into(), summary: sm });
        let zero_line = svg.lines().find(|l| l.starts_with("<line")).unwrap();
        let x = zero_line.split("x1=\"").nth(1).unwrap().split('"').next().unwrap().to_string();
        let cxs: Vec<&str> = svg.lines().filter(|l| l.starts_with("<circle")).map(|l| l.split("cx=\"").nth(1).unwrap().split('"').next().unwrap()).collect();
        assert_eq!(cxs.len(), 10);
        assert!(cxs.iter().all(|c| *c == x));
        assert!(data_attr(&svg, "value").iter().all(|v| v == "0.0"));
    }

    #[test]
    fn force_plot_carries_layout_numbers() {
        let a = Attribution {
            features: vec!["Age".into(), "Grade".into(), "Sex".into()],
            base_value: 0.4,
            contributions: vec![0.25, -0.1, 0.05],
            fx: 0.6,
            explained_class: "Dead".into(),
            units: Units::Probability,
        };
        let layout = force_plot_data(&a, &["Age = 80".into(), "Grade = G3".into(), "Sex = M".into()]);
        let rec = ForceRecord { question: "DA".into(), model: "gbt".into(), instance: 0, row_id: 3, layout: layout.clone() };
        let svg = force_plot(&rec);
        let starts = data_attr(&svg, "start");
        let expect: Vec<String> = layout.positive.iter().chain(&layout.negative).map(|g| num(g.start)).collect();
        assert_eq!(starts, expect);
        assert_eq!(data_attr(&svg, "terminus"), vec![num(layout.terminus)]);
    }

    #[test]
    fn xml_text_is_escaped() {
        let rec = ImportanceRecord { question: "DA".into(), model: "ebm".into(), importance: vec![("a<b & \"c\"".into(), 1.5)] };
        let svg = importance_bars(&rec);
        assert!(svg.contains("a&lt;b &amp; &quot;c&quot;"));
        assert!(!svg.contains("a<b"));
    }
}
