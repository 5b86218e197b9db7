//! End-to-end orchestration: generate or load, clean, build the question
//! datasets, balance, split, train, evaluate, explain, compare and render.
//! Every artifact lands in one output directory next to a run manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agreement::{agreement_report, ExplainerKind, RankedFeatures};
use crate::anchors::AnchorRule;
use crate::attribution::Attribution;
use crate::charts::{render_records, write_charts};
use crate::dataset::synth::{Generator, GeneratorConfig};
use crate::dataset::{
    balance, clean, load_csv, make_question_dataset, split, CleanReport, CleaningRules, CohortFilter, Dataset, QuestionId,
    QuestionSpec, RawTable,
};
use crate::ebm::{ebm_global_importance, EbmModel};
use crate::error::{Error, Result};
use crate::explain::{ExplainContext, Explainer, ExplainerRegistry, Explanation};
use crate::lime::TrainingStats;
use crate::models::{evaluate, read_bundle, write_bundle, ModelRegistry, TrainedModel};
use crate::report::{
    write_report, DatasetRecord, ExplanationRecord, ForceRecord, ImportanceRecord, MetricRecord, Record, SummaryRecord,
    TOOL_VERSION,
};
use crate::rng::derive_seed;
use crate::shap::{background_indices, force_plot_data, summarize};

pub const MANIFEST_FORMAT: &str = "attriblab-manifest";
pub const SEED_ENV: &str = "ATTRIBLAB_SEED";
pub const FAILURE_MARKER: &str = "FAILED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Rows to generate when no CSV is given.
    pub rows: usize,
    /// Generator TOML; the bundled appendix generator when absent. Its
    /// schema is also used to read `csv`.
    pub generator: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { rows: 220_000, generator: None, csv: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuestionsConfig {
    pub ids: Vec<QuestionId>,
    pub lung: CohortFilter,
    /// Per-class row cap after balancing.
    pub balance_cap: Option<usize>,
    pub test_fraction: f64,
}

impl Default for QuestionsConfig {
    fn default() -> Self {
        QuestionsConfig {
            ids: QuestionId::ALL.to_vec(),
            lung: CohortFilter::lung(),
            balance_cap: Some(24_000),
            test_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    pub families: Vec<String>,
    pub threshold: f64,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        ModelsConfig { families: vec!["logistic".into(), "gbt".into(), "ebm".into()], threshold: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainStageConfig {
    /// Family explained by every method except `ebm`, which always explains
    /// the trained EBM.
    pub model: String,
    /// First n rows of the recorded test order.
    pub instances: usize,
    pub methods: Vec<String>,
    /// Instances counted by the top-feature histograms; capped at `instances`.
    pub histogram_n: usize,
}

impl Default for ExplainStageConfig {
    fn default() -> Self {
        ExplainStageConfig {
            model: "gbt".into(),
            instances: 100,
            methods: vec!["shap".into(), "lime".into(), "anchors".into(), "ebm".into()],
            histogram_n: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads; all available cores when absent. Outputs do not
    /// depend on it.
    pub threads: Option<usize>,
    pub data: DataConfig,
    /// Defaults to schema ranges plus the generator's implications.
    pub cleaning: Option<CleaningRules>,
    pub questions: QuestionsConfig,
    pub models: ModelsConfig,
    /// Hyperparameters per model family.
    pub hyper: BTreeMap<String, serde_json::Value>,
    pub explain: ExplainStageConfig,
    /// Settings per explainer name.
    pub explainers: BTreeMap<String, serde_json::Value>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            threads: None,
            data: DataConfig::default(),
            cleaning: None,
            questions: QuestionsConfig::default(),
            models: ModelsConfig::default(),
            hyper: BTreeMap::new(),
            explain: ExplainStageConfig::default(),
            explainers: BTreeMap::new(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a TOML config, or the config echoed in a run manifest (`.json`).
    /// Relative data paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = if path.extension().is_some_and(|e| e == "json") {
            let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            if m.format != MANIFEST_FORMAT {
                return Err(Error::Config(format!("{}: not a run manifest", path.display())));
            }
            m.config
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data.generator, &mut cfg.data.csv].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Applies `ATTRIBLAB_SEED` when set; returns where the seed came from.
    pub fn apply_seed_env(&mut self) -> Result<String> {
        match std::env::var(SEED_ENV) {
            Ok(v) => {
                self.seed = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer")))?;
                Ok(SEED_ENV.to_string())
            }
            Err(_) => Ok("config".to_string()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.csv.is_none() && self.data.rows == 0 {
            return Err(Error::Config("data.rows must be positive".into()));
        }
        if self.questions.ids.is_empty() {
            return Err(Error::Config("questions.ids is empty".into()));
        }
        if self.models.families.is_empty() {
            return Err(Error::Config("models.families is empty".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        let registry = ModelRegistry::builtin();
        for f in self.models.families.iter().chain(self.hyper.keys()) {
            registry.get(f)?;
        }
        let explainers = ExplainerRegistry::builtin();
        for m in self.explain.methods.iter().chain(self.explainers.keys()) {
            explainers.create(m, &serde_json::Value::Null)?;
        }
        if !self.explain.methods.is_empty() && !self.models.families.contains(&self.explain.model) {
            return Err(Error::Config(format!("explain.model `{}` is not among the trained families", self.explain.model)));
        }
        if self.explain.methods.iter().any(|m| m == "ebm") && !self.models.families.iter().any(|f| f == "ebm") {
            return Err(Error::Config("the ebm explainer needs the ebm family to be trained".into()));
        }
        Ok(())
    }

    /// Every seed the run uses, by operation.
    pub fn seeds(&self) -> BTreeMap<String, u64> {
        let mut s = BTreeMap::new();
        s.insert("generate".to_string(), self.seed);
        s.insert("balance".to_string(), derive_seed(self.seed, 1));
        s.insert("split".to_string(), derive_seed(self.seed, 2));
        s.insert("background".to_string(), derive_seed(self.seed, 3));
        for (i, f) in self.models.families.iter().enumerate() {
            let own = self.hyper.get(f).and_then(|h| h.get("seed")).and_then(serde_json::Value::as_u64);
            s.insert(format!("model.{f}"), own.unwrap_or_else(|| derive_seed(self.seed, 100 + i as u64)));
        }
        for (i, m) in self.explain.methods.iter().enumerate() {
            if m == "ebm" || m == "shap-exact" {
                continue;
            }
            let own = self.explainers.get(m).and_then(|h| h.get("seed")).and_then(serde_json::Value::as_u64);
            s.insert(format!("explainer.{m}"), own.unwrap_or_else(|| derive_seed(self.seed, 200 + i as u64)));
        }
        s
    }
}

/// `settings` with `seed` filled in, when a seed applies.
fn seeded(settings: Option<&serde_json::Value>, seed: Option<u64>) -> Result<serde_json::Value> {
    let mut v = settings.cloned().unwrap_or(serde_json::Value::Null);
    if v.is_null() {
        v = serde_json::json!({});
    }
    let obj = v.as_object_mut().ok_or_else(|| Error::Config("settings must be a table".into()))?;
    if let Some(seed) = seed {
        obj.entry("seed").or_insert(seed.into());
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub question: String,
    pub family: String,
    /// Relative to the output directory.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub tool_version: String,
    /// `ok`, or `failed: <reason>`.
    pub status: String,
    pub seed: u64,
    pub seed_source: String,
    pub seeds: BTreeMap<String, u64>,
    pub config: PipelineConfig,
    /// Effective settings per explainer, defaults filled in.
    pub explainer_configs: BTreeMap<String, serde_json::Value>,
    pub clean: Option<CleanReport>,
    pub datasets: Vec<DatasetRecord>,
    pub models: Vec<ModelEntry>,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
    /// Seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

impl Manifest {
    fn new(cfg: &PipelineConfig, seed_source: &str) -> Self {
        Manifest {
            format: MANIFEST_FORMAT.into(),
            tool_version: TOOL_VERSION.into(),
            status: "running".into(),
            seed: cfg.seed,
            seed_source: seed_source.into(),
            seeds: cfg.seeds(),
            config: cfg.clone(),
            explainer_configs: BTreeMap::new(),
            clean: None,
            datasets: Vec::new(),
            models: Vec::new(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
        }
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f(self);
        self.timings.insert(stage.to_string(), t.elapsed().as_secs_f64());
        out
    }
}

/// Fails when any id in `probe` is among `test`.
pub fn guard_disjoint(test: &[usize], probe: &[usize], what: &str) -> Result<()> {
    let test: BTreeSet<usize> = test.iter().copied().collect();
    if let Some(id) = probe.iter().find(|id| test.contains(id)) {
        return Err(Error::Guard(format!("test partition leak: row {id} used for {what}")));
    }
    Ok(())
}

pub fn generator_config(cfg: &DataConfig) -> Result<GeneratorConfig> {
    match &cfg.generator {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
        None => Ok(GeneratorConfig::appendix()),
    }
}

/// Raw table from CSV or the generator, before cleaning.
pub fn load_raw(cfg: &DataConfig, seed: u64) -> Result<(RawTable, GeneratorConfig)> {
    let gen = generator_config(cfg)?;
    let generator = Generator::new(gen.clone())?;
    let raw = match &cfg.csv {
        Some(p) => load_csv(p, generator.schema())?,
        None => generator.generate(cfg.rows, seed),
    };
    Ok((raw, gen))
}

pub fn cleaning_rules(cfg: &PipelineConfig, gen: &GeneratorConfig) -> CleaningRules {
    cfg.cleaning
        .clone()
        .unwrap_or_else(|| CleaningRules { implications: gen.implications.clone(), ..CleaningRules::default() })
}

pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub record: DatasetRecord,
}

/// Cohort, balance and split for one question; the test side keeps its
/// recorded shuffled order.
pub fn prepare_question(table: &RawTable, id: QuestionId, q: &QuestionsConfig, balance_seed: u64, split_seed: u64) -> Result<Prepared> {
    let spec = QuestionSpec::standard(id, &q.lung);
    let cohort = make_question_dataset(table, &spec)?;
    let balanced = balance(&cohort, q.balance_cap, balance_seed)?;
    let (train, test) = split(&balanced, q.test_fraction, split_seed)?;
    guard_disjoint(&test.row_ids, &train.row_ids, "training")?;
    let record = DatasetRecord {
        question: id.as_str().to_string(),
        class_labels: cohort.class_labels.clone(),
        cohort_rows: cohort.len(),
        cohort_counts: cohort.class_counts(),
        balanced_counts: balanced.class_counts(),
        train_rows: train.len(),
        test_rows: test.len(),
        schema_hash: train.schema.hash(),
        train_fingerprint: train.fingerprint(),
        test_fingerprint: test.fingerprint(),
    };
    Ok(Prepared { train, test, record })
}

/// Prepared datasets are stored as JSON so row ids and test order survive.
pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, serde_json::to_string(data)?).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let d: Dataset = serde_json::from_str(&text).map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
    d.validate()?;
    Ok(d)
}

/// Display labels `Name = value` for a row, in schema order.
pub fn row_labels(data: &Dataset, row: &[f64]) -> Vec<String> {
    data.schema
        .iter()
        .zip(row)
        .map(|(f, &v)| format!("{} = {}", f.display_name, f.format_value(v)))
        .collect()
}

fn explainer_kind(method: &str) -> Option<ExplainerKind> {
    match method {
        "shap" | "shap-exact" => Some(ExplainerKind::Shap),
        "lime" => Some(ExplainerKind::Lime),
        "ebm" => Some(ExplainerKind::Ebm),
        _ => None,
    }
}

/// Explains `rows` with one explainer in parallel; order and values do not
/// depend on the thread count.
pub fn explain_rows(
    explainer: &dyn Explainer,
    model: &dyn TrainedModel,
    rows: &[Vec<f64>],
    ctx: &ExplainContext,
) -> Result<Vec<Explanation>> {
    rows.par_iter().enumerate().map(|(i, r)| explainer.explain(model, r, i, ctx)).collect()
}

struct QuestionOutput {
    records: Vec<Record>,
    explanations: Vec<Record>,
    summaries: Vec<Record>,
    agreement: Option<Record>,
}

fn run_question(
    cfg: &PipelineConfig,
    table: &RawTable,
    id: QuestionId,
    out: &Path,
    m: &mut Manifest,
) -> Result<QuestionOutput> {
    let q = id.as_str();
    let seeds = m.seeds.clone();
    let p = m.timed(&format!("{q}.prepare"), |_| {
        prepare_question(table, id, &cfg.questions, seeds["balance"], seeds["split"])
    })?;
    m.datasets.push(p.record.clone());
    let (train, test) = (&p.train, &p.test);

    let registry = ModelRegistry::builtin();
    let mut trained: BTreeMap<String, Box<dyn TrainedModel>> = BTreeMap::new();
    let mut metrics = Vec::new();
    for family in &cfg.models.families {
        let hyper = seeded(cfg.hyper.get(family), Some(seeds[&format!("model.{family}")]))?;
        let model = m.timed(&format!("{q}.train.{family}"), |_| registry.train(family, train, &hyper))?;
        let rel = format!("models/{q}_{family}.json");
        write_bundle(model.as_ref(), &out.join(&rel))?;
        m.models.push(ModelEntry { question: q.into(), family: family.clone(), path: rel });
        let met = evaluate(model.as_ref(), test, cfg.models.threshold);
        metrics.push(Record::Metric(MetricRecord { question: q.into(), model: family.clone(), metrics: met }));
        trained.insert(family.clone(), model);
    }

    let mut explanations = Vec::new();
    let mut summaries = Vec::new();
    let mut agreement = None;
    let n = cfg.explain.instances.min(test.len());
    if n > 0 && !cfg.explain.methods.is_empty() {
        let stats = TrainingStats::fit(train)?;
        let explainers = ExplainerRegistry::builtin();
        let built: Vec<Box<dyn Explainer>> = cfg
            .explain
            .methods
            .iter()
            .map(|name| {
                let seed = seeds.get(&format!("explainer.{name}")).copied();
                let settings = if name == "ebm" { seeded(cfg.explainers.get(name), None)? } else { seeded(cfg.explainers.get(name), seed)? };
                explainers.create(name, &settings)
            })
            .collect::<Result<_>>()?;
        for e in &built {
            m.explainer_configs.insert(e.name().to_string(), e.config());
        }
        let bg_size = built
            .iter()
            .filter_map(|e| e.config().get("background_size").and_then(serde_json::Value::as_u64))
            .max()
            .unwrap_or(100) as usize;
        let bg_idx = background_indices(train.len(), bg_size, seeds["background"]);
        let bg_ids: Vec<usize> = bg_idx.iter().map(|&i| train.row_ids[i]).collect();
        guard_disjoint(&test.row_ids, &bg_ids, "explainer background")?;
        let background: Vec<Vec<f64>> = bg_idx.iter().map(|&i| train.rows[i].clone()).collect();
        let ctx = ExplainContext { schema: &train.schema, background: &background, stats: &stats };
        let rows = &test.rows[..n];

        let mut ranked: BTreeMap<String, Vec<RankedFeatures>> = BTreeMap::new();
        let mut rules: Option<Vec<AnchorRule>> = None;
        for (name, explainer) in cfg.explain.methods.iter().zip(&built) {
            let family = if name == "ebm" { "ebm" } else { cfg.explain.model.as_str() };
            let model = trained[family].as_ref();
            let results = m.timed(&format!("{q}.explain.{name}"), |_| explain_rows(explainer.as_ref(), model, rows, &ctx))?;
            if let Some(kind) = explainer_kind(name) {
                let r = results.iter().enumerate().map(|(i, e)| e.ranked(i, kind)).collect::<Result<Vec<_>>>()?;
                ranked.insert(name.clone(), r.into_iter().flatten().collect());
            }
            if name == "anchors" {
                rules = Some(results.iter().filter_map(|e| if let Explanation::Anchor(r) = e { Some(r.clone()) } else { None }).collect());
            }
            if name == "shap" {
                let attrs: Vec<Attribution> = results.iter().filter_map(|e| if let Explanation::Additive(a) = e { Some(a.clone()) } else { None }).collect();
                let layout = force_plot_data(&attrs[0], &row_labels(test, &rows[0]));
                summaries.push(Record::Force(ForceRecord { question: q.into(), model: family.into(), instance: 0, row_id: test.row_ids[0], layout }));
                let summary = summarize(&attrs, rows, &train.schema.names(), attrs[0].units)?;
                summaries.push(Record::ShapSummary(SummaryRecord { question: q.into(), model: family.into(), summary }));
            }
            for (i, e) in results.into_iter().enumerate() {
                explanations.push(Record::Explanation(ExplanationRecord {
                    question: q.into(),
                    model: family.into(),
                    method: name.clone(),
                    instance: i,
                    row_id: test.row_ids[i],
                    class_labels: train.class_labels.clone(),
                    explanation: e,
                }));
            }
        }
        if let (Some(shap), Some(lime)) = (ranked.get("shap"), ranked.get("lime")) {
            let report = m.timed(&format!("{q}.agreement"), |_| {
                agreement_report(q, shap, lime, rules.as_deref(), cfg.explain.histogram_n.min(n))
            })?;
            agreement = Some(Record::Agreement(report));
        }
    }
    if let Some(ebm) = trained.get("ebm").and_then(|m| m.as_any().downcast_ref::<EbmModel>()) {
        summaries.push(Record::Importance(ImportanceRecord {
            question: q.into(),
            model: "ebm".into(),
            importance: ebm_global_importance(ebm, train),
        }));
    }
    Ok(QuestionOutput { records: metrics, explanations, summaries, agreement })
}

fn metrics_table(records: &[Record]) -> String {
    let mut s = String::from("| Question | Model | Precision | Recall | Accuracy |\n|---|---|---|---|---|\n");
    for r in records {
        if let Record::Metric(m) = r {
            s.push_str(&format!(
                "| {} | {} | {:.4} | {:.4} | {:.4} |\n",
                m.question, m.model, m.metrics.precision, m.metrics.recall, m.metrics.accuracy
            ));
        }
    }
    s
}

fn stages(cfg: &PipelineConfig, out: &Path, m: &mut Manifest) -> Result<()> {
    let (raw, gen) = m.timed("load", |m| load_raw(&cfg.data, m.seeds["generate"]))?;
    let rules = cleaning_rules(cfg, &gen);
    let (table, report) = m.timed("clean", |_| clean(&raw, &rules))?;
    drop(raw);
    m.clean = Some(report);

    let mut metrics = Vec::new();
    let mut summaries = Vec::new();
    let mut agreements = Vec::new();
    let mut chart_inputs = Vec::new();
    for &id in &cfg.questions.ids {
        let o = run_question(cfg, &table, id, out, m)?;
        metrics.extend(o.records);
        summaries.extend(o.summaries);
        agreements.extend(o.agreement);
        if !o.explanations.is_empty() {
            let rel = format!("explanations/{}.jsonl", id.as_str());
            write_report(&out.join(&rel), "explanations", &o.explanations)?;
            m.outputs.push(rel);
            chart_inputs.extend(o.explanations);
        }
    }
    let datasets: Vec<Record> = m.datasets.iter().cloned().map(Record::Dataset).collect();
    for (rel, kind, recs) in [
        ("datasets.jsonl", "datasets", &datasets),
        ("metrics.jsonl", "metrics", &metrics),
        ("summaries.jsonl", "summaries", &summaries),
        ("agreement.jsonl", "agreement", &agreements),
    ] {
        if !recs.is_empty() {
            write_report(&out.join(rel), kind, recs)?;
            m.outputs.push(rel.to_string());
        }
    }
    std::fs::write(out.join("metrics.md"), metrics_table(&metrics)).map_err(|e| Error::io(out.join("metrics.md"), e))?;
    m.outputs.push("metrics.md".into());

    chart_inputs.extend(metrics);
    chart_inputs.extend(summaries);
    chart_inputs.extend(agreements);
    let paths = m.timed("render", |_| {
        let charts = render_records(&chart_inputs)?;
        write_charts(&out.join("charts"), &charts)
    })?;
    for p in paths {
        m.outputs.push(p.strip_prefix(out).unwrap_or(&p).display().to_string());
    }
    m.outputs.sort();
    Ok(())
}

fn write_manifest(out: &Path, m: &Manifest) -> Result<()> {
    let p = out.join("manifest.json");
    std::fs::write(&p, serde_json::to_string_pretty(m)? + "\n").map_err(|e| Error::io(&p, e))
}

/// Runs every stage into `out`. On failure the partial artifacts stay, a
/// `FAILED` marker holds the error, and the manifest records the status.
pub fn run_pipeline(cfg: &PipelineConfig, out: &Path, seed_source: &str) -> Result<Manifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let marker = out.join(FAILURE_MARKER);
    if marker.exists() {
        std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    }
    let mut m = Manifest::new(cfg, seed_source);
    let t = Instant::now();
    let result = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))
            .and_then(|pool| pool.install(|| stages(cfg, out, &mut m))),
        None => stages(cfg, out, &mut m),
    };
    m.timings.insert("total".into(), t.elapsed().as_secs_f64());
    match result {
        Ok(()) => {
            m.status = "ok".into();
            write_manifest(out, &m)?;
            Ok(m)
        }
        Err(e) => {
            m.status = format!("failed: {e}");
            let _ = write_manifest(out, &m);
            let _ = std::fs::write(&marker, format!("{e}\n"));
            Err(e)
        }
    }
}

/// Explains one test instance with a saved model. Writes
/// `<method>_<instance>.jsonl` and the matching chart into `out`; returns
/// (report path, chart path).
#[allow(clippy::too_many_arguments)]
pub fn explain_one(
    bundle: &Path,
    train: &Dataset,
    test: &Dataset,
    instance: usize,
    method: &str,
    settings: &serde_json::Value,
    out: &Path,
) -> Result<(PathBuf, PathBuf)> {
    let explainer = ExplainerRegistry::builtin().create(method, settings)?;
    let model = read_bundle(bundle, &ModelRegistry::builtin())?;
    if model.schema().hash() != test.schema.hash() || train.schema.hash() != test.schema.hash() {
        return Err(Error::Dataset("model, training and test schemas differ".into()));
    }
    if instance >= test.len() {
        return Err(Error::OutOfRange { index: instance, len: test.len() });
    }
    guard_disjoint(&test.row_ids, &train.row_ids, "explainer statistics")?;
    let stats = TrainingStats::fit(train)?;
    let bg_size = explainer.config().get("background_size").and_then(serde_json::Value::as_u64).unwrap_or(100) as usize;
    let seed = explainer.config().get("seed").and_then(serde_json::Value::as_u64).unwrap_or(0);
    let background: Vec<Vec<f64>> = background_indices(train.len(), bg_size, seed).into_iter().map(|i| train.rows[i].clone()).collect();
    let ctx = ExplainContext { schema: &train.schema, background: &background, stats: &stats };
    let row = &test.rows[instance];
    let e = explainer.explain(model.as_ref(), row, instance, &ctx)?;
    let q = test.question.id.as_str().to_string();
    let family = model.family().to_string();
    let mut records = Vec::new();
    if let (Explanation::Additive(a), "shap" | "shap-exact") = (&e, method) {
        let layout = force_plot_data(a, &row_labels(test, row));
        records.push(Record::Force(ForceRecord { question: q.clone(), model: family.clone(), instance, row_id: test.row_ids[instance], layout }));
    }
    records.push(Record::Explanation(ExplanationRecord {
        question: q,
        model: family,
        method: method.into(),
        instance,
        row_id: test.row_ids[instance],
        class_labels: test.class_labels.clone(),
        explanation: e,
    }));
    let report = out.join(format!("{method}_{instance}.jsonl"));
    write_report(&report, "explanations", &records)?;
    let chart = render_records(&records[..1])?.remove(0);
    let paths = write_charts(out, &[chart])?;
    Ok((report, paths[0].clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guard_catches_overlap() {
        assert!(guard_disjoint(&[1, 5, 9], &[2, 3, 4], "training").is_ok());
        let e = guard_disjoint(&[1, 5, 9], &[2, 9], "explainer background").unwrap_err();
        assert!(e.to_string().contains("row 9"));
    }

    #[test]
    fn seeds_are_listed_and_explicit_seeds_win() {
        let mut cfg = PipelineConfig::default();
        cfg.hyper.insert("gbt".into(), serde_json::json!({"seed": 77}));
        let s = cfg.seeds();
        assert_eq!(s["model.gbt"], 77);
        for key in ["generate", "balance", "split", "background", "model.logistic", "model.ebm", "explainer.shap", "explainer.lime", "explainer.anchors"] {
            assert!(s.contains_key(key), "{key}");
        }
        assert!(!s.contains_key("explainer.ebm"));
    }

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let bad = PipelineConfig::from_toml("[explain]\nmodel = \"svm\"\n").unwrap();
        assert!(bad.validate().is_err());
        let bad = PipelineConfig::from_toml("[explain]\nmethods = [\"deeplift\"]\n").unwrap();
        assert!(matches!(bad.validate(), Err(Error::UnknownStrategy { .. })));
        let bad = PipelineConfig::from_toml("[models]\nfamilies = [\"gbt\"]\n").unwrap();
        assert!(bad.validate().is_err());
        assert!(PipelineConfig::from_toml("[data]\nrowz = 3\n").is_err());
    }

    #[test]
    fn seeded_respects_existing_seed() {
        let v = seeded(Some(&serde_json::json!({"seed": 3, "top_k": 4})), Some(9)).unwrap();
        assert_eq!(v["seed"], 3);
        assert_eq!(seeded(None, Some(9)).unwrap()["seed"], 9);
        assert_eq!(seeded(None, None).unwrap(), serde_json::json!({}));
    }
}
