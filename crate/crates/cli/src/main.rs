use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use attriblab::agreement::{agreement_report, ExplainerKind};
use attriblab::anchors::AnchorRule;
use attriblab::charts::{render_records, write_charts};
use attriblab::dataset::{clean, write_csv, QuestionId};
use attriblab::explain::Explanation;
use attriblab::models::{evaluate, read_bundle, write_bundle, ModelRegistry};
use attriblab::pipeline::{
    cleaning_rules, explain_one, load_raw, prepare_question, read_dataset, run_pipeline, write_dataset, DataConfig, QuestionsConfig,
    PipelineConfig, SEED_ENV,
};
use attriblab::report::{read_report, write_report, MetricRecord, Record};
use attriblab::Error;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "attriblab", version, about = "Explainability toolkit for tabular binary classification")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw a synthetic raw table and write it as CSV.
    Generate(GenerateArgs),
    /// Clean a CSV and build one question's train and test sets.
    Prepare(PrepareArgs),
    /// Train one model family and save its bundle.
    Train(TrainArgs),
    /// Score a bundle on a prepared dataset.
    Evaluate(EvaluateArgs),
    /// Explain one test instance and draw its chart.
    Explain(ExplainArgs),
    /// Agreement analysis over explanation records.
    Compare(CompareArgs),
    /// The whole pipeline from a config file.
    Run(RunArgs),
    /// Draw charts from report files.
    Render(RenderArgs),
}

// Every subcommand except `run` reads an optional `[<subcommand>]` table
// from `--config` holding the same options as its flags.

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct GenerateArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Generator TOML; the bundled generator when absent.
    #[arg(long)]
    generator: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct PrepareArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    /// Generator TOML supplying the schema.
    #[arg(long)]
    generator: Option<PathBuf>,
    /// DA, LC-DA, MD or LC-MD.
    #[arg(long)]
    question: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    balance_cap: Option<usize>,
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct TrainArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    family: Option<String>,
    /// Hyperparameters as a JSON object.
    #[arg(long)]
    hyper: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct EvaluateArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Metrics report; printed only when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ExplainArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Position in the recorded test order.
    #[arg(long)]
    instance: Option<usize>,
    /// shap, shap-exact, lime, anchors or ebm.
    #[arg(long)]
    method: Option<String>,
    /// Explainer settings as a JSON object.
    #[arg(long)]
    settings: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CompareArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Explanation report holding shap and lime records.
    #[arg(long)]
    explanations: Option<PathBuf>,
    #[arg(long)]
    histogram_n: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RenderArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long, num_args = 1..)]
    report: Option<Vec<PathBuf>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline TOML, or a manifest.json from an earlier run.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "attriblab-out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    instances: Option<usize>,
}

enum Failure {
    Usage(String),
    Stage(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Toml(_) | Error::UnknownStrategy { .. } => Failure::Usage(e.to_string()),
            e => Failure::Stage(e),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn read_config_file(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Failure::Usage(format!("config file not found: {}", path.display())),
        _ => Failure::Usage(format!("cannot read config {}: {e}", path.display())),
    })
}

/// Fills unset flags from the config's `[section]`; a flag and a config
/// value that disagree is an error.
fn merge<T: Serialize + DeserializeOwned>(args: &T, config: Option<&Path>, section: &str) -> CliResult<T> {
    let mut merged = serde_json::to_value(args).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(path) = config {
        let doc: toml::Value =
            toml::from_str(&read_config_file(path)?).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        if let Some(table) = doc.get(section) {
            let table = serde_json::to_value(table).map_err(|e| Failure::Usage(e.to_string()))?;
            let table = table
                .as_object()
                .ok_or_else(|| Failure::Usage(format!("{}: [{section}] must be a table", path.display())))?;
            let out = merged.as_object_mut().expect("flags serialize to an object");
            for (key, value) in table {
                let flag = key.replace('_', "-");
                match out.get(key) {
                    None => return Err(Failure::Usage(format!("{}: unknown option `{key}` in [{section}]", path.display()))),
                    Some(v) if v.is_null() => {
                        out.insert(key.clone(), value.clone());
                    }
                    Some(v) if same(v, value) => {}
                    Some(v) => {
                        return Err(Failure::Usage(format!(
                            "--{flag} {} conflicts with {section}.{key} = {value} in {}",
                            v,
                            path.display()
                        )))
                    }
                }
            }
        }
    }
    serde_json::from_value(merged).map_err(|e| Failure::Usage(format!("[{section}]: {e}")))
}

fn same(a: &serde_json::Value, b: &serde_json::Value) -> bool {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => x == y,
        _ => a == b,
    }
}

fn need<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| Failure::Usage(format!("missing required option --{flag}")))
}

fn json_arg(text: Option<&str>, flag: &str) -> CliResult<serde_json::Value> {
    match text {
        None => Ok(serde_json::Value::Null),
        Some(t) => serde_json::from_str(t).map_err(|e| Failure::Usage(format!("--{flag}: {e}"))),
    }
}

fn generate(a: GenerateArgs) -> CliResult<()> {
    let a = merge(&a, a.config.as_deref(), "generate")?;
    let out = need(a.out, "out")?;
    let data = DataConfig { rows: a.rows.unwrap_or(DataConfig::default().rows), generator: a.generator, csv: None };
    let (raw, _) = load_raw(&data, a.seed.unwrap_or(0))?;
    write_csv(&raw, &out)?;
    println!("wrote {} rows to {}", raw.len(), out.display());
    Ok(())
}

fn prepare(a: PrepareArgs) -> CliResult<()> {
    let a = merge(&a, a.config.as_deref(), "prepare")?;
    let input = need(a.input, "input")?;
    let out = need(a.out, "out")?;
    let qname = need(a.question, "question")?;
    let id = QuestionId::parse(&qname).ok_or_else(|| Failure::Usage(format!("unknown question `{qname}`")))?;
    let cfg = PipelineConfig {
        seed: a.seed.unwrap_or(0),
        data: DataConfig { rows: 0, generator: a.generator, csv: Some(input) },
        ..PipelineConfig::default()
    };
    let (raw, gen) = load_raw(&cfg.data, 0)?;
    let (table, report) = clean(&raw, &cleaning_rules(&cfg, &gen))?;
    let defaults = QuestionsConfig::default();
    let q = QuestionsConfig {
        balance_cap: a.balance_cap.or(defaults.balance_cap),
        test_fraction: a.test_fraction.unwrap_or(defaults.test_fraction),
        ..defaults
    };
    let seeds = cfg.seeds();
    let p = prepare_question(&table, id, &q, seeds["balance"], seeds["split"])?;
    let stem = id.as_str();
    write_dataset(&out.join(format!("{stem}_train.json")), &p.train)?;
    write_dataset(&out.join(format!("{stem}_test.json")), &p.test)?;
    write_report(&out.join(format!("{stem}_dataset.jsonl")), "datasets", &[Record::Dataset(p.record.clone())])?;
    println!(
        "{stem}: kept {} of {} rows after cleaning; {} train / {} test",
        report.kept_rows, report.input_rows, p.record.train_rows, p.record.test_rows
    );
    Ok(())
}

fn train(a: TrainArgs) -> CliResult<()> {
    let a = merge(&a, a.config.as_deref(), "train")?;
    let data = read_dataset(&need(a.data, "data")?)?;
    let family = need(a.family, "family")?;
    let out = need(a.out, "out")?;
    let hyper = json_arg(a.hyper.as_deref(), "hyper")?;
    let model = ModelRegistry::builtin().train(&family, &data, &hyper)?;
    write_bundle(model.as_ref(), &out)?;
    println!("trained {family} on {} rows -> {}", data.len(), out.display());
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> CliResult<()> {
    let a = merge(&a, a.config.as_deref(), "evaluate")?;
    let model = read_bundle(&need(a.model, "model")?, &ModelRegistry::builtin())?;
    let data = read_dataset(&need(a.data, "data")?)?;
    if model.schema().hash() != data.schema.hash() {
        return Err(Failure::Stage(Error::Dataset("model and data schemas differ".into())));
    }
    let metrics = evaluate(model.as_ref(), &data, a.threshold.unwrap_or(0.5));
    let rec = MetricRecord { question: data.question.id.as_str().into(), model: model.family().into(), metrics };
    println!(
        "{} {}: precision {:.4} recall {:.4} accuracy {:.4}",
        rec.question, rec.model, rec.metrics.precision, rec.metrics.recall, rec.metrics.accuracy
    );
    if let Some(out) = a.out {
        write_report(&out, "metrics", &[Record::Metric(rec)])?;
    }
    Ok(())
}

fn explain(a: ExplainArgs) -> CliResult<()> {
    let a = merge(&a, a.config.as_deref(), "explain")?;
    let train = read_dataset(&need(a.train, "train")?)?;
    let test = read_dataset(&need(a.test, "test")?)?;
    let settings = json_arg(a.settings.as_deref(), "settings")?;
    let (report, chart) = explain_one(
        &need(a.model, "model")?,
        &train,
        &test,
        need(a.instance, "instance")?,
        &need(a.method, "method")?,
        &settings,
        &need(a.out, "out")?,
    )?;
    println!("{}\n{}", report.display(), chart.display());
    Ok(())
}

fn compare(a: CompareArgs) -> CliResult<()> {
    let a = merge(&a, a.config.as_deref(), "compare")?;
    let (_, records) = read_report(&need(a.explanations, "explanations")?)?;
    let out = need(a.out, "out")?;
    let mut by_question: BTreeMap<String, BTreeMap<String, Vec<(usize, Explanation)>>> = BTreeMap::new();
    for r in records {
        if let Record::Explanation(e) = r {
            by_question.entry(e.question).or_default().entry(e.method).or_default().push((e.instance, e.explanation));
        }
    }
    let mut reports = Vec::new();
    for (q, mut methods) in by_question {
        for list in methods.values_mut() {
            list.sort_by_key(|(i, _)| *i);
        }
        let rank = |name: &str, kind| -> CliResult<Vec<_>> {
            let list = methods.get(name).ok_or_else(|| Failure::Usage(format!("{q}: no {name} explanations")))?;
            let mut out = Vec::new();
            for (i, e) in list {
                out.extend(e.ranked(*i, kind)?);
            }
            Ok(out)
        };
        let shap = rank("shap", ExplainerKind::Shap)?;
        let lime = rank("lime", ExplainerKind::Lime)?;
        let rules: Option<Vec<AnchorRule>> = methods.get("anchors").map(|l| {
            l.iter().filter_map(|(_, e)| if let Explanation::Anchor(r) = e { Some(r.clone()) } else { None }).collect()
        });
        let n = a.histogram_n.unwrap_or(shap.len()).min(shap.len());
        let report = agreement_report(&q, &shap, &lime, rules.as_deref(), n)?;
        for s in &report.shared {
            println!("{q} k={} {:?}: {:.4} over {} instances", s.k, s.mode, s.rate, s.n_instances);
        }
        reports.push(Record::Agreement(report));
    }
    if reports.is_empty() {
        return Err(Failure::Usage("no explanation records found".into()));
    }
    write_report(&out, "agreement", &reports)?;
    Ok(())
}

fn render(a: RenderArgs) -> CliResult<()> {
    let a = merge(&a, a.config.as_deref(), "render")?;
    let out = need(a.out, "out")?;
    let mut records = Vec::new();
    for p in need(a.report, "report")? {
        records.extend(read_report(&p)?.1);
    }
    let paths = write_charts(&out, &render_records(&records)?)?;
    for p in paths {
        println!("{}", p.display());
    }
    Ok(())
}

/// Dotted keys set in the config document.
fn config_value<'a>(doc: &'a serde_json::Value, dotted: &str) -> Option<&'a serde_json::Value> {
    dotted.split('.').try_fold(doc, |v, k| v.get(k)).filter(|v| !v.is_null())
}

fn run(a: RunArgs) -> CliResult<()> {
    let text = read_config_file(&a.config)?;
    let doc: serde_json::Value = if a.config.extension().is_some_and(|e| e == "json") {
        let m: serde_json::Value = serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", a.config.display())))?;
        m.get("config").cloned().unwrap_or_default()
    } else {
        let t: toml::Value = toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", a.config.display())))?;
        serde_json::to_value(t).map_err(|e| Failure::Usage(e.to_string()))?
    };
    let mut cfg = PipelineConfig::load(&a.config)?;
    let env_seed = std::env::var(SEED_ENV).ok();
    let mut source = cfg.apply_seed_env()?;
    let flags: [(&str, &str, Option<serde_json::Value>); 4] = [
        ("seed", "seed", a.seed.map(Into::into)),
        ("threads", "threads", a.threads.map(Into::into)),
        ("rows", "data.rows", a.rows.map(Into::into)),
        ("instances", "explain.instances", a.instances.map(Into::into)),
    ];
    for (flag, key, value) in &flags {
        let Some(value) = value else { continue };
        if let Some(set) = config_value(&doc, key) {
            if !same(set, value) && !(*flag == "seed" && env_seed.is_some()) {
                return Err(Failure::Usage(format!("--{flag} {value} conflicts with {key} = {set} in {}", a.config.display())));
            }
        }
    }
    if let Some(seed) = a.seed {
        if env_seed.is_some() && cfg.seed != seed {
            return Err(Failure::Usage(format!("--seed {seed} conflicts with {SEED_ENV}={}", cfg.seed)));
        }
        cfg.seed = seed;
        if env_seed.is_none() {
            source = "flag".into();
        }
    }
    if let Some(t) = a.threads {
        cfg.threads = Some(t);
    }
    if let Some(r) = a.rows {
        cfg.data.rows = r;
    }
    if let Some(n) = a.instances {
        cfg.explain.instances = n;
    }
    let manifest = run_pipeline(&cfg, &a.out, &source)?;
    print!("{}", std::fs::read_to_string(a.out.join("metrics.md")).unwrap_or_default());
    println!(
        "wrote {} artifacts to {} in {:.1}s",
        manifest.outputs.len() + 1,
        a.out.display(),
        manifest.timings.get("total").copied().unwrap_or(0.0)
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Generate(a) => generate(a),
        Cmd::Prepare(a) => prepare(a),
        Cmd::Train(a) => train(a),
        Cmd::Evaluate(a) => evaluate_cmd(a),
        Cmd::Explain(a) => explain(a),
        Cmd::Compare(a) => compare(a),
        Cmd::Run(a) => run(a),
        Cmd::Render(a) => render(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
