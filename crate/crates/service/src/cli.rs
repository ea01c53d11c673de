//! Command-line workflows. Every command writes its normal output to the
//! given writer; failures come back as [`CliError`], which `main` prints to
//! stderr as JSON.

use std::collections::BTreeSet;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use retrofit_core::checkpoint::{read_model, write_model, CheckpointError};
use retrofit_core::classifiers::{
    render_tables, run_trials, table2_csv, table3_csv, train_model, ModelConfig, ModelKind, RatingModel, TrainError,
    TrialError, TrialReport,
};
use retrofit_core::epc::{generate_synthetic_with, load_dataset, split, Dataset, FeatureSchema, SyntheticParams};
use retrofit_core::metrics::EvalMetrics;
use retrofit_core::report::{ContextTemplates, QuestionDb};
use retrofit_core::retrofit::{
    enumerate_plans, frontier_report, render_report, Catalog, ComponentCategory, CostBasis, PlanRequest,
    DEFAULT_COMBINATION_CAP,
};
use serde_json::{json, Value};

use crate::api::{router, AppState, Snapshot};
use crate::requests::parse_profile;

#[derive(Debug, Parser)]
#[command(name = "retrofit", version, about = "Energy-rating prediction and retrofit planning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic labelled dataset as CSV.
    Synth(SynthArgs),
    /// Train one model on the train split and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split.
    Evaluate(EvaluateArgs),
    /// Multi-seed comparison of several models.
    Tables(TablesArgs),
    /// Cheapest plan per reachable rating for one home.
    Plan(PlanArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
    /// Decision-tree feature importance.
    Importance(ImportanceArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 20_000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, env = "RETROFIT_DATA", default_value = "data.csv")]
    pub out: PathBuf,
    /// Standard deviation of the label noise.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Fraction of rows with floor area and floor U-value recorded as zero.
    #[arg(long, default_value_t = 0.0)]
    pub zero_anomaly_rate: f64,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV path, or `synthetic:<rows>` to generate data in memory.
    #[arg(long, env = "RETROFIT_DATA", default_value = "data.csv")]
    pub data: String,
    /// Seed for `synthetic:<rows>` data.
    #[arg(long, default_value_t = 1)]
    pub data_seed: u64,
    /// TOML file with `[train]`, `[mlp]`, `[scarf]`, `[tree]`, `[forest]`
    /// and `[gbt]` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "mlp")]
    pub model: ModelKind,
    /// Split and initialisation seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, env = "RETROFIT_CHECKPOINT", default_value = "model.llem")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, env = "RETROFIT_CHECKPOINT", default_value = "model.llem")]
    pub checkpoint: PathBuf,
    /// Split seed; must match the one used for training.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct TablesArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated model names.
    #[arg(long, value_delimiter = ',', default_value = "decision_tree,gbt,random_forest,mlp,scarf,c2f_mlp,c2f_scarf")]
    pub models: Vec<ModelKind>,
    /// Number of seeds; seeds 1..=N are used.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Also write per-seed metrics as JSON.
    #[arg(long)]
    pub trials_json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CatalogArgs {
    /// Catalog TOML; the shipped catalog when absent.
    #[arg(long, env = "RETROFIT_CATALOG")]
    pub catalog: Option<PathBuf>,
    #[arg(long, env = "RETROFIT_CHECKPOINT", default_value = "model.llem")]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = DEFAULT_COMBINATION_CAP)]
    pub cap: usize,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub common: CatalogArgs,
    /// JSON object of feature values.
    #[arg(long)]
    pub profile: PathBuf,
    /// Budget in euros; unlimited when absent.
    #[arg(long)]
    pub budget: Option<f64>,
    /// Comma-separated categories; all when absent, none when empty.
    #[arg(long)]
    pub categories: Option<String>,
    #[arg(long, default_value = "net")]
    pub cost_basis: String,
    /// One item per selected category, no keep-existing option.
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub common: CatalogArgs,
    /// Question database TOML; the shipped one when absent.
    #[arg(long, env = "RETROFIT_QUESTIONS")]
    pub questions: Option<PathBuf>,
    #[arg(long, env = "RETROFIT_HOST", default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, env = "RETROFIT_PORT", default_value_t = 8080)]
    pub port: u16,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Write the report here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Trials(#[from] TrialError),
    #[error("{0}")]
    Plan(String),
    #[error("{0}")]
    Catalog(String),
    #[error("{0}")]
    Serve(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io(_) => "io",
            CliError::Data(_) => "data",
            CliError::Config(_) => "config",
            CliError::Checkpoint(_) => "checkpoint",
            CliError::Train(_) => "training",
            CliError::Trials(_) => "trials",
            CliError::Plan(_) => "plan",
            CliError::Catalog(_) => "catalog",
            CliError::Serve(_) => "serve",
        }
    }

    pub fn to_json(&self) -> Value {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } })
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn out_err(e: std::io::Error) -> CliError {
    CliError::Io(format!("output: {e}"))
}

pub fn schema() -> Arc<FeatureSchema> {
    Arc::new(FeatureSchema::default_schema())
}

pub fn load_config(path: Option<&Path>) -> Result<ModelConfig, CliError> {
    match path {
        None => Ok(ModelConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", p.display(), e.message().trim())))
        }
    }
}

/// `synthetic:<rows>` or a CSV path.
pub fn load_data(spec: &str, data_seed: u64, schema: Arc<FeatureSchema>) -> Result<Dataset, CliError> {
    if let Some(n) = spec.strip_prefix("synthetic:") {
        let n: usize = n.parse().map_err(|_| CliError::Usage(format!("bad row count in `{spec}`")))?;
        return Ok(generate_synthetic_with(n, data_seed, schema, &SyntheticParams::default()));
    }
    load_dataset(Path::new(spec), schema).map_err(|e| CliError::Data(format!("{spec}: {e}")))
}

pub fn metrics_json(m: &EvalMetrics) -> Value {
    let per_class: serde_json::Map<String, Value> =
        m.per_class_accuracy.iter().map(|(r, a)| (r.as_str().to_string(), json!(a))).collect();
    json!({
        "accuracy": m.accuracy,
        "macro_f1": m.macro_f1,
        "n_test": m.n_test,
        "per_class_accuracy": per_class,
        "absent": m.absent.iter().map(|r| r.as_str()).collect::<Vec<_>>(),
    })
}

fn render_metrics(m: &EvalMetrics) -> String {
    let mut s = format!("accuracy: {:.4}\nmacro_f1: {:.4}\ntest rows: {}\n", m.accuracy, m.macro_f1, m.n_test);
    for (r, a) in &m.per_class_accuracy {
        s.push_str(&format!("  {:<3} {:.4}\n", r.as_str(), a));
    }
    s
}

pub fn trials_json(reports: &[TrialReport]) -> Value {
    let rows: Vec<Value> = reports
        .iter()
        .map(|r| {
            let per_seed: Vec<Value> = r
                .seeds
                .iter()
                .zip(&r.metrics)
                .map(|(s, m)| {
                    let mut v = metrics_json(m);
                    v["seed"] = json!(s);
                    v
                })
                .collect();
            json!({ "model": r.model.name(), "trials": per_seed })
        })
        .collect();
    json!({ "reports": rows })
}

fn read_catalog(path: Option<&Path>, schema: &FeatureSchema) -> Result<Catalog, CliError> {
    match path {
        None => Ok(Catalog::default_catalog(schema)),
        Some(p) => Catalog::load(p, schema).map_err(|e| CliError::Catalog(format!("{}: {e}", p.display()))),
    }
}

fn read_checkpoint(path: &Path, schema: &FeatureSchema) -> Result<(RatingModel, String), CliError> {
    read_model(path, schema).map_err(|e| match e {
        CheckpointError::Io(m) => CliError::Io(m),
        other => CliError::Checkpoint(other),
    })
}

pub fn parse_categories(s: Option<&str>) -> Result<BTreeSet<ComponentCategory>, CliError> {
    match s {
        None => Ok(ComponentCategory::ALL.into_iter().collect()),
        Some(s) => s
            .split(',')
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(|c| c.parse::<ComponentCategory>().map_err(|e| CliError::Usage(e.to_string())))
            .collect(),
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => synth(a, out),
        Command::Train(a) => train(a, out),
        Command::Evaluate(a) => evaluate(a, out),
        Command::Tables(a) => tables(a, out),
        Command::Plan(a) => plan(a, out),
        Command::Serve(a) => serve(a, out),
        Command::Importance(a) => importance(a, out),
    }
}

fn synth(a: SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut params = SyntheticParams { zero_anomaly_rate: a.zero_anomaly_rate, ..SyntheticParams::default() };
    if let Some(s) = a.noise_sigma {
        params.noise_sigma = s;
    }
    if !(0.0..=1.0).contains(&params.zero_anomaly_rate) || params.noise_sigma.is_nan() || params.noise_sigma < 0.0 {
        return Err(CliError::Usage("noise sigma must be >= 0 and the anomaly rate in [0, 1]".into()));
    }
    let data = generate_synthetic_with(a.n, a.seed, schema(), &params);
    let f = std::fs::File::create(&a.out).map_err(|e| io_err(&a.out, e))?;
    data.write_csv(std::io::BufWriter::new(f)).map_err(|e| io_err(&a.out, e))?;
    writeln!(out, "wrote {} rows to {}", data.len(), a.out.display()).map_err(out_err)
}

fn train(a: TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let schema = schema();
    let cfg = load_config(a.data.config.as_deref())?;
    let data = load_data(&a.data.data, a.data.data_seed, schema.clone())?;
    let splits = split(&data, a.seed).map_err(|e| CliError::Data(e.to_string()))?;
    let model = train_model(a.model, &splits, &cfg, a.seed)?;
    write_model(&a.out, &model, &schema)?;
    let v = model.evaluate(&splits.validation).map_err(|e| CliError::Data(format!("validation split: {e}")))?;
    writeln!(
        out,
        "trained {} on {} rows; validation accuracy {:.4}, macro F1 {:.4}; wrote {}",
        a.model,
        splits.train.len(),
        v.accuracy,
        v.macro_f1,
        a.out.display()
    )
    .map_err(out_err)
}

fn evaluate(a: EvaluateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let schema = schema();
    let (model, _) = read_checkpoint(&a.checkpoint, &schema)?;
    let data = load_data(&a.data.data, a.data.data_seed, schema)?;
    let splits = split(&data, a.seed).map_err(|e| CliError::Data(e.to_string()))?;
    let m = model.evaluate(&splits.test).map_err(|e| CliError::Data(format!("test split: {e}")))?;
    if a.json {
        let mut v = metrics_json(&m);
        v["model"] = json!(model.kind.name());
        writeln!(out, "{v}").map_err(out_err)
    } else {
        write!(out, "model: {}\n{}", model.kind, render_metrics(&m)).map_err(out_err)
    }
}

fn tables(a: TablesArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let cfg = load_config(a.data.config.as_deref())?;
    let data = load_data(&a.data.data, a.data.data_seed, schema())?;
    let seeds: Vec<u64> = (1..=a.seeds).collect();
    let reports = run_trials(&data, &a.models, &seeds, &cfg)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| io_err(&a.out_dir, e))?;
    let t2 = a.out_dir.join("table2.csv");
    std::fs::write(&t2, table2_csv(&reports)).map_err(|e| io_err(&t2, e))?;
    let t3 = a.out_dir.join("table3.csv");
    std::fs::write(&t3, table3_csv(&reports)).map_err(|e| io_err(&t3, e))?;
    if let Some(p) = &a.trials_json {
        let text = serde_json::to_string_pretty(&trials_json(&reports)).unwrap();
        std::fs::write(p, text + "\n").map_err(|e| io_err(p, e))?;
    }
    out.write_all(render_tables(&reports).as_bytes()).map_err(out_err)
}

fn plan(a: PlanArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let schema = schema();
    let text = std::fs::read_to_string(&a.profile).map_err(|e| io_err(&a.profile, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", a.profile.display())))?;
    let home = parse_profile(Some(&v), &schema).map_err(|e| CliError::Data(format!("{}: {}", e.field, e.message)))?;
    let catalog = read_catalog(a.common.catalog.as_deref(), &schema)?;
    let (model, _) = read_checkpoint(&a.common.checkpoint, &schema)?;
    let budget_cents = match a.budget {
        None => None,
        Some(b) if b.is_finite() && b >= 0.0 => Some((b * 100.0).round() as i64),
        Some(_) => return Err(CliError::Usage("--budget must be a non-negative number".into())),
    };
    let cost_basis = match a.cost_basis.as_str() {
        "net" => CostBasis::Net,
        "gross" => CostBasis::Gross,
        other => return Err(CliError::Usage(format!("unknown cost basis `{other}`"))),
    };
    let req = PlanRequest {
        home,
        categories: parse_categories(a.categories.as_deref())?,
        budget_cents,
        combination_cap: a.common.cap,
        cost_basis,
        strict: a.strict,
    };
    let f = enumerate_plans(&req, &catalog, &model).map_err(|e| CliError::Plan(e.to_string()))?;
    if a.json {
        let rows: Vec<Value> = frontier_report(&f)
            .into_iter()
            .map(|r| {
                json!({
                    "rating": r.rating.as_str(),
                    "item_ids": r.item_ids,
                    "total_cost_eur": r.total_cents as f64 / 100.0,
                    "grant_eur": r.grant_cents as f64 / 100.0,
                    "net_cost_eur": r.net_cents as f64 / 100.0,
                    "improvement": r.improvement,
                })
            })
            .collect();
        writeln!(out, "{}", json!({ "base_rating": f.base_rating.as_str(), "frontier": rows })).map_err(out_err)
    } else {
        out.write_all(render_report(&f).as_bytes()).map_err(out_err)
    }
}

pub fn build_snapshot(
    checkpoint: &Path,
    catalog: Option<&Path>,
    questions: Option<&Path>,
    cap: usize,
) -> Result<Snapshot, CliError> {
    let schema = schema();
    let (model, version) = read_checkpoint(checkpoint, &schema)?;
    let catalog = read_catalog(catalog, &schema)?;
    let questions = match questions {
        None => QuestionDb::default_db(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            QuestionDb::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
    };
    Snapshot::new(schema, model, version, catalog, ContextTemplates::default_templates(), questions, cap)
        .map_err(|e| CliError::Config(e.to_string()))
}

fn serve(a: ServeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let snap = build_snapshot(&a.common.checkpoint, a.common.catalog.as_deref(), a.questions.as_deref(), a.common.cap)?;
    let addr: SocketAddr = format!("{}:{}", a.host, a.port).parse().map_err(|e| CliError::Usage(format!("address: {e}")))?;
    let state = Arc::new(AppState::new(snap));
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Serve(e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| CliError::Serve(format!("bind {addr}: {e}")))?;
        writeln!(out, "listening on http://{}", listener.local_addr().unwrap()).map_err(out_err)?;
        out.flush().map_err(out_err)?;
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Serve(e.to_string()))
    })
}

fn importance(a: ImportanceArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let schema = schema();
    let cfg = load_config(a.data.config.as_deref())?;
    let data = load_data(&a.data.data, a.data.data_seed, schema.clone())?;
    let splits = split(&data, a.seed).map_err(|e| CliError::Data(e.to_string()))?;
    let model = train_model(ModelKind::DecisionTree, &splits, &cfg, a.seed)?;
    let report = model.importance(&schema).expect("decision tree model").to_delimited();
    if let Some(p) = &a.out {
        std::fs::write(p, &report).map_err(|e| io_err(p, e))?;
    }
    out.write_all(report.as_bytes()).map_err(out_err)
}
