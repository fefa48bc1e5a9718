//! `kgvqa`: build and score knowledge-graph grounded VQA datasets.
//!
//! Exit codes: 0 success, 2 configuration error, 3 stage failure.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use kgvqa_core::dataset::{read_jsonl, write_json};
use kgvqa_core::eval::embed::{EmbeddingProvider, SidecarAddress, SidecarProvider, StubProvider, DEFAULT_SIDECAR_TIMEOUT};
use kgvqa_core::eval::{evaluate, read_predictions, render_table, EvalConfig, Metric, DEFAULT_TAU};
use kgvqa_core::pipeline::{self, ConfigLayer, KgSource, RunConfig, Stage};
use kgvqa_core::{stats, Error};

#[derive(Parser)]
#[command(name = "kgvqa", version, about = "Build and score knowledge-graph grounded multi-hop VQA datasets")]
struct Cli {
    /// Log more (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Link objects and generate questions (raw.jsonl)
    Generate(RunArgs),
    /// Balance answer distributions (balanced.jsonl)
    Balance(RunArgs),
    /// Split into train and test (train.jsonl, test.jsonl)
    Split(RunArgs),
    /// Dataset statistics: of one file, or of the run's output directory
    Stats(StatsArgs),
    /// Run every stage in order
    Run(FullRunArgs),
    /// Score predictions against a dataset
    Eval(EvalArgs),
}

#[derive(Args, Default)]
struct RunArgs {
    /// TOML config file; flags override it, it overrides KGVQA_* variables
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    /// Offline knowledge-graph snapshot (JSON)
    #[arg(long, conflicts_with = "kg_endpoint")]
    kg_fixture: Option<PathBuf>,
    /// SPARQL endpoint URL
    #[arg(long)]
    kg_endpoint: Option<String>,
    #[arg(long)]
    language: Option<String>,
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long)]
    wordnet: Option<PathBuf>,
    #[arg(long)]
    vg_objects: Option<PathBuf>,
    #[arg(long)]
    vg_relations: Option<PathBuf>,
    #[arg(long)]
    landmarks: Option<PathBuf>,
    #[arg(long)]
    max_hops: Option<usize>,
    /// Keep only questions in this domain (repeatable)
    #[arg(long = "domain")]
    domains: Vec<String>,
    /// False choices per question
    #[arg(long)]
    distractors: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    ratio_max: Option<f64>,
    #[arg(long)]
    head_tail_target: Option<f64>,
    #[arg(long)]
    split_ratio: Option<f64>,
}

#[derive(Args)]
struct FullRunArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Stage to skip (repeatable): generate, balance, split, stats
    #[arg(long = "skip")]
    skip: Vec<String>,
}

#[derive(Args)]
struct StatsArgs {
    /// Dataset JSONL; prints its statistics as JSON instead of running the
    /// stats stage
    file: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// JSONL of {question_id, text} or {question_id, letter}
    #[arg(long)]
    predictions: PathBuf,
    /// Comma-separated subset of exact,substring,semantic,mc
    #[arg(long, value_delimiter = ',', default_value = "exact,substring,semantic,mc")]
    metrics: Vec<String>,
    /// Similarity threshold for the semantic metric
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    /// `stub` or `sidecar`
    #[arg(long, default_value = "stub")]
    provider: String,
    /// Sidecar address: host:port, tcp://host:port or cmd:<program> <args>
    #[arg(long)]
    sidecar: Option<String>,
    #[arg(long, default_value_t = DEFAULT_SIDECAR_TIMEOUT.as_secs())]
    sidecar_timeout_secs: u64,
    /// Write the JSON report here
    #[arg(long)]
    report: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Stage(String),
}

impl Failure {
    fn config(e: impl std::fmt::Display) -> Self {
        Failure::Config(e.to_string())
    }

    fn stage(stage: &str, e: impl std::fmt::Display) -> Self {
        Failure::Stage(format!("stage `{stage}` failed: {e}"))
    }
}

fn flag_layer(a: &RunArgs) -> ConfigLayer {
    let kg = match (&a.kg_fixture, &a.kg_endpoint) {
        (Some(p), _) => Some(KgSource::Fixture(p.clone())),
        (None, Some(u)) => Some(KgSource::Endpoint(u.clone())),
        (None, None) => None,
    };
    ConfigLayer {
        kg,
        language: a.language.clone(),
        templates: a.templates.clone(),
        wordnet: a.wordnet.clone(),
        vg_objects: a.vg_objects.clone(),
        vg_relations: a.vg_relations.clone(),
        landmarks: a.landmarks.clone(),
        max_hops: a.max_hops,
        domains: (!a.domains.is_empty()).then(|| a.domains.clone()),
        distractors: a.distractors,
        balance_rounds: a.rounds,
        balance_top_k: a.top_k,
        balance_ratio_max: a.ratio_max,
        balance_head_tail_target: a.head_tail_target,
        split_ratio: a.split_ratio,
        seed: a.seed,
        output_dir: a.output_dir.clone(),
    }
}

fn resolve(a: &RunArgs, needs_inputs: bool) -> Result<RunConfig, Failure> {
    let file = match &a.config {
        Some(p) => ConfigLayer::from_file(p).map_err(Failure::config)?,
        None => ConfigLayer::default(),
    };
    let env = ConfigLayer::from_env().map_err(Failure::config)?;
    flag_layer(a).or(file).or(env).resolve(needs_inputs).map_err(Failure::config)
}

fn run_stages(a: &RunArgs, stages: BTreeSet<Stage>) -> Result<(), Failure> {
    let cfg = resolve(a, stages.contains(&Stage::Generate))?;
    pipeline::run(&cfg, &stages).map_err(|e| match e.error {
        Error::Config(_) => Failure::Config(e.to_string()),
        _ => Failure::Stage(e.to_string()),
    })
}

fn stats_file(path: &Path) -> Result<(), Failure> {
    let s = stats::stats(path).map_err(|e| Failure::stage("stats", e))?;
    let text = serde_json::to_string_pretty(&s).map_err(|e| Failure::stage("stats", e))?;
    println!("{text}");
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<(), Failure> {
    let metrics = a
        .metrics
        .iter()
        .map(|m| m.parse::<Metric>())
        .collect::<Result<BTreeSet<_>, _>>()
        .map_err(Failure::config)?;
    let cfg = EvalConfig { metrics, tau: a.tau };
    let provider: Option<Box<dyn EmbeddingProvider>> = if cfg.metrics.contains(&Metric::Semantic) {
        Some(match a.provider.as_str() {
            "stub" => Box::new(StubProvider),
            "sidecar" => {
                let addr: SidecarAddress = a
                    .sidecar
                    .as_deref()
                    .ok_or_else(|| Failure::Config("--provider sidecar needs --sidecar".into()))?
                    .parse()
                    .map_err(Failure::config)?;
                let timeout = Duration::from_secs(a.sidecar_timeout_secs);
                Box::new(SidecarProvider::connect(addr, timeout).map_err(|e| Failure::stage("eval", e))?)
            }
            other => return Err(Failure::Config(format!("unknown provider {other:?} (expected stub or sidecar)"))),
        })
    } else {
        None
    };
    let items = read_jsonl(&a.dataset).map_err(|e| Failure::stage("eval", e))?;
    let predictions = read_predictions(&a.predictions).map_err(|e| Failure::stage("eval", e))?;
    let report = evaluate(&items, &predictions, &cfg, provider.as_deref()).map_err(|e| match e {
        Error::Config(_) => Failure::config(e),
        e => Failure::stage("eval", e),
    })?;
    if let Some(p) = &a.report {
        write_json(p, &report).map_err(|e| Failure::stage("eval", e))?;
    }
    print!("{}", render_table(&report));
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate(a) => run_stages(&a, BTreeSet::from([Stage::Generate])),
        Command::Balance(a) => run_stages(&a, BTreeSet::from([Stage::Balance])),
        Command::Split(a) => run_stages(&a, BTreeSet::from([Stage::Split])),
        Command::Stats(s) => match &s.file {
            Some(f) => stats_file(f),
            None => run_stages(&s.run, BTreeSet::from([Stage::Stats])),
        },
        Command::Run(r) => {
            let mut stages: BTreeSet<Stage> = Stage::ALL.into_iter().collect();
            for name in &r.skip {
                let stage = Stage::ALL
                    .into_iter()
                    .find(|s| s.name() == name.as_str())
                    .ok_or_else(|| Failure::Config(format!("unknown stage {name:?} in --skip")))?;
                stages.remove(&stage);
            }
            run_stages(&r.run, stages)
        }
        Command::Eval(a) => eval(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Stage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
