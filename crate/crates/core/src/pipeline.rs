//! End-to-end runs: configuration layering and the stage sequence
//! generate → balance → split → stats.
//!
//! Configuration comes from up to three layers. Command-line flags win over
//! the config file, which wins over `KGVQA_*` environment variables. Each
//! layer is a [`ConfigLayer`] of optional fields; [`ConfigLayer::resolve`]
//! turns the merged layer into a validated [`RunConfig`].
//!
//! A config file looks like:
//!
//! ```toml
//! seed = 42
//! output_dir = "out"
//! max_hops = 2
//!
//! [kg]
//! fixture = "fixture_kg.json"
//!
//! [inputs]
//! templates = "templates.tsv"
//! wordnet = "wordnet_index.tsv"
//! vg_objects = "vg_objects.jsonl"
//!
//! [balance]
//! rounds = 20
//! ```
//!
//! Relative paths in a file are taken relative to the file.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::balance::{balance, BalanceConfig};
use crate::choices::DistractorSpec;
use crate::dataset::{read_jsonl, write_json, write_jsonl};
use crate::generate::{generate_dataset, GenerationConfig};
use crate::kg::{FixtureBackend, KgStore, SparqlBackend, SparqlConfig};
use crate::linker::{group_images, read_landmark_csv, read_scene_relations, read_vg_objects, ImageSource, WordNetIndex};
use crate::split::{split, DEFAULT_TRAIN_RATIO};
use crate::stats::{compute, DatasetStats};
use crate::templates::{DomainTag, TemplateBank};
use crate::{Error, Result};

pub const RAW: &str = "raw.jsonl";
pub const SKIP_REPORT: &str = "skip_report.json";
pub const BALANCED: &str = "balanced.jsonl";
pub const BALANCE_REPORT: &str = "balance_report.json";
pub const TRAIN: &str = "train.jsonl";
pub const TEST: &str = "test.jsonl";
pub const SPLIT_MANIFEST: &str = "split_manifest.json";
pub const STATS: &str = "stats.json";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KgSource {
    Fixture(PathBuf),
    Endpoint(String),
}

/// One configuration layer. Every field is optional; merging keeps the
/// first layer that sets a field.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigLayer {
    pub kg: Option<KgSource>,
    pub language: Option<String>,
    pub templates: Option<PathBuf>,
    pub wordnet: Option<PathBuf>,
    pub vg_objects: Option<PathBuf>,
    pub vg_relations: Option<PathBuf>,
    pub landmarks: Option<PathBuf>,
    pub max_hops: Option<usize>,
    pub domains: Option<Vec<String>>,
    pub distractors: Option<usize>,
    pub balance_rounds: Option<usize>,
    pub balance_top_k: Option<usize>,
    pub balance_ratio_max: Option<f64>,
    pub balance_head_tail_target: Option<f64>,
    pub split_ratio: Option<f64>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileKg {
    fixture: Option<PathBuf>,
    endpoint: Option<String>,
    language: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileInputs {
    templates: Option<PathBuf>,
    wordnet: Option<PathBuf>,
    vg_objects: Option<PathBuf>,
    vg_relations: Option<PathBuf>,
    landmarks: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileBalance {
    rounds: Option<usize>,
    top_k: Option<usize>,
    ratio_max: Option<f64>,
    head_tail_target: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    max_hops: Option<usize>,
    domains: Option<Vec<String>>,
    distractors: Option<usize>,
    split_ratio: Option<f64>,
    #[serde(default)]
    kg: FileKg,
    #[serde(default)]
    inputs: FileInputs,
    #[serde(default)]
    balance: FileBalance,
}

fn parse_env<T: std::str::FromStr>(vars: &HashMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    vars.get(key)
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|e| Error::Config(format!("environment variable {key}={v:?}: {e}")))
        })
        .transpose()
}

impl ConfigLayer {
    /// Parses a TOML config file. Relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let f: FileConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let rel = |p: Option<PathBuf>| p.map(|p| if p.is_absolute() { p } else { base.join(p) });
        let kg = match (f.kg.fixture, f.kg.endpoint) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("[kg] sets both `fixture` and `endpoint`".into()));
            }
            (Some(p), None) => Some(KgSource::Fixture(rel(Some(p)).expect("set"))),
            (None, Some(url)) => Some(KgSource::Endpoint(url)),
            (None, None) => None,
        };
        Ok(Self {
            kg,
            language: f.kg.language,
            templates: rel(f.inputs.templates),
            wordnet: rel(f.inputs.wordnet),
            vg_objects: rel(f.inputs.vg_objects),
            vg_relations: rel(f.inputs.vg_relations),
            landmarks: rel(f.inputs.landmarks),
            max_hops: f.max_hops,
            domains: f.domains,
            distractors: f.distractors,
            balance_rounds: f.balance.rounds,
            balance_top_k: f.balance.top_k,
            balance_ratio_max: f.balance.ratio_max,
            balance_head_tail_target: f.balance.head_tail_target,
            split_ratio: f.split_ratio,
            seed: f.seed,
            output_dir: rel(f.output_dir),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_toml(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Reads `KGVQA_SEED`, `KGVQA_OUTPUT_DIR`, `KGVQA_KG_FIXTURE`,
    /// `KGVQA_KG_ENDPOINT`, `KGVQA_MAX_HOPS`, ... (field names upper-cased;
    /// `KGVQA_DOMAINS` is comma-separated).
    pub fn from_env_map(vars: &HashMap<String, String>) -> Result<Self> {
        let path = |k: &str| vars.get(k).map(PathBuf::from);
        let kg = match (vars.get("KGVQA_KG_FIXTURE"), vars.get("KGVQA_KG_ENDPOINT")) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("both KGVQA_KG_FIXTURE and KGVQA_KG_ENDPOINT are set".into()));
            }
            (Some(p), None) => Some(KgSource::Fixture(p.into())),
            (None, Some(u)) => Some(KgSource::Endpoint(u.clone())),
            (None, None) => None,
        };
        Ok(Self {
            kg,
            language: vars.get("KGVQA_LANGUAGE").cloned(),
            templates: path("KGVQA_TEMPLATES"),
            wordnet: path("KGVQA_WORDNET"),
            vg_objects: path("KGVQA_VG_OBJECTS"),
            vg_relations: path("KGVQA_VG_RELATIONS"),
            landmarks: path("KGVQA_LANDMARKS"),
            max_hops: parse_env(vars, "KGVQA_MAX_HOPS")?,
            domains: vars
                .get("KGVQA_DOMAINS")
                .map(|v| v.split(',').map(|d| d.trim().to_string()).filter(|d| !d.is_empty()).collect()),
            distractors: parse_env(vars, "KGVQA_DISTRACTORS")?,
            balance_rounds: parse_env(vars, "KGVQA_BALANCE_ROUNDS")?,
            balance_top_k: parse_env(vars, "KGVQA_BALANCE_TOP_K")?,
            balance_ratio_max: parse_env(vars, "KGVQA_BALANCE_RATIO_MAX")?,
            balance_head_tail_target: parse_env(vars, "KGVQA_BALANCE_HEAD_TAIL_TARGET")?,
            split_ratio: parse_env(vars, "KGVQA_SPLIT_RATIO")?,
            seed: parse_env(vars, "KGVQA_SEED")?,
            output_dir: path("KGVQA_OUTPUT_DIR"),
        })
    }

    pub fn from_env() -> Result<Self> {
        let vars: HashMap<String, String> = std::env::vars().filter(|(k, _)| k.starts_with("KGVQA_")).collect();
        Self::from_env_map(&vars)
    }

    /// Fields set in `self` win over `lower`.
    pub fn or(self, lower: ConfigLayer) -> ConfigLayer {
        ConfigLayer {
            kg: self.kg.or(lower.kg),
            language: self.language.or(lower.language),
            templates: self.templates.or(lower.templates),
            wordnet: self.wordnet.or(lower.wordnet),
            vg_objects: self.vg_objects.or(lower.vg_objects),
            vg_relations: self.vg_relations.or(lower.vg_relations),
            landmarks: self.landmarks.or(lower.landmarks),
            max_hops: self.max_hops.or(lower.max_hops),
            domains: self.domains.or(lower.domains),
            distractors: self.distractors.or(lower.distractors),
            balance_rounds: self.balance_rounds.or(lower.balance_rounds),
            balance_top_k: self.balance_top_k.or(lower.balance_top_k),
            balance_ratio_max: self.balance_ratio_max.or(lower.balance_ratio_max),
            balance_head_tail_target: self.balance_head_tail_target.or(lower.balance_head_tail_target),
            split_ratio: self.split_ratio.or(lower.split_ratio),
            seed: self.seed.or(lower.seed),
            output_dir: self.output_dir.or(lower.output_dir),
        }
    }

    /// Validates the merged layer. Input files are only required when
    /// `needs_inputs` is set (i.e. the generate stage will run).
    pub fn resolve(self, needs_inputs: bool) -> Result<RunConfig> {
        let missing = |what: &str| Error::Config(format!("missing required setting `{what}`"));
        let exists = |p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(Error::Config(format!("{} does not exist", p.display())))
            }
        };
        let seed = self.seed.ok_or_else(|| missing("seed"))?;
        let output_dir = self.output_dir.ok_or_else(|| missing("output_dir"))?;
        let domains = self
            .domains
            .map(|ds| ds.iter().map(|d| d.parse::<DomainTag>()).collect::<std::result::Result<BTreeSet<_>, _>>())
            .transpose()
            .map_err(Error::Config)?;
        let mut balance = BalanceConfig::default();
        if let Some(v) = self.balance_rounds {
            balance.rounds = v;
        }
        if let Some(v) = self.balance_top_k {
            balance.top_k = v;
        }
        if let Some(v) = self.balance_ratio_max {
            balance.ratio_max = v;
        }
        if let Some(v) = self.balance_head_tail_target {
            balance.head_tail_target = v;
        }
        balance.validate()?;
        let split_ratio = self.split_ratio.unwrap_or(DEFAULT_TRAIN_RATIO);
        if !(split_ratio > 0.0 && split_ratio < 1.0) {
            return Err(Error::Config(format!("split_ratio must be in (0, 1), got {split_ratio}")));
        }
        let mut generation = GenerationConfig::new(seed);
        if let Some(h) = self.max_hops {
            generation.max_hops = h;
        }
        generation.domain_filter = domains;
        if let Some(n) = self.distractors {
            generation.distractors = DistractorSpec { count: n };
        }
        generation.validate()?;

        let inputs = if needs_inputs {
            let kg = self.kg.ok_or_else(|| missing("kg.fixture or kg.endpoint"))?;
            if let KgSource::Fixture(p) = &kg {
                exists(p)?;
            }
            let templates = self.templates.ok_or_else(|| missing("inputs.templates"))?;
            exists(&templates)?;
            let wordnet = self.wordnet.ok_or_else(|| missing("inputs.wordnet"))?;
            exists(&wordnet)?;
            if self.vg_objects.is_none() && self.landmarks.is_none() {
                return Err(missing("inputs.vg_objects or inputs.landmarks"));
            }
            if self.vg_relations.is_some() && self.vg_objects.is_none() {
                return Err(Error::Config("inputs.vg_relations needs inputs.vg_objects".into()));
            }
            for p in [&self.vg_objects, &self.vg_relations, &self.landmarks].into_iter().flatten() {
                exists(p)?;
            }
            Some(Inputs {
                kg,
                language: self.language.unwrap_or_else(|| "en".into()),
                templates,
                wordnet,
                vg_objects: self.vg_objects,
                vg_relations: self.vg_relations,
                landmarks: self.landmarks,
            })
        } else {
            None
        };
        Ok(RunConfig {
            inputs,
            generation,
            balance,
            split_ratio,
            seed,
            output_dir,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inputs {
    pub kg: KgSource,
    pub language: String,
    pub templates: PathBuf,
    pub wordnet: PathBuf,
    pub vg_objects: Option<PathBuf>,
    pub vg_relations: Option<PathBuf>,
    pub landmarks: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Present when the generate stage can run.
    pub inputs: Option<Inputs>,
    pub generation: GenerationConfig,
    pub balance: BalanceConfig,
    pub split_ratio: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Generate,
    Balance,
    Split,
    Stats,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Generate, Stage::Balance, Stage::Split, Stage::Stats];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Balance => "balance",
            Stage::Split => "split",
            Stage::Stats => "stats",
        }
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage `{}` failed: {}", self.stage.name(), self.error)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

fn out(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn open_kg(inputs: &Inputs) -> Result<KgStore> {
    Ok(match &inputs.kg {
        KgSource::Fixture(p) => KgStore::new(FixtureBackend::load(p)?),
        KgSource::Endpoint(url) => {
            let mut c = SparqlConfig::new(url)?;
            c.language = inputs.language.clone();
            KgStore::new(SparqlBackend::new(c)?)
        }
    })
}

#[derive(Debug, Serialize)]
struct SkipReport<'a> {
    skipped_objects: &'a [crate::generate::SkipRecord],
}

/// Writes `raw.jsonl` and `skip_report.json`; returns the question count.
pub fn run_generate(cfg: &RunConfig) -> Result<usize> {
    let inputs = cfg
        .inputs
        .as_ref()
        .ok_or_else(|| Error::Config("generation inputs are not configured".into()))?;
    let bank = TemplateBank::load(&inputs.templates)?;
    let wordnet = WordNetIndex::load(&inputs.wordnet)?;
    let kg = open_kg(inputs)?;
    let mut images = Vec::new();
    if let Some(p) = &inputs.vg_objects {
        let relations = match &inputs.vg_relations {
            Some(r) => read_scene_relations(r)?,
            None => Vec::new(),
        };
        images.extend(group_images(read_vg_objects(p)?, ImageSource::VisualGenome, &relations));
    }
    if let Some(p) = &inputs.landmarks {
        images.extend(group_images(read_landmark_csv(p)?, ImageSource::Landmarks, &[]));
    }
    log::info!("generating questions for {} images", images.len());
    let output = generate_dataset(&images, &kg, &wordnet, &bank, &cfg.generation)?;
    ensure_dir(&cfg.output_dir)?;
    write_jsonl(&out(cfg, RAW), &output.items)?;
    write_json(&out(cfg, SKIP_REPORT), &SkipReport { skipped_objects: &output.skips })?;
    log::info!("{} questions, {} objects skipped", output.items.len(), output.skips.len());
    Ok(output.items.len())
}

/// Reads `raw.jsonl`, writes `balanced.jsonl` and `balance_report.json`.
pub fn run_balance(cfg: &RunConfig) -> Result<usize> {
    let raw = read_jsonl(&out(cfg, RAW))?;
    let (balanced, report) = balance(&raw, &cfg.balance, cfg.seed)?;
    write_jsonl(&out(cfg, BALANCED), &balanced)?;
    write_json(&out(cfg, BALANCE_REPORT), &report)?;
    log::info!("balanced {} -> {} questions", raw.len(), balanced.len());
    Ok(balanced.len())
}

/// Reads `balanced.jsonl`, writes `train.jsonl`, `test.jsonl` and
/// `split_manifest.json`.
pub fn run_split(cfg: &RunConfig) -> Result<(usize, usize)> {
    let balanced = read_jsonl(&out(cfg, BALANCED))?;
    let s = split(&balanced, cfg.split_ratio, cfg.seed)?;
    write_jsonl(&out(cfg, TRAIN), &s.train)?;
    write_jsonl(&out(cfg, TEST), &s.test)?;
    write_json(&out(cfg, SPLIT_MANIFEST), &s.manifest)?;
    log::info!("split into {} train / {} test questions", s.train.len(), s.test.len());
    Ok((s.train.len(), s.test.len()))
}

/// Statistics of every dataset file present in the output directory,
/// written to `stats.json` keyed by file name.
pub fn run_stats(cfg: &RunConfig) -> Result<BTreeMap<String, DatasetStats>> {
    let mut all = BTreeMap::new();
    for name in [RAW, BALANCED, TRAIN, TEST] {
        let path = out(cfg, name);
        if !path.exists() {
            continue;
        }
        let items = read_jsonl(&path)?;
        if items.is_empty() {
            log::warn!("{} is empty; no statistics", path.display());
            continue;
        }
        all.insert(name.to_string(), compute(&items)?);
    }
    if all.is_empty() {
        return Err(Error::Input(format!("no dataset files in {}", cfg.output_dir.display())));
    }
    write_json(&out(cfg, STATS), &all)?;
    Ok(all)
}

/// Runs the selected stages in order, stopping at the first failure.
pub fn run(cfg: &RunConfig, stages: &BTreeSet<Stage>) -> std::result::Result<(), StageError> {
    for stage in Stage::ALL {
        if !stages.contains(&stage) {
            continue;
        }
        let result = match stage {
            Stage::Generate => run_generate(cfg).map(drop),
            Stage::Balance => run_balance(cfg).map(drop),
            Stage::Split => run_split(cfg).map(drop),
            Stage::Stats => run_stats(cfg).map(drop),
        };
        result.map_err(|error| StageError { stage, error })?;
    }
    Ok(())
}
