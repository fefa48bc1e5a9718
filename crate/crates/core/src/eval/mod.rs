//! Scoring model predictions against a generated dataset.
//!
//! Open-ended answers are scored by exact match, word containment and
//! embedding similarity; multiple-choice letters by index. Every metric is
//! reported overall and broken down by hop count, scene-graph use and image
//! source, each cell with its standard deviation and standard error.

pub mod embed;
pub mod metrics;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::QaItem;
use crate::{Error, Result};
use embed::{cosine, EmbeddingProvider};
use metrics::{exact_match, mc_score, substring_match};

pub const DEFAULT_TAU: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub question_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub letter: Option<String>,
}

impl Prediction {
    fn validate(&self) -> std::result::Result<(), String> {
        match (&self.text, &self.letter) {
            (Some(_), None) | (None, Some(_)) => Ok(()),
            _ => Err(format!("prediction {} needs exactly one of `text` and `letter`", self.question_id)),
        }
    }
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let p: Prediction = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        p.validate().map_err(parse_err)?;
        out.push(p);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Exact,
    Substring,
    Semantic,
    Mc,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Exact, Metric::Substring, Metric::Semantic, Metric::Mc];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Exact => "exact",
            Metric::Substring => "substring",
            Metric::Semantic => "semantic",
            Metric::Mc => "mc",
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown metric {s:?} (expected exact, substring, semantic or mc)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub metrics: BTreeSet<Metric>,
    /// Similarity at or above which a semantic score counts as correct.
    pub tau: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            metrics: Metric::ALL.into_iter().collect(),
            tau: DEFAULT_TAU,
        }
    }
}

/// Aggregate of one metric over one slice of the dataset. `sd` and `sem`
/// are on the percentage scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub mean: f64,
    pub accuracy_pct: f64,
    pub sd: f64,
    pub sem: f64,
}

/// Mean, population SD of the scores times 100, and SEM = SD / sqrt(n).
/// `None` for an empty slice.
pub fn aggregate(scores: &[f64]) -> Option<Cell> {
    if scores.is_empty() {
        return None;
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (100.0 * (s - mean)).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    Some(Cell {
        n: scores.len(),
        mean,
        accuracy_pct: 100.0 * mean,
        sd,
        sem: sd / n.sqrt(),
    })
}

/// Cell names in report order.
pub const CELLS: [&str; 8] = [
    "overall",
    "hops=1",
    "hops=2",
    "hops=3",
    "scene_graph=true",
    "scene_graph=false",
    "source=VG",
    "source=GLDv2",
];

fn cells_of(item: &QaItem) -> [String; 4] {
    [
        "overall".to_string(),
        format!("hops={}", item.hops),
        format!("scene_graph={}", item.uses_scene_graph),
        format!("source={}", item.source.as_str()),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub tau: f64,
    pub provider: Option<String>,
    pub n_predictions: usize,
    /// Letter predictions that named no choice; scored as wrong.
    pub unparsed: usize,
    /// Metric name to cell name to aggregate. `semantic` is thresholded at
    /// `tau`; `semantic_raw` averages the raw similarities.
    pub metrics: BTreeMap<String, BTreeMap<String, Cell>>,
}

pub fn evaluate(
    items: &[QaItem],
    predictions: &[Prediction],
    cfg: &EvalConfig,
    provider: Option<&dyn EmbeddingProvider>,
) -> Result<ScoreReport> {
    if !(cfg.tau.is_finite() && (-1.0..=1.0).contains(&cfg.tau)) {
        return Err(Error::Config(format!("tau must be in [-1, 1], got {}", cfg.tau)));
    }
    if cfg.metrics.contains(&Metric::Semantic) && provider.is_none() {
        return Err(Error::Config("the semantic metric needs an embedding provider".into()));
    }
    let by_id: HashMap<&str, &QaItem> = items.iter().map(|i| (i.question_id.as_str(), i)).collect();
    let unknown: Vec<&str> = predictions
        .iter()
        .map(|p| p.question_id.as_str())
        .filter(|id| !by_id.contains_key(id))
        .collect();
    if !unknown.is_empty() {
        return Err(Error::Input(format!("predictions for unknown question ids: {}", unknown.join(", "))));
    }
    let mut seen = BTreeSet::new();
    let dups: BTreeSet<&str> = predictions
        .iter()
        .map(|p| p.question_id.as_str())
        .filter(|id| !seen.insert(*id))
        .collect();
    if !dups.is_empty() {
        return Err(Error::Input(format!(
            "duplicate predictions for: {}",
            dups.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    for p in predictions {
        p.validate().map_err(Error::Input)?;
    }

    let mut similarity: HashMap<(&str, String), f64> = HashMap::new();
    if let (true, Some(provider)) = (cfg.metrics.contains(&Metric::Semantic), provider) {
        let mut texts: BTreeSet<String> = BTreeSet::new();
        for p in predictions {
            if let Some(t) = &p.text {
                texts.insert(t.clone());
                texts.insert(by_id[p.question_id.as_str()].answer_text());
            }
        }
        let texts: Vec<String> = texts.into_iter().collect();
        let vectors = provider.embed(&texts)?;
        let index: HashMap<&str, &Vec<f64>> = texts.iter().map(String::as_str).zip(&vectors).collect();
        for p in predictions {
            if let Some(t) = &p.text {
                let gold = by_id[p.question_id.as_str()].answer_text();
                let s = cosine(index[t.as_str()], index[gold.as_str()]);
                similarity.insert((p.question_id.as_str(), gold), s);
            }
        }
    }

    let mut scores: BTreeMap<&str, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    let mut push = |metric: &'static str, item: &QaItem, s: f64| {
        for cell in cells_of(item) {
            scores.entry(metric).or_default().entry(cell).or_default().push(s);
        }
    };
    let as_score = |b: bool| if b { 1.0 } else { 0.0 };
    let mut unparsed = 0;
    for p in predictions {
        let item = by_id[p.question_id.as_str()];
        let gold = item.answer_text();
        if let Some(text) = &p.text {
            if cfg.metrics.contains(&Metric::Exact) {
                push("exact", item, as_score(exact_match(text, &gold)));
            }
            if cfg.metrics.contains(&Metric::Substring) {
                push("substring", item, as_score(substring_match(text, &gold)));
            }
            if cfg.metrics.contains(&Metric::Semantic) {
                let s = similarity[&(p.question_id.as_str(), gold)];
                push("semantic", item, as_score(s >= cfg.tau));
                push("semantic_raw", item, s);
            }
        }
        if let (Some(letter), true) = (&p.letter, cfg.metrics.contains(&Metric::Mc)) {
            let s = match mc_score(letter, item.gold_index) {
                Some(ok) => as_score(ok),
                None => {
                    unparsed += 1;
                    0.0
                }
            };
            push("mc", item, s);
        }
    }
    let metrics = scores
        .into_iter()
        .map(|(m, cells)| {
            let cells = cells
                .into_iter()
                .filter_map(|(c, s)| aggregate(&s).map(|a| (c, a)))
                .collect();
            (m.to_string(), cells)
        })
        .collect();
    Ok(ScoreReport {
        tau: cfg.tau,
        provider: provider.filter(|_| cfg.metrics.contains(&Metric::Semantic)).map(|p| p.name()),
        n_predictions: predictions.len(),
        unparsed,
        metrics,
    })
}

/// Aligned text table: one row per metric, `accuracy (SEM)` per cell.
pub fn render_table(report: &ScoreReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "semantic threshold tau = {:.2}{}",
        report.tau,
        report.provider.as_ref().map(|p| format!(" (provider: {p})")).unwrap_or_default()
    );
    let _ = writeln!(out, "predictions: {}  unparsed letters: {}", report.n_predictions, report.unparsed);
    let cells: Vec<&str> = CELLS
        .iter()
        .copied()
        .filter(|c| report.metrics.values().any(|m| m.contains_key(*c)))
        .collect();
    let mut rows = vec![std::iter::once("metric".to_string()).chain(cells.iter().map(|c| c.to_string())).collect::<Vec<_>>()];
    for (metric, m) in &report.metrics {
        let mut row = vec![metric.clone()];
        for c in &cells {
            row.push(match m.get(*c) {
                Some(cell) => format!("{:.1} ({:.1}) n={}", cell.accuracy_pct, cell.sem, cell.n),
                None => "-".into(),
            });
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
        .collect();
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(v, w)| format!("{v:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}
