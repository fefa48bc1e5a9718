//! Generated question records and their JSONL serialization.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::kg::{EntityId, ObjectValue, PropertyId};
use crate::linker::ImageSource;
use crate::templates::{AnswerCategory, DomainTag};
use crate::{Error, Result};

/// One hop of a property path. `via` is the entity reached by this hop and
/// is present on every step except the last.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PathStep {
    pub property: PropertyId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub via: Option<EntityId>,
}

/// Properties traversed from the main object, innermost first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PropertyPath {
    pub steps: Vec<PathStep>,
}

impl PropertyPath {
    pub fn hops(&self) -> usize {
        self.steps.len()
    }

    pub fn outermost(&self) -> &PropertyId {
        &self.steps.last().expect("property path is never empty").property
    }

    pub fn labels(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.property.label.as_str()).collect()
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaItem {
    pub question_id: String,
    pub image_id: String,
    pub source: ImageSource,
    pub main_object: EntityId,
    pub path: PropertyPath,
    pub hops: usize,
    pub uses_scene_graph: bool,
    pub question: String,
    pub answer: ObjectValue,
    pub answer_category: AnswerCategory,
    pub choices: Vec<String>,
    pub gold_index: usize,
    pub domains: BTreeSet<DomainTag>,
    pub group_key: String,
    /// Numeric distractors came from the widened interval used for
    /// non-positive golds.
    #[serde(default, skip_serializing_if = "is_false")]
    pub degenerate_range: bool,
}

impl QaItem {
    /// The gold answer as it appears among the choices.
    pub fn answer_text(&self) -> String {
        self.answer.render()
    }
}

pub fn read_jsonl(path: &Path) -> Result<Vec<QaItem>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut items = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

pub fn write_jsonl(path: &Path, items: &[QaItem]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Writes `value` as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
