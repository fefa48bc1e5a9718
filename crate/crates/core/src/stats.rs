//! Summary statistics of a generated dataset.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{read_jsonl, QaItem};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_images: usize,
    pub n_questions: usize,
    /// Questions with 1, 2 and 3 hops.
    pub n_per_hop: [usize; 3],
    pub n_unique_questions: usize,
    pub n_unique_answers: usize,
    pub n_unique_choices: usize,
    pub avg_question_len_words: f64,
    pub avg_answer_len_words: f64,
    /// Questions per domain; a question counts once for each of its domains.
    pub per_domain: BTreeMap<String, usize>,
    pub per_source: BTreeMap<String, usize>,
}

fn words(s: &str) -> usize {
    s.split_whitespace().count()
}

pub fn compute(items: &[QaItem]) -> Result<DatasetStats> {
    if items.is_empty() {
        return Err(Error::Input("dataset is empty".into()));
    }
    let mut n_per_hop = [0; 3];
    let mut images = BTreeSet::new();
    let mut questions = BTreeSet::new();
    let mut answers = BTreeSet::new();
    let mut choices = BTreeSet::new();
    let mut per_domain = BTreeMap::new();
    let mut per_source = BTreeMap::new();
    let (mut q_words, mut a_words) = (0, 0);
    for item in items {
        match item.hops {
            1..=3 => n_per_hop[item.hops - 1] += 1,
            h => {
                return Err(Error::Input(format!("question {} has {h} hops", item.question_id)));
            }
        }
        images.insert(item.image_id.as_str());
        questions.insert(item.question.as_str());
        let answer = item.answer_text();
        a_words += words(&answer);
        answers.insert(answer);
        choices.extend(item.choices.iter().map(String::as_str));
        q_words += words(&item.question);
        for d in &item.domains {
            *per_domain.entry(d.name().to_string()).or_insert(0) += 1;
        }
        *per_source.entry(item.source.as_str().to_string()).or_insert(0) += 1;
    }
    let n = items.len() as f64;
    Ok(DatasetStats {
        n_images: images.len(),
        n_questions: items.len(),
        n_per_hop,
        n_unique_questions: questions.len(),
        n_unique_answers: answers.len(),
        n_unique_choices: choices.len(),
        avg_question_len_words: q_words as f64 / n,
        avg_answer_len_words: a_words as f64 / n,
        per_domain,
        per_source,
    })
}

pub fn stats(path: &Path) -> Result<DatasetStats> {
    let items = read_jsonl(path)?;
    if items.is_empty() {
        return Err(Error::Input(format!("{} contains no questions", path.display())));
    }
    compute(&items)
}
