//! Image-level train/test split stratified by answer category.
//!
//! Each image is keyed by its two most frequent qualifying answers
//! (`paris|france`); images sharing a key form a category, and each category
//! is split on its own so both halves see the same answer mix.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::QaItem;
use crate::rng::substream;
use crate::{Error, Result};

pub const DEFAULT_TRAIN_RATIO: f64 = 0.7;
pub const SINGLETON_CATEGORY: &str = "__singleton__";
pub const NO_ANSWER: &str = "∅";

/// Answers making up at least 1% of all answer occurrences.
pub fn qualifying_answers(items: &[QaItem]) -> BTreeSet<String> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for item in items {
        *counts.entry(item.answer_text()).or_insert(0) += 1;
    }
    let total = items.len();
    counts
        .into_iter()
        .filter(|(_, n)| n * 100 >= total)
        .map(|(a, _)| a)
        .collect()
}

/// `a1|a2` from the image's two most frequent qualifying answers, ties
/// lexicographic, padded with [`NO_ANSWER`].
pub fn categorize_image<'a>(answers: impl IntoIterator<Item = &'a str>, qualifying: &BTreeSet<String>) -> String {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for a in answers {
        if qualifying.contains(a) {
            *counts.entry(a).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let pick = |i: usize| ranked.get(i).map_or(NO_ANSWER, |r| r.0);
    format!("{}|{}", pick(0), pick(1))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySplit {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<QaItem>,
    pub test: Vec<QaItem>,
    /// Category key to its train and test image ids.
    pub manifest: BTreeMap<String, CategorySplit>,
}

/// Number of training members for a category of `n` images.
pub fn train_count(n: usize, ratio: f64) -> usize {
    if n == 0 {
        return 0;
    }
    let k = ((ratio * n as f64) + 1e-9).floor() as usize;
    let k = k.max(1);
    if n >= 2 { k.min(n - 1) } else { k }
}

pub fn split(items: &[QaItem], ratio: f64, seed: u64) -> Result<DatasetSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    let qualifying = qualifying_answers(items);
    let mut answers_by_image: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for item in items {
        answers_by_image.entry(&item.image_id).or_default().push(item.answer_text());
    }
    let mut categories: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for (image, answers) in &answers_by_image {
        let key = categorize_image(answers.iter().map(String::as_str), &qualifying);
        categories.entry(key).or_default().push(image);
    }
    let singles: Vec<&str> = categories
        .iter()
        .filter(|(_, members)| members.len() == 1)
        .map(|(_, members)| members[0])
        .collect();
    categories.retain(|_, members| members.len() > 1);
    if !singles.is_empty() {
        categories.entry(SINGLETON_CATEGORY.to_string()).or_default().extend(singles);
    }

    let mut manifest = BTreeMap::new();
    let mut in_train: HashMap<&str, bool> = HashMap::new();
    for (key, mut members) in categories {
        members.sort_unstable();
        members.shuffle(&mut substream(seed, &["split", &key]));
        let k = train_count(members.len(), ratio);
        let (train, test) = members.split_at(k);
        for image in train {
            in_train.insert(image, true);
        }
        for image in test {
            in_train.insert(image, false);
        }
        let mut entry = CategorySplit {
            train: train.iter().map(|s| s.to_string()).collect(),
            test: test.iter().map(|s| s.to_string()).collect(),
        };
        entry.train.sort();
        entry.test.sort();
        manifest.insert(key, entry);
    }
    let (train, test) = items.iter().cloned().partition(|i| in_train[i.image_id.as_str()]);
    Ok(DatasetSplit { train, test, manifest })
}

/// Distance between the answer distributions of two splits: for each of the
/// `top_groups` largest groups (by combined size), the L1 distance between
/// the normalized frequencies of its `top_answers` most frequent answers in
/// each split, averaged over groups. Groups absent from either split count
/// as distance 2.
pub fn answer_distribution_l1(train: &[QaItem], test: &[QaItem], top_groups: usize, top_answers: usize) -> f64 {
    type Counts<'a> = BTreeMap<&'a str, BTreeMap<String, usize>>;
    fn count(items: &[QaItem]) -> Counts<'_> {
        let mut c: Counts<'_> = BTreeMap::new();
        for i in items {
            *c.entry(&i.group_key).or_default().entry(i.answer_text()).or_insert(0) += 1;
        }
        c
    }
    let (a, b) = (count(train), count(test));
    let mut all: Counts<'_> = a.clone();
    for (g, answers) in &b {
        let e = all.entry(g).or_default();
        for (ans, n) in answers {
            *e.entry(ans.clone()).or_insert(0) += n;
        }
    }
    let mut groups: Vec<(&str, usize)> = all.iter().map(|(g, m)| (*g, m.values().sum())).collect();
    groups.sort_by(|x, y| y.1.cmp(&x.1).then_with(|| x.0.cmp(y.0)));
    groups.truncate(top_groups);
    if groups.is_empty() {
        return 0.0;
    }
    let empty = BTreeMap::new();
    let mut total = 0.0;
    for (g, _) in &groups {
        let mut ranked: Vec<(&String, &usize)> = all[g].iter().collect();
        ranked.sort_by(|x, y| y.1.cmp(x.1).then_with(|| x.0.cmp(y.0)));
        ranked.truncate(top_answers);
        let (ca, cb) = (a.get(g).unwrap_or(&empty), b.get(g).unwrap_or(&empty));
        let na: usize = ranked.iter().map(|(ans, _)| ca.get(*ans).copied().unwrap_or(0)).sum();
        let nb: usize = ranked.iter().map(|(ans, _)| cb.get(*ans).copied().unwrap_or(0)).sum();
        if na == 0 || nb == 0 {
            total += 2.0;
            continue;
        }
        total += ranked
            .iter()
            .map(|(ans, _)| {
                let p = ca.get(*ans).copied().unwrap_or(0) as f64 / na as f64;
                let q = cb.get(*ans).copied().unwrap_or(0) as f64 / nb as f64;
                (p - q).abs()
            })
            .sum::<f64>();
    }
    total / groups.len() as f64
}
