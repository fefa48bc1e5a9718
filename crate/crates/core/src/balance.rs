//! Answer-distribution balancing.
//!
//! Questions are grouped by their outermost property. Each group keeps its
//! `top_k` most frequent answers, then every round caps each answer's
//! frequency relative to the next-ranked answer and to the group's tail,
//! removing surplus questions from the images that have the most questions.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::QaItem;
use crate::rng::substream;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalanceConfig {
    pub rounds: usize,
    pub top_k: usize,
    /// Largest allowed frequency ratio between consecutive ranked answers.
    pub ratio_max: f64,
    /// Largest allowed head/tail frequency ratio within a group.
    pub head_tail_target: f64,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        Self {
            rounds: 20,
            top_k: 10,
            ratio_max: 1.5,
            head_tail_target: 3.0,
        }
    }
}

impl BalanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k < 2 {
            return Err(Error::Config(format!("balance top_k must be at least 2, got {}", self.top_k)));
        }
        if !(self.ratio_max.is_finite() && self.ratio_max > 1.0) {
            return Err(Error::Config(format!("balance ratio_max must be > 1, got {}", self.ratio_max)));
        }
        if !(self.head_tail_target.is_finite() && self.head_tail_target >= 1.0) {
            return Err(Error::Config(format!(
                "balance head_tail_target must be >= 1, got {}",
                self.head_tail_target
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerGroup {
    pub group_key: String,
    /// Descending by frequency, ties lexicographic.
    pub histogram: Vec<(String, usize)>,
    /// Question ids per answer, sorted.
    pub question_index: BTreeMap<String, Vec<String>>,
}

impl AnswerGroup {
    pub fn head_freq(&self) -> usize {
        self.histogram.first().map_or(0, |h| h.1)
    }

    pub fn tail_freq(&self) -> usize {
        self.histogram.last().map_or(0, |h| h.1)
    }

    pub fn stats(&self) -> GroupStats {
        let (head, tail) = (self.head_freq(), self.tail_freq());
        GroupStats {
            head_freq: head,
            tail_freq: tail,
            ratio: if tail == 0 { 0.0 } else { head as f64 / tail as f64 },
        }
    }
}

/// One group per distinct group key, ordered by key.
pub fn build_groups(items: &[QaItem]) -> Vec<AnswerGroup> {
    let mut index: BTreeMap<&str, BTreeMap<String, Vec<String>>> = BTreeMap::new();
    for item in items {
        index
            .entry(&item.group_key)
            .or_default()
            .entry(item.answer_text())
            .or_default()
            .push(item.question_id.clone());
    }
    index
        .into_iter()
        .map(|(key, mut question_index)| {
            for ids in question_index.values_mut() {
                ids.sort();
            }
            let mut histogram: Vec<(String, usize)> =
                question_index.iter().map(|(a, ids)| (a.clone(), ids.len())).collect();
            histogram.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            AnswerGroup {
                group_key: key.to_string(),
                histogram,
                question_index,
            }
        })
        .collect()
}

/// Drops answers ranked below `k`; returns the reduced group and the ids of
/// the removed questions.
pub fn truncate_top_k(group: &AnswerGroup, k: usize) -> (AnswerGroup, Vec<String>) {
    let mut kept = group.clone();
    let mut removed = Vec::new();
    for (answer, _) in kept.histogram.split_off(k.min(group.histogram.len())) {
        removed.extend(kept.question_index.remove(&answer).unwrap_or_default());
    }
    removed.sort();
    (kept, removed)
}

/// Frequency each ranked answer may keep in one round. The tail answer is
/// never reduced.
pub fn round_targets(freqs: &[usize], cfg: &BalanceConfig) -> Vec<usize> {
    let Some(&tail) = freqs.last() else {
        return Vec::new();
    };
    let cap = (cfg.head_tail_target * tail as f64).floor() as usize;
    freqs
        .iter()
        .enumerate()
        .map(|(j, &f)| match freqs.get(j + 1) {
            Some(&next) => {
                let step = (cfg.ratio_max * next as f64).ceil() as usize;
                f.min(tail.max(step.min(cap)))
            }
            None => f,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub head_freq: usize,
    pub tail_freq: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRound {
    pub removed: usize,
    pub head_freq: usize,
    pub tail_freq: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub removed: usize,
    pub questions_after: usize,
    pub groups: BTreeMap<String, GroupRound>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub config: BalanceConfig,
    pub questions_before: usize,
    pub questions_after: usize,
    /// Question ids removed by top-k truncation, per group.
    pub truncated: BTreeMap<String, Vec<String>>,
    /// Per-group statistics after truncation, before round 1.
    pub initial: BTreeMap<String, GroupStats>,
    pub rounds: Vec<RoundReport>,
    /// Images that lost all their questions.
    pub images_dropped: Vec<String>,
}

fn image_counts(items: &[QaItem]) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for item in items {
        *counts.entry(item.image_id.clone()).or_insert(0) += 1;
    }
    counts
}

/// Picks `n` questions with answer `answer` to remove, always from the image
/// that currently has the most questions (ties by image id). Within an image
/// the order is a seeded shuffle of the question ids.
fn pick_victims(
    ids: &[String],
    n: usize,
    image_of: &HashMap<&str, &str>,
    counts: &mut HashMap<String, usize>,
    seed: u64,
    labels: &[&str],
) -> Vec<String> {
    let mut buckets: BTreeMap<&str, Vec<&String>> = BTreeMap::new();
    for id in ids {
        buckets.entry(image_of[id.as_str()]).or_default().push(id);
    }
    for (image, bucket) in buckets.iter_mut() {
        let mut l = labels.to_vec();
        l.push(image);
        bucket.shuffle(&mut substream(seed, &l));
        bucket.reverse(); // pop from the back in shuffled order
    }
    let mut queue: BTreeSet<(Reverse<usize>, &str)> =
        buckets.keys().map(|img| (Reverse(counts[*img]), *img)).collect();
    let mut victims = Vec::with_capacity(n);
    while victims.len() < n {
        let Some((Reverse(count), image)) = queue.pop_first() else {
            break;
        };
        let bucket = buckets.get_mut(image).expect("queued images have buckets");
        let id = bucket.pop().expect("queued buckets are non-empty");
        victims.push(id.clone());
        let count = count - 1;
        counts.insert(image.to_string(), count);
        if !bucket.is_empty() {
            queue.insert((Reverse(count), image));
        }
    }
    victims
}

/// One balancing pass over every group, in group-key order. `round` only
/// labels the random substreams and the report.
pub fn balance_round(items: &[QaItem], cfg: &BalanceConfig, seed: u64, round: usize) -> (Vec<QaItem>, RoundReport) {
    let mut counts = image_counts(items);
    let image_of: HashMap<&str, &str> = items
        .iter()
        .map(|i| (i.question_id.as_str(), i.image_id.as_str()))
        .collect();
    let round_label = round.to_string();
    let mut removed: HashSet<String> = HashSet::new();
    let mut groups = BTreeMap::new();
    for group in build_groups(items) {
        let freqs: Vec<usize> = group.histogram.iter().map(|h| h.1).collect();
        let targets = round_targets(&freqs, cfg);
        let mut group_removed = 0;
        let mut after = Vec::with_capacity(freqs.len());
        for ((answer, f), target) in group.histogram.iter().zip(targets) {
            if *f > target {
                let victims = pick_victims(
                    &group.question_index[answer],
                    f - target,
                    &image_of,
                    &mut counts,
                    seed,
                    &["balance", &round_label, &group.group_key, answer],
                );
                group_removed += victims.len();
                removed.extend(victims);
            }
            after.push(target);
        }
        let (head, tail) = (after.first().copied().unwrap_or(0), after.last().copied().unwrap_or(0));
        groups.insert(
            group.group_key.clone(),
            GroupRound {
                removed: group_removed,
                head_freq: head,
                tail_freq: tail,
                ratio: if tail == 0 { 0.0 } else { head as f64 / tail as f64 },
            },
        );
    }
    let kept: Vec<QaItem> = items
        .iter()
        .filter(|i| !removed.contains(&i.question_id))
        .cloned()
        .collect();
    let report = RoundReport {
        round,
        removed: removed.len(),
        questions_after: kept.len(),
        groups,
    };
    (kept, report)
}

/// Truncates every group to its top-k answers once, then runs `cfg.rounds`
/// balancing rounds. Input order is preserved among surviving items.
pub fn balance(items: &[QaItem], cfg: &BalanceConfig, seed: u64) -> Result<(Vec<QaItem>, BalanceReport)> {
    cfg.validate()?;
    let mut truncated = BTreeMap::new();
    let mut drop: HashSet<String> = HashSet::new();
    let mut initial = BTreeMap::new();
    if cfg.rounds > 0 {
        for group in build_groups(items) {
            let (kept, removed) = truncate_top_k(&group, cfg.top_k);
            initial.insert(group.group_key.clone(), kept.stats());
            drop.extend(removed.iter().cloned());
            truncated.insert(group.group_key, removed);
        }
    }
    let mut current: Vec<QaItem> = items
        .iter()
        .filter(|i| !drop.contains(&i.question_id))
        .cloned()
        .collect();
    let mut rounds = Vec::with_capacity(cfg.rounds);
    for round in 1..=cfg.rounds {
        let (next, report) = balance_round(&current, cfg, seed, round);
        log::debug!("balance round {round}: removed {}", report.removed);
        current = next;
        rounds.push(report);
    }
    let before: BTreeSet<&str> = items.iter().map(|i| i.image_id.as_str()).collect();
    let after: BTreeSet<&str> = current.iter().map(|i| i.image_id.as_str()).collect();
    let report = BalanceReport {
        config: cfg.clone(),
        questions_before: items.len(),
        questions_after: current.len(),
        truncated,
        initial,
        rounds,
        images_dropped: before.difference(&after).map(|s| s.to_string()).collect(),
    };
    Ok((current, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::testing::item;

    fn dataset(spec: &[(&str, &[(&str, usize)])]) -> Vec<QaItem> {
        let mut out = Vec::new();
        for (group, answers) in spec {
            for (answer, n) in *answers {
                for k in 0..*n {
                    let qid = format!("{group}-{answer}-{k:03}");
                    out.push(item(&qid, &format!("img{}", k % 7), group, answer));
                }
            }
        }
        out
    }

    fn hist(g: &AnswerGroup) -> Vec<(&str, usize)> {
        g.histogram.iter().map(|(a, n)| (a.as_str(), *n)).collect()
    }

    #[test]
    fn groups_and_histograms() {
        let items = dataset(&[("country", &[("a", 2), ("b", 1)]), ("capital", &[("x", 1)])]);
        let groups = build_groups(&items);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].group_key, "capital");
        assert_eq!(hist(&groups[1]), vec![("a", 2), ("b", 1)]);
        // ties are lexicographic
        let items = dataset(&[("g", &[("z", 2), ("m", 2), ("q", 3)])]);
        assert_eq!(hist(&build_groups(&items)[0]), vec![("q", 3), ("m", 2), ("z", 2)]);
    }

    #[test]
    fn truncation() {
        let answers: Vec<(String, usize)> = (0..12).map(|i| (format!("a{i:02}"), 20 - i)).collect();
        let spec: Vec<(&str, usize)> = answers.iter().map(|(a, n)| (a.as_str(), *n)).collect();
        let items = dataset(&[("g", &spec)]);
        let group = &build_groups(&items)[0];
        let (kept, removed) = truncate_top_k(group, 10);
        assert_eq!(kept.histogram.len(), 10);
        assert_eq!(removed.len(), 10 + 9);
        assert!(removed.iter().all(|id| id.starts_with("g-a10") || id.starts_with("g-a11")));

        let small = dataset(&[("g", &[("a", 3), ("b", 2), ("c", 2), ("d", 1)])]);
        let group = &build_groups(&small)[0];
        let (kept, removed) = truncate_top_k(group, 10);
        assert_eq!(&kept, group);
        assert!(removed.is_empty());
    }

    #[test]
    fn round_target_examples() {
        let cfg = |h: f64| BalanceConfig {
            ratio_max: 1.5,
            head_tail_target: h,
            ..BalanceConfig::default()
        };
        assert_eq!(round_targets(&[10, 4, 2], &cfg(2.0)), vec![4, 3, 2]);
        assert_eq!(round_targets(&[10, 4, 2], &cfg(10.0)), vec![6, 3, 2]);
        assert_eq!(round_targets(&[2, 2], &cfg(3.0)), vec![2, 2]);
        assert_eq!(round_targets(&[], &cfg(3.0)), Vec::<usize>::new());
    }

    #[test]
    fn round_applies_targets() {
        let cfg = BalanceConfig {
            ratio_max: 1.5,
            head_tail_target: 2.0,
            ..BalanceConfig::default()
        };
        let items = dataset(&[("g", &[("a", 10), ("b", 4), ("c", 2)])]);
        let (kept, report) = balance_round(&items, &cfg, 1, 1);
        assert_eq!(hist(&build_groups(&kept)[0]), vec![("a", 4), ("b", 3), ("c", 2)]);
        assert_eq!(report.removed, 7);
        assert_eq!(report.groups["g"].ratio, 2.0);

        let uniform = dataset(&[("g", &[("a", 2), ("b", 2)])]);
        assert_eq!(balance_round(&uniform, &cfg, 1, 1).0, uniform);
        assert!(balance_round(&[], &cfg, 1, 1).0.is_empty());
    }

    #[test]
    fn victims_come_from_busiest_images() {
        // img-big has 5 questions (3 answer "a"), the others one "a" each.
        let mut items = Vec::new();
        for k in 0..3 {
            items.push(item(&format!("big-a{k}"), "img-big", "g", "a"));
        }
        items.push(item("big-x", "img-big", "h", "x"));
        items.push(item("big-y", "img-big", "h", "y"));
        for k in 0..3 {
            items.push(item(&format!("s{k}-a"), &format!("img-s{k}"), "g", "a"));
        }
        items.push(item("t-b", "img-t", "g", "b"));
        let cfg = BalanceConfig {
            head_tail_target: 3.0,
            ..BalanceConfig::default()
        };
        // a: 6 -> max(1, min(ceil(1.5), 3)) = 2, so 4 victims
        let (kept, report) = balance_round(&items, &cfg, 9, 1);
        assert_eq!(report.groups["g"].removed, 4);
        let removed: BTreeSet<&str> = items
            .iter()
            .filter(|i| !kept.contains(i))
            .map(|i| i.question_id.as_str())
            .collect();
        // counts: big 5, s0..s2 1 each. big is drained to 2 (3 removals, the
        // third tied at 3 vs 1), then the smallest-id singleton goes.
        assert!(removed.contains("big-a0") && removed.contains("big-a1") && removed.contains("big-a2"));
        assert!(removed.contains("s0-a"));
    }

    #[test]
    fn balance_is_deterministic_and_monotone() {
        let items = dataset(&[
            ("g1", &[("a", 80), ("b", 30), ("c", 9), ("d", 4)]),
            ("g2", &[("x", 40), ("y", 2)]),
        ]);
        let cfg = BalanceConfig::default();
        let (a, ra) = balance(&items, &cfg, 5).unwrap();
        let (b, rb) = balance(&items, &cfg, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        let mut prev = items.len();
        for r in &ra.rounds {
            assert!(r.questions_after <= prev);
            prev = r.questions_after;
            for g in r.groups.values() {
                assert!(g.ratio <= cfg.head_tail_target);
            }
        }
        for g in build_groups(&a) {
            assert!(g.stats().ratio <= 3.0);
        }
    }

    #[test]
    fn zero_rounds_is_identity() {
        let items = dataset(&[("g", &[("a", 50), ("b", 1)])]);
        let cfg = BalanceConfig {
            rounds: 0,
            ..BalanceConfig::default()
        };
        let (out, report) = balance(&items, &cfg, 1).unwrap();
        assert_eq!(out, items);
        assert!(report.rounds.is_empty());
        assert!(report.truncated.is_empty());
    }

    #[test]
    fn invalid_config() {
        for cfg in [
            BalanceConfig { top_k: 1, ..Default::default() },
            BalanceConfig { ratio_max: 1.0, ..Default::default() },
            BalanceConfig { head_tail_target: 0.5, ..Default::default() },
        ] {
            assert!(matches!(balance(&[], &cfg, 0), Err(Error::Config(_))));
        }
    }
}
