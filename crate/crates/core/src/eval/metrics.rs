//! Per-question scoring functions.

use std::collections::BTreeSet;

use super::embed::{cosine, EmbeddingProvider};
use crate::Result;

/// Trims, lower-cases and collapses internal whitespace.
pub fn normalize(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn exact_match(pred: &str, gold: &str) -> bool {
    normalize(pred) == normalize(gold)
}

fn word_set(normalized: &str) -> BTreeSet<&str> {
    normalized
        .split(' ')
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .collect()
}

/// Whether every word of the shorter answer occurs among the words of the
/// longer one. Equal strings always match; an empty side otherwise never
/// does.
pub fn substring_match(pred: &str, gold: &str) -> bool {
    let (p, g) = (normalize(pred), normalize(gold));
    if p == g {
        return true;
    }
    let (pw, gw) = (word_set(&p), word_set(&g));
    if pw.is_empty() || gw.is_empty() {
        return false;
    }
    let (short, long) = if pw.len() <= gw.len() { (&pw, &gw) } else { (&gw, &pw) };
    short.is_subset(long)
}

/// Cosine similarity of the provider's embeddings of `pred` and `gold`.
pub fn semantic_score(pred: &str, gold: &str, provider: &dyn EmbeddingProvider) -> Result<f64> {
    let v = provider.embed(&[pred.to_string(), gold.to_string()])?;
    Ok(cosine(&v[0], &v[1]))
}

/// Choice index named by a multiple-choice answer such as "B", "(c)" or
/// "The answer is C.". A lone letter wins; otherwise the first standalone
/// capital A-D is taken.
pub fn parse_choice_letter(pred: &str) -> Option<usize> {
    let index = |c: char| (c as u8 - b'A') as usize;
    let bare = pred.trim().trim_matches(|c: char| !c.is_alphanumeric());
    if bare.len() == 1 {
        let c = bare.chars().next()?.to_ascii_uppercase();
        return ('A'..='D').contains(&c).then(|| index(c));
    }
    pred.split(|c: char| !c.is_alphanumeric())
        .find_map(|tok| match tok {
            "A" | "B" | "C" | "D" => tok.chars().next(),
            _ => None,
        })
        .map(index)
}

/// `Some(correct)` for a parsable letter, `None` otherwise.
pub fn mc_score(pred: &str, gold_index: usize) -> Option<bool> {
    parse_choice_letter(pred).map(|i| i == gold_index)
}
