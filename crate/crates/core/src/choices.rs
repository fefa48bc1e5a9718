//! False-choice synthesis per answer category.
//!
//! * fixed: sample from the property's closed choice set
//! * date: dates within ten years of the gold, at the gold's precision
//! * number: values in `[i/2, max(1.5 i, i/2 + 2N)]` for gold `i`
//! * literal: other values of the same property found in the graph

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, Months, NaiveDate};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::kg::{decimal_places, format_number, CalendarDate, DatePrecision, ObjectValue, Statement};
use crate::kg::with_unit;
use crate::templates::{AnswerCategory, TemplateBank};
use crate::{Error, Result};

pub const DEFAULT_DISTRACTORS: usize = 3;
const DATE_WINDOW_YEARS: i32 = 10;
/// Beyond this many candidates, rejection sampling replaces enumeration.
const ENUMERATION_LIMIT: i64 = 4096;
/// Largest integer grid we sample on; keeps scaled decimals exact in f64.
const MAX_GRID: f64 = 9.0e15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DistractorSpec {
    /// Upper bound on the number of false choices.
    pub count: usize,
}

impl Default for DistractorSpec {
    fn default() -> Self {
        Self {
            count: DEFAULT_DISTRACTORS,
        }
    }
}

/// Value pools and exclusions for one question.
#[derive(Debug, Clone, Copy)]
pub struct DistractorContext<'a> {
    pub fixed_pool: Option<&'a [String]>,
    pub literal_pool: &'a [String],
    /// Rendered values that must never be offered as false: the gold answer
    /// and any other true value of the same subject and property.
    pub exclude: &'a BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Distractors {
    pub values: Vec<String>,
    pub degenerate_range: bool,
}

/// Sampling interval `[m, n]` for a positive numeric gold.
pub fn number_range(gold: f64, count: usize) -> (f64, f64) {
    let m = gold / 2.0;
    let n = (1.5 * gold).max(m + 2.0 * count as f64);
    (m, n)
}

/// The bank's category for `property_label`, adjusted to the answer's
/// actual value type: typed dates and numbers under a `literal` template are
/// treated as such, and `date`/`number` templates over untyped values fall
/// back to `literal`.
pub fn categorize(property_label: &str, answer: &ObjectValue, bank: &TemplateBank) -> Result<AnswerCategory> {
    let template = bank
        .get(property_label)
        .ok_or_else(|| Error::NotFound(format!("no template for property {property_label:?}")))?;
    Ok(match (template.answer_category, answer) {
        (AnswerCategory::Fixed, _) => AnswerCategory::Fixed,
        (_, ObjectValue::Date(_)) => AnswerCategory::Date,
        (_, ObjectValue::Number { .. }) => AnswerCategory::Number,
        (AnswerCategory::Date | AnswerCategory::Number, _) => AnswerCategory::Literal,
        (c, _) => c,
    })
}

/// Same-property value pools built from every statement of a graph.
#[derive(Debug, Clone, Default)]
pub struct LiteralPools {
    by_property: BTreeMap<String, Vec<String>>,
}

impl LiteralPools {
    pub fn from_statements<'a>(statements: impl IntoIterator<Item = &'a Statement>) -> Self {
        let mut sets: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for s in statements {
            sets.entry(s.property.id.clone()).or_default().insert(s.object.render());
        }
        Self {
            by_property: sets.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect(),
        }
    }

    pub fn get(&self, property_id: &str) -> &[String] {
        self.by_property.get(property_id).map_or(&[], Vec::as_slice)
    }
}

/// Up to `spec.count` distinct false choices for `answer`.
pub fn gen_false_choices<R: Rng + ?Sized>(
    answer: &ObjectValue,
    category: AnswerCategory,
    ctx: &DistractorContext<'_>,
    spec: &DistractorSpec,
    rng: &mut R,
) -> Distractors {
    let gold = answer.render();
    let mut exclude = ctx.exclude.clone();
    exclude.insert(gold.clone());
    let n = spec.count;
    match (category, answer) {
        (AnswerCategory::Fixed, _) => Distractors {
            values: from_pool(ctx.fixed_pool.unwrap_or(&[]), &exclude, n, rng, &gold),
            degenerate_range: false,
        },
        (AnswerCategory::Literal, _) => Distractors {
            values: from_pool(ctx.literal_pool, &exclude, n, rng, &gold),
            degenerate_range: false,
        },
        (AnswerCategory::Number, ObjectValue::Number { value, unit }) => {
            number_distractors(*value, unit.as_deref(), n, &exclude, rng)
        }
        (AnswerCategory::Date, ObjectValue::Date(date)) => Distractors {
            values: date_distractors(date, n, &exclude, rng),
            degenerate_range: false,
        },
        (c, _) => {
            log::warn!("answer {gold:?} is not a {} value; no distractors", c.as_str());
            Distractors::default()
        }
    }
}

fn from_pool<R: Rng + ?Sized>(
    pool: &[String],
    exclude: &BTreeSet<String>,
    n: usize,
    rng: &mut R,
    gold: &str,
) -> Vec<String> {
    let candidates: Vec<&String> = pool
        .iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|v| !exclude.contains(*v))
        .collect();
    if candidates.is_empty() {
        log::warn!("empty distractor pool for answer {gold:?}");
    }
    candidates.choose_multiple(rng, n).map(|s| (*s).clone()).collect()
}

/// Draws up to `n` distinct renderings of integers in `[lo, hi]`, skipping
/// any rendering in `exclude` or for which `render` returns `None`.
fn sample_grid<R, F>(lo: i64, hi: i64, n: usize, exclude: &BTreeSet<String>, rng: &mut R, render: F) -> Vec<String>
where
    R: Rng + ?Sized,
    F: Fn(i64) -> Option<String>,
{
    if lo > hi || n == 0 {
        return Vec::new();
    }
    let span = hi - lo + 1;
    if span <= ENUMERATION_LIMIT {
        let mut all: Vec<String> = (lo..=hi)
            .filter_map(&render)
            .filter(|s| !exclude.contains(s))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        all.shuffle(rng);
        all.truncate(n);
        return all;
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n && attempts < 1000 * n {
        attempts += 1;
        let Some(s) = render(rng.random_range(lo..=hi)) else {
            continue;
        };
        if !exclude.contains(&s) && seen.insert(s.clone()) {
            out.push(s);
        }
    }
    out
}

fn number_distractors<R: Rng + ?Sized>(
    gold: f64,
    unit: Option<&str>,
    n: usize,
    exclude: &BTreeSet<String>,
    rng: &mut R,
) -> Distractors {
    if !gold.is_finite() {
        return Distractors::default();
    }
    let degenerate = gold <= 0.0;
    let (m, hi) = if degenerate {
        (gold - n as f64, gold + n as f64)
    } else {
        number_range(gold, n)
    };
    // sample on the grid of the gold's decimal precision
    let mut decimals = decimal_places(gold);
    while decimals > 0 && hi.abs().max(m.abs()) * 10f64.powi(decimals as i32) > MAX_GRID {
        decimals -= 1;
    }
    let scale = 10f64.powi(decimals as i32);
    let lo_i = (m * scale).ceil() as i64;
    let hi_i = (hi * scale).floor() as i64;
    let gold_text = format_number(gold);
    let values = sample_grid(lo_i, hi_i, n, exclude, rng, |k| {
        let v = k as f64 / scale;
        if v < m || v > hi {
            return None;
        }
        let text = if v == 0.0 {
            format!("{:.*}", decimals, 0.0)
        } else {
            format!("{v:.decimals$}")
        };
        (text != gold_text).then(|| with_unit(text, unit))
    });
    Distractors {
        values,
        degenerate_range: degenerate,
    }
}

fn month_index(d: &CalendarDate) -> i64 {
    i64::from(d.year_value()) * 12 + i64::from(d.month_value().unwrap_or(1)) - 1
}

fn date_distractors<R: Rng + ?Sized>(
    gold: &CalendarDate,
    n: usize,
    exclude: &BTreeSet<String>,
    rng: &mut R,
) -> Vec<String> {
    let window = DATE_WINDOW_YEARS;
    match gold.precision() {
        DatePrecision::Year => {
            let y = i64::from(gold.year_value());
            sample_grid(y - i64::from(window), y + i64::from(window), n, exclude, rng, |k| {
                Some(CalendarDate::year(k as i32).render())
            })
        }
        DatePrecision::Month => {
            let g = month_index(gold);
            let w = i64::from(window) * 12;
            sample_grid(g - w, g + w, n, exclude, rng, |k| {
                CalendarDate::month(k.div_euclid(12) as i32, (k.rem_euclid(12) + 1) as u32)
                    .ok()
                    .map(|d| d.render())
            })
        }
        DatePrecision::Day => {
            let Some(g) = gold.to_naive() else {
                return Vec::new();
            };
            let months = Months::new(window as u32 * 12);
            let (Some(lo), Some(hi)) = (g.checked_sub_months(months), g.checked_add_months(months)) else {
                return Vec::new();
            };
            let base = lo.num_days_from_ce();
            let span = i64::from(hi.num_days_from_ce() - base);
            sample_grid(0, span, n, exclude, rng, |k| {
                NaiveDate::from_num_days_from_ce_opt(base + k as i32).map(|d| CalendarDate::from_naive(d).render())
            })
        }
    }
}

/// Places `gold` among the distractors at a uniformly random position.
/// Returns the choices and the gold's index.
pub fn assemble_choices<R: Rng + ?Sized>(gold: String, distractors: Vec<String>, rng: &mut R) -> (Vec<String>, usize) {
    let mut choices = distractors;
    let index = rng.random_range(0..=choices.len());
    choices.insert(index, gold);
    (choices, index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;
    use std::path::Path;

    fn num(v: f64) -> ObjectValue {
        ObjectValue::Number { value: v, unit: None }
    }

    fn run(answer: &ObjectValue, category: AnswerCategory, ctx: &DistractorContext<'_>, seed: u64) -> Distractors {
        gen_false_choices(answer, category, ctx, &DistractorSpec::default(), &mut substream(seed, &["t"]))
    }

    fn empty_ctx(exclude: &BTreeSet<String>) -> DistractorContext<'_> {
        DistractorContext {
            fixed_pool: None,
            literal_pool: &[],
            exclude,
        }
    }

    #[test]
    fn number_range_formula() {
        // m = 100/2 = 50, n = max(150, 50 + 6) = 150
        assert_eq!(number_range(100.0, 3), (50.0, 150.0));
        // m = 1, n = max(3, 1 + 6) = 7
        assert_eq!(number_range(2.0, 3), (1.0, 7.0));
    }

    #[test]
    fn integer_numbers() {
        let ex = BTreeSet::new();
        for seed in 0..50 {
            let d = run(&num(100.0), AnswerCategory::Number, &empty_ctx(&ex), seed);
            assert_eq!(d.values.len(), 3);
            for v in &d.values {
                let x: i64 = v.parse().unwrap();
                assert!((50..=150).contains(&x) && x != 100, "{v}");
            }
            let d = run(&num(2.0), AnswerCategory::Number, &empty_ctx(&ex), seed);
            for v in &d.values {
                let x: i64 = v.parse().unwrap();
                assert!((1..=7).contains(&x) && x != 2, "{v}");
            }
        }
    }

    #[test]
    fn decimal_numbers_keep_places_and_unit() {
        let ex = BTreeSet::new();
        let gold = ObjectValue::Number {
            value: 451.9,
            unit: Some("metre".into()),
        };
        let d = run(&gold, AnswerCategory::Number, &empty_ctx(&ex), 3);
        assert_eq!(d.values.len(), 3);
        for v in &d.values {
            let (n, unit) = v.split_once(' ').unwrap();
            assert_eq!(unit, "metre");
            assert_eq!(n.split_once('.').unwrap().1.len(), 1);
            let x: f64 = n.parse().unwrap();
            assert!((225.95..=677.85).contains(&x));
        }
    }

    #[test]
    fn degenerate_numbers() {
        let ex = BTreeSet::new();
        let d = run(&num(0.0), AnswerCategory::Number, &empty_ctx(&ex), 1);
        assert!(d.degenerate_range);
        assert_eq!(d.values.len(), 3);
        for v in &d.values {
            let x: i64 = v.parse().unwrap();
            assert!((-3..=3).contains(&x) && x != 0);
        }
        let d = run(&num(-5.0), AnswerCategory::Number, &empty_ctx(&ex), 1);
        assert!(d.values.iter().all(|v| (-8..=-2).contains(&v.parse::<i64>().unwrap())));
    }

    #[test]
    fn year_dates() {
        let ex = BTreeSet::new();
        let gold = ObjectValue::Date(CalendarDate::year(1889));
        for seed in 0..30 {
            let d = run(&gold, AnswerCategory::Date, &empty_ctx(&ex), seed);
            assert_eq!(d.values.len(), 3);
            for v in &d.values {
                let y: i32 = v.parse().unwrap();
                assert!((1879..=1899).contains(&y) && y != 1889);
            }
        }
    }

    #[test]
    fn day_and_month_dates_keep_precision() {
        let ex = BTreeSet::new();
        let gold = ObjectValue::Date(CalendarDate::day(1926, 10, 12).unwrap());
        let d = run(&gold, AnswerCategory::Date, &empty_ctx(&ex), 9);
        assert_eq!(d.values.len(), 3);
        for v in &d.values {
            let parsed = NaiveDate::parse_from_str(v, "%d %B %Y").unwrap();
            assert!(parsed >= NaiveDate::from_ymd_opt(1916, 10, 12).unwrap());
            assert!(parsed <= NaiveDate::from_ymd_opt(1936, 10, 12).unwrap());
        }
        let gold = ObjectValue::Date(CalendarDate::month(2000, 1).unwrap());
        let d = run(&gold, AnswerCategory::Date, &empty_ctx(&ex), 9);
        for v in &d.values {
            let (month, year) = v.split_once(' ').unwrap();
            assert!(month.chars().all(char::is_alphabetic));
            assert!((1990..=2010).contains(&year.parse::<i32>().unwrap()));
        }
    }

    #[test]
    fn fixed_pool_exhaustion() {
        let ex = BTreeSet::new();
        let pool = vec!["male".to_string(), "female".to_string()];
        let ctx = DistractorContext {
            fixed_pool: Some(&pool),
            literal_pool: &[],
            exclude: &ex,
        };
        let gold = ObjectValue::Literal { value: "male".into() };
        assert_eq!(run(&gold, AnswerCategory::Fixed, &ctx, 0).values, vec!["female"]);
    }

    #[test]
    fn literal_pool_respects_exclusions() {
        let pool: Vec<String> = ["Dutch", "French", "German", "Italian"].map(String::from).into();
        let ex = BTreeSet::from(["French".to_string()]);
        let ctx = DistractorContext {
            fixed_pool: None,
            literal_pool: &pool,
            exclude: &ex,
        };
        let gold = ObjectValue::Literal { value: "Dutch".into() };
        let mut got = run(&gold, AnswerCategory::Literal, &ctx, 0).values;
        got.sort();
        assert_eq!(got, vec!["German", "Italian"]);
        let none = DistractorContext {
            fixed_pool: None,
            literal_pool: &[],
            exclude: &ex,
        };
        assert!(run(&gold, AnswerCategory::Literal, &none, 0).values.is_empty());
    }

    #[test]
    fn categories_from_shipped_bank() {
        let bank = TemplateBank::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/templates.tsv")).unwrap();
        let lit = |s: &str| ObjectValue::Literal { value: s.into() };
        assert_eq!(categorize("country", &lit("Sweden"), &bank).unwrap(), AnswerCategory::Fixed);
        assert_eq!(categorize("height", &num(58.0), &bank).unwrap(), AnswerCategory::Number);
        assert_eq!(categorize("architect", &lit("César Pelli"), &bank).unwrap(), AnswerCategory::Literal);
        // typed values override a literal template, untyped ones fall back
        assert_eq!(
            categorize("named after", &ObjectValue::Date(CalendarDate::year(1900)), &bank).unwrap(),
            AnswerCategory::Date
        );
        assert_eq!(categorize("height", &lit("tall"), &bank).unwrap(), AnswerCategory::Literal);
        assert!(categorize("nope", &lit("x"), &bank).is_err());
    }

    #[test]
    fn gold_position_is_uniform() {
        // chi-square goodness of fit over 10^4 shuffles, 3 degrees of freedom;
        // 16.27 is the 0.999 quantile
        let mut counts = [0usize; 4];
        let mut rng = substream(42, &["chi"]);
        let trials = 10_000;
        for _ in 0..trials {
            let (choices, idx) = assemble_choices("g".into(), vec!["a".into(), "b".into(), "c".into()], &mut rng);
            assert_eq!(choices[idx], "g");
            counts[idx] += 1;
        }
        let expected = trials as f64 / 4.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 16.27, "chi2 = {chi2}, counts = {counts:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn numeric_distractors_stay_in_range(gold in 0.01f64..1.0e7, seed in any::<u64>()) {
            let ex = BTreeSet::new();
            let d = run(&num(gold), AnswerCategory::Number, &empty_ctx(&ex), seed);
            let (m, n) = number_range(gold, 3);
            let gold_text = format_number(gold);
            prop_assert!(d.values.len() <= 3);
            let unique: BTreeSet<_> = d.values.iter().collect();
            prop_assert_eq!(unique.len(), d.values.len());
            for v in &d.values {
                let x: f64 = v.parse().unwrap();
                prop_assert!(x >= m && x <= n, "{} outside [{}, {}]", x, m, n);
                prop_assert_ne!(v, &gold_text);
            }
        }
    }
}
