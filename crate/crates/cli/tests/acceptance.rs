//! Acceptance checks, one PASS/FAIL line each. Runs under `cargo test` with
//! its own harness so the lines always show up in the test log.
//!
//! Set `KGVQA_BLESS=1` to rewrite the stub-similarity golden file.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use kgvqa_core::balance::{build_groups, balance_round, truncate_top_k, BalanceConfig};
use kgvqa_core::choices::{gen_false_choices, DistractorContext, DistractorSpec};
use kgvqa_core::dataset::{read_jsonl, PathStep, PropertyPath, QaItem};
use kgvqa_core::eval::embed::{EmbeddingProvider, StubProvider};
use kgvqa_core::eval::metrics::{exact_match, semantic_score, substring_match};
use kgvqa_core::eval::{aggregate, evaluate, EvalConfig, Prediction, DEFAULT_TAU};
use kgvqa_core::kg::{CalendarDate, EntityId, ObjectValue, PropertyId};
use kgvqa_core::linker::ImageSource;
use kgvqa_core::rng::substream;
use kgvqa_core::split::answer_distribution_l1;
use kgvqa_core::templates::AnswerCategory;
use rand::Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn kgvqa(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_kgvqa"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("run kgvqa")
}

fn run_fixture(out: &Path, subcommand: &str, extra: &[&str]) -> Result<Duration, String> {
    let config = data("pipeline.toml");
    let mut args = vec![subcommand, "--config", config.to_str().unwrap(), "--output-dir", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let start = Instant::now();
    let o = kgvqa(&args);
    let took = start.elapsed();
    if !o.status.success() {
        return Err(format!("kgvqa {subcommand} failed: {}", String::from_utf8_lossy(&o.stderr)));
    }
    Ok(took)
}

fn load(path: &Path) -> Result<Vec<QaItem>, String> {
    read_jsonl(path).map_err(|e| e.to_string())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn find<'a>(items: &'a [QaItem], question: &str) -> Option<&'a QaItem> {
    items.iter().find(|i| i.question == question)
}

fn church_questions(dir: &Path) -> Outcome {
    let out = dir.join("generated");
    let took = run_fixture(&out, "generate", &["--max-hops", "2"])?;
    let items = load(&out.join("raw.jsonl"))?;
    let church: Vec<QaItem> = items.into_iter().filter(|i| i.main_object.as_str() == "Q1758990").collect();
    for (q, a) in [
        ("How high is this church?", "58 metre"),
        ("What is the capital of the country where this church is located?", "Stockholm"),
    ] {
        let item = find(&church, q).ok_or_else(|| format!("missing {q:?}"))?;
        ensure(item.answer_text() == a, || format!("{q:?} answered {:?}", item.answer_text()))?;
    }
    ensure(took < Duration::from_secs(5), || format!("generate took {took:?}"))?;
    Ok(format!("both strings byte-exact with gold answers, generate ran in {:.2}s", took.as_secs_f64()))
}

fn skyscraper_nesting(dir: &Path) -> Outcome {
    let items = load(&dir.join("generated/raw.jsonl"))?;
    let tower: Vec<QaItem> = items.into_iter().filter(|i| i.main_object.as_str() == "Q83063").collect();
    let one = find(&tower, "Who designed this skyscraper?").ok_or("missing one-hop architect question")?;
    ensure(one.answer_text() == "César Pelli", || format!("answer {:?}", one.answer_text()))?;
    let two = tower
        .iter()
        .find(|i| i.hops == 2 && i.path.steps[0].property.label == "architect" && i.question.contains("the architect of this skyscraper"))
        .ok_or("no two-hop question nests `the architect of __`")?;
    Ok(format!("{:?} -> {:?}; {:?} -> {:?}", one.question, one.answer_text(), two.question, two.answer_text()))
}

const MONTHS: [&str; 12] = [
    "January", "February", "March", "April", "May", "June", "July", "August", "September", "October", "November", "December",
];

/// (year, month, day) of a rendered date; missing parts are 0.
fn parse_rendered_date(s: &str) -> Option<(i32, u32, u32)> {
    let parts: Vec<&str> = s.split(' ').collect();
    let month = |m: &str| MONTHS.iter().position(|x| *x == m).map(|i| i as u32 + 1);
    match parts.as_slice() {
        [y] => Some((y.parse().ok()?, 0, 0)),
        [m, y] => Some((y.parse().ok()?, month(m)?, 0)),
        [d, m, y] => Some((y.parse().ok()?, month(m)?, d.parse().ok()?)),
        _ => None,
    }
}

fn distractor_formulas() -> Outcome {
    let mut rng = substream(1, &["acceptance", "golds"]);
    let empty = BTreeSet::new();
    let ctx = DistractorContext {
        fixed_pool: None,
        literal_pool: &[],
        exclude: &empty,
    };
    let spec = DistractorSpec::default();
    let mut violations = Vec::new();
    let mut n_values = 0;
    for k in 0..1000 {
        let mut drng = substream(1, &["acceptance", "draw", &k.to_string()]);
        if k % 2 == 0 {
            let gold: f64 = match k % 6 {
                0 => rng.random_range(1..=1_000_000) as f64,
                2 => rng.random_range(1..=10_000) as f64 / 10.0,
                _ => rng.random_range(1..=100_000) as f64 / 100.0,
            };
            let answer = ObjectValue::Number { value: gold, unit: None };
            let d = gen_false_choices(&answer, AnswerCategory::Number, &ctx, &spec, &mut drng);
            let (lo, hi) = (gold / 2.0, (1.5 * gold).max(gold / 2.0 + 6.0));
            n_values += d.values.len();
            if d.values.len() > 3 {
                violations.push(format!("{gold}: {} distractors", d.values.len()));
            }
            for v in &d.values {
                let x: f64 = v.parse().map_err(|_| format!("unparsable distractor {v:?}"))?;
                let slack = 1e-9 * hi;
                if x < lo - slack || x > hi + slack || x == gold {
                    violations.push(format!("gold {gold}: distractor {v}"));
                }
            }
        } else {
            let year = rng.random_range(1000..=2020);
            let date = match k % 3 {
                0 => CalendarDate::year(year),
                1 => CalendarDate::month(year, rng.random_range(1..=12)).unwrap(),
                _ => CalendarDate::day(year, rng.random_range(1..=12), rng.random_range(1..=28)).unwrap(),
            };
            let gold = date.render();
            let g = parse_rendered_date(&gold).ok_or_else(|| format!("unparsable gold {gold:?}"))?;
            let d = gen_false_choices(&ObjectValue::Date(date), AnswerCategory::Date, &ctx, &spec, &mut drng);
            n_values += d.values.len();
            if d.values.len() > 3 {
                violations.push(format!("{gold}: {} distractors", d.values.len()));
            }
            for v in &d.values {
                let x = parse_rendered_date(v).ok_or_else(|| format!("unparsable distractor {v:?}"))?;
                let (lo, hi) = ((g.0 - 10, g.1, g.2), (g.0 + 10, g.1, g.2));
                if *v == gold || x < lo || x > hi {
                    violations.push(format!("gold {gold}: distractor {v}"));
                }
            }
        }
    }
    ensure(violations.is_empty(), || format!("{} violations, e.g. {:?}", violations.len(), &violations[..violations.len().min(3)]))?;
    Ok(format!("1000 golds, {n_values} distractors, 0 violations"))
}

fn synthetic_item(qid: String, image: String, group: &str, answer: &str) -> QaItem {
    QaItem {
        question_id: qid,
        image_id: image,
        source: ImageSource::VisualGenome,
        main_object: EntityId::new("Q1").unwrap(),
        path: PropertyPath {
            steps: vec![PathStep {
                property: PropertyId::new("P0", group),
                via: None,
            }],
        },
        hops: 1,
        uses_scene_graph: false,
        question: format!("What is the {group} of this thing?"),
        answer: ObjectValue::Literal { value: answer.into() },
        answer_category: AnswerCategory::Literal,
        choices: vec![answer.into()],
        gold_index: 0,
        domains: BTreeSet::new(),
        group_key: group.into(),
        degenerate_range: false,
    }
}

fn balancing() -> Outcome {
    const FREQS: [usize; 12] = [150, 80, 50, 35, 25, 18, 13, 10, 7, 5, 4, 3];
    let mut rng = substream(3, &["acceptance", "balance"]);
    let mut items = Vec::new();
    for g in 0..5 {
        let group = format!("group{g}");
        for (a, f) in FREQS.iter().enumerate() {
            for k in 0..*f {
                let image = format!("img{:03}", rng.random_range(0..300));
                items.push(synthetic_item(format!("{group}-a{a:02}-{k:03}"), image, &group, &format!("{group}-answer{a:02}")));
            }
        }
    }
    ensure(items.len() == 2000, || format!("synthetic size {}", items.len()))?;
    let cfg = BalanceConfig::default();
    let mut current = Vec::new();
    let mut rank: HashMap<String, Vec<String>> = HashMap::new();
    let mut initial_worst: f64 = 0.0;
    let mut drop = BTreeSet::new();
    for group in build_groups(&items) {
        initial_worst = initial_worst.max(group.head_freq() as f64 / group.tail_freq() as f64);
        let (kept, removed) = truncate_top_k(&group, cfg.top_k);
        drop.extend(removed);
        rank.insert(group.group_key.clone(), kept.histogram.iter().map(|h| h.0.clone()).collect());
    }
    ensure(initial_worst >= 20.0, || format!("initial ratio {initial_worst}"))?;
    current.extend(items.iter().filter(|i| !drop.contains(&i.question_id)).cloned());
    let mut prev = current.len();
    for round in 1..=cfg.rounds {
        let (next, _) = balance_round(&current, &cfg, 3, round);
        ensure(next.len() <= prev, || format!("round {round} grew the dataset"))?;
        prev = next.len();
        for group in build_groups(&next) {
            let freq: HashMap<&str, usize> = group.histogram.iter().map(|(a, n)| (a.as_str(), *n)).collect();
            let ordered: Vec<usize> = rank[&group.group_key].iter().map(|a| freq.get(a.as_str()).copied().unwrap_or(0)).collect();
            ensure(ordered.windows(2).all(|w| w[0] >= w[1]), || format!("round {round}: order broken in {}", group.group_key))?;
        }
        current = next;
    }
    let worst = build_groups(&current)
        .iter()
        .map(|g| g.head_freq() as f64 / g.tail_freq() as f64)
        .fold(0.0, f64::max);
    ensure(worst <= cfg.head_tail_target, || format!("final head/tail ratio {worst}"))?;
    Ok(format!(
        "head/tail {initial_worst:.1} -> {worst:.2} (<= {}), 2000 -> {} questions, order kept in all {} rounds",
        cfg.head_tail_target,
        current.len(),
        cfg.rounds
    ))
}

fn splitting(run_dir: &Path) -> Outcome {
    let balanced = load(&run_dir.join("balanced.jsonl"))?;
    let train = load(&run_dir.join("train.jsonl"))?;
    let test = load(&run_dir.join("test.jsonl"))?;
    let images = |items: &[QaItem]| items.iter().map(|i| i.image_id.clone()).collect::<BTreeSet<_>>();
    let (all, tr, te) = (images(&balanced), images(&train), images(&test));
    ensure(all.len() >= 60, || format!("only {} images", all.len()))?;
    ensure(tr.is_disjoint(&te), || "train and test share images".into())?;
    let mut union: Vec<&QaItem> = train.iter().chain(&test).collect();
    union.sort_by(|a, b| a.question_id.cmp(&b.question_id));
    let mut expected: Vec<&QaItem> = balanced.iter().collect();
    expected.sort_by(|a, b| a.question_id.cmp(&b.question_id));
    ensure(union == expected, || "train + test is not the balanced set".into())?;
    let frac_images = tr.len() as f64 / all.len() as f64;
    let frac_questions = train.len() as f64 / balanced.len() as f64;
    for f in [frac_images, frac_questions] {
        ensure((0.65..=0.75).contains(&f), || format!("train fraction {f:.3}"))?;
    }
    let l1 = answer_distribution_l1(&train, &test, 20, 10);
    ensure(l1 <= 0.15, || format!("L1 {l1:.3}"))?;
    Ok(format!(
        "{} images; train fraction {frac_images:.3} (images) / {frac_questions:.3} (questions); overlap 0; L1 {l1:.3}",
        all.len()
    ))
}

/// Reads the fixture JSON directly and follows each item's path.
struct FixtureWalker {
    entities: BTreeMap<String, Value>,
}

impl FixtureWalker {
    fn load() -> Self {
        let text = std::fs::read_to_string(data("fixture_kg.json")).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        let entities = v["entities"].as_object().unwrap().iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        Self { entities }
    }

    fn render(&self, o: &Value) -> Option<String> {
        match o["kind"].as_str()? {
            "entity" => Some(self.entities.get(o["id"].as_str()?)?["label"].as_str()?.to_string()),
            "literal" => Some(o["value"].as_str()?.to_string()),
            "number" => {
                let n = format!("{}", o["value"].as_f64()?);
                Some(match o["unit"].as_str() {
                    Some(u) => format!("{n} {u}"),
                    None => n,
                })
            }
            "date" => {
                let y = o["year"].as_i64()?;
                let month = || MONTHS[o["month"].as_u64().unwrap() as usize - 1];
                Some(match o["precision"].as_str()? {
                    "year" => y.to_string(),
                    "month" => format!("{} {y}", month()),
                    _ => format!("{} {} {y}", o["day"].as_u64()?, month()),
                })
            }
            _ => None,
        }
    }

    fn objects(&self, subject: &str, property: &str) -> Vec<&Value> {
        self.entities
            .get(subject)
            .and_then(|e| e["statements"].as_array())
            .map(|ss| ss.iter().filter(|s| s["property_id"] == property).map(|s| &s["object"]).collect())
            .unwrap_or_default()
    }

    /// Every answer reachable along `item.path`.
    fn answers(&self, item: &QaItem) -> Vec<String> {
        let mut current = item.main_object.as_str().to_string();
        let steps = &item.path.steps;
        for step in &steps[..steps.len() - 1] {
            let Some(via) = &step.via else { return Vec::new() };
            let ok = self
                .objects(&current, &step.property.id)
                .iter()
                .any(|o| o["kind"] == "entity" && o["id"] == via.as_str());
            if !ok {
                return Vec::new();
            }
            current = via.as_str().to_string();
        }
        let last = &steps[steps.len() - 1];
        self.objects(&current, &last.property.id).iter().filter_map(|o| self.render(o)).collect()
    }
}

fn oracle(run_dir: &Path) -> Outcome {
    let items = load(&run_dir.join("raw.jsonl"))?;
    ensure(!items.is_empty(), || "no items".into())?;
    let walker = FixtureWalker::load();
    let mut bad = Vec::new();
    for item in &items {
        let gold = &item.choices[item.gold_index];
        if !walker.answers(item).contains(gold) || *gold != item.answer_text() {
            bad.push(item.question_id.clone());
        }
    }
    let hops: BTreeMap<usize, usize> = items.iter().fold(BTreeMap::new(), |mut m, i| {
        *m.entry(i.hops).or_insert(0) += 1;
        m
    });
    ensure(bad.is_empty(), || format!("{} of {} disagree, e.g. {:?}", bad.len(), items.len(), &bad[..bad.len().min(3)]))?;
    Ok(format!("{}/{} items re-derived (by hops: {hops:?})", items.len(), items.len()))
}

#[derive(serde::Serialize, serde::Deserialize, PartialEq, Debug)]
struct GoldenPair {
    pred: String,
    gold: String,
    score: f64,
}

const GOLDEN_PAIRS: [(&str, &str); 4] = [
    ("a man", "male"),
    ("very high", "390 meters"),
    ("César Pelli", "césar pelli"),
    ("Stockholm", "Sweden"),
];

fn metrics(run_dir: &Path) -> Outcome {
    // exact implies substring on random pairs
    let mut rng = substream(5, &["acceptance", "strings"]);
    let alphabet: Vec<char> = "aAbB c.".chars().collect();
    let word = |rng: &mut kgvqa_core::rng::RunRng| -> String {
        let n = rng.random_range(0..8);
        (0..n).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
    };
    let (mut exact_hits, mut pairs) = (0, 0);
    for _ in 0..10_000 {
        let a = word(&mut rng);
        let b = if rng.random_bool(0.3) { a.to_uppercase() } else { word(&mut rng) };
        pairs += 1;
        if exact_match(&a, &b) {
            exact_hits += 1;
            ensure(substring_match(&a, &b), || format!("exact but not substring: {a:?} / {b:?}"))?;
        }
    }
    ensure(exact_hits > 100, || format!("only {exact_hits} exact pairs"))?;

    // SEM identity on every report cell of a fixture evaluation
    let items = load(&run_dir.join("test.jsonl"))?;
    let predictions: Vec<Prediction> = items
        .iter()
        .enumerate()
        .map(|(k, i)| Prediction {
            question_id: i.question_id.clone(),
            text: (k % 2 == 0).then(|| if k % 3 == 0 { i.answer_text() } else { format!("maybe {}", i.choices[0]) }),
            letter: (k % 2 == 1).then(|| ["A", "B", "C", "D", "?"][k % 5].to_string()),
        })
        .collect();
    let report = evaluate(&items, &predictions, &EvalConfig::default(), Some(&StubProvider)).map_err(|e| e.to_string())?;
    let mut cells = 0;
    for by_cell in report.metrics.values() {
        for c in by_cell.values() {
            cells += 1;
            ensure(c.sem == c.sd / (c.n as f64).sqrt(), || format!("SEM identity broken: {c:?}"))?;
        }
    }

    // SD / SEM = sqrt(n): a reported 47.9 (0.2) implies n near 57 000
    let n = 57_000;
    let mut brng = substream(5, &["acceptance", "bernoulli"]);
    let scores: Vec<f64> = (0..n).map(|_| if brng.random_bool(0.64) { 1.0 } else { 0.0 }).collect();
    let c = aggregate(&scores).unwrap();
    let implied_n = (c.sd / c.sem).powi(2);
    ensure((implied_n - n as f64).abs() < 1e-6 * n as f64, || format!("implied n {implied_n}"))?;
    ensure((c.sem - 0.2).abs() < 0.05, || format!("SEM {:.3}", c.sem))?;
    let reported_n = (47.9f64 / 0.2).powi(2);
    ensure((50_000.0..65_000.0).contains(&reported_n), || format!("47.9/0.2 implies {reported_n}"))?;

    // "a man" vs "male"
    ensure(!substring_match("a man", "male"), || "substring scored `a man` vs `male` as correct".into())?;
    let stub: &dyn EmbeddingProvider = &StubProvider;
    let current: Vec<GoldenPair> = GOLDEN_PAIRS
        .iter()
        .map(|(p, g)| {
            Ok(GoldenPair {
                pred: p.to_string(),
                gold: g.to_string(),
                score: semantic_score(p, g, stub).map_err(|e| e.to_string())?,
            })
        })
        .collect::<Result<_, String>>()?;
    let path = golden("stub_semantic.json");
    if std::env::var_os("KGVQA_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, serde_json::to_string_pretty(&current).unwrap() + "\n").unwrap();
    }
    let frozen: Vec<GoldenPair> = serde_json::from_str(&std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?)
        .map_err(|e| e.to_string())?;
    for (c, f) in current.iter().zip(&frozen) {
        ensure(c.pred == f.pred && c.gold == f.gold && (c.score - f.score).abs() < 1e-12, || {
            format!("stub score drifted: {c:?} vs golden {f:?}")
        })?;
    }
    let man = frozen[0].score;
    ensure(man >= DEFAULT_TAU, || format!("stub `a man`/`male` = {man} < tau"))?;
    Ok(format!(
        "{pairs} pairs ({exact_hits} exact) all substring; SEM = SD/sqrt(n) on {cells} cells; n=57000 gives {:.1} ({:.2}); `a man`/`male`: substring 0, stub {man:.3} >= {DEFAULT_TAU}",
        c.sd, c.sem
    ))
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn determinism(first: &Path, dir: &Path) -> Outcome {
    let second = dir.join("run2");
    run_fixture(&second, "run", &[])?;
    let (a, b) = (tree(first), tree(&second));
    ensure(a.keys().eq(b.keys()), || format!("file sets differ: {:?} vs {:?}", a.keys(), b.keys()))?;
    let differing: Vec<&String> = a.keys().filter(|k| a[*k] != b[*k]).collect();
    ensure(differing.is_empty(), || format!("differing files: {differing:?}"))?;
    Ok(format!("{} files byte-identical across two runs", a.len()))
}

fn main() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let dir = tmp.path();
    let run_dir = dir.join("run1");
    let full_run = run_fixture(&run_dir, "run", &[]);

    let results: Vec<(&str, Outcome)> = vec![
        ("fixture church questions", church_questions(dir)),
        ("skyscraper nesting", skyscraper_nesting(dir)),
        ("distractor formulas", distractor_formulas()),
        ("balancing", balancing()),
        ("splitting", full_run.clone().and_then(|_| splitting(&run_dir))),
        ("oracle equivalence", full_run.clone().and_then(|_| oracle(&run_dir))),
        ("metrics", full_run.clone().and_then(|_| metrics(&run_dir))),
        ("determinism", full_run.and_then(|_| determinism(&run_dir, dir))),
    ];
    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
