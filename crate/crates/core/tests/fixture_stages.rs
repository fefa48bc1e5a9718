use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use kgvqa_core::balance::{balance, build_groups, truncate_top_k, BalanceConfig};
use kgvqa_core::dataset::{write_jsonl, QaItem};
use kgvqa_core::generate::{generate_dataset, GenerationConfig};
use kgvqa_core::kg::{FixtureBackend, KgStore};
use kgvqa_core::linker::{group_images, read_landmark_csv, read_scene_relations, read_vg_objects, AnnotatedImage, ImageSource, ObjectAnnotation, WordNetIndex};
use kgvqa_core::split::{qualifying_answers, split};
use kgvqa_core::stats;
use kgvqa_core::templates::TemplateBank;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn landmark(image_id: &str, category: &str) -> AnnotatedImage {
    AnnotatedImage {
        image_id: image_id.into(),
        source: ImageSource::Landmarks,
        objects: vec![ObjectAnnotation {
            image_id: image_id.into(),
            object_id: format!("{image_id}_landmark"),
            synset_name: None,
            wikimedia_url: Some(format!("https://commons.wikimedia.org/wiki/Category:{category}")),
            bbox: None,
        }],
        relations: vec![],
    }
}

fn generate(images: &[AnnotatedImage], seed: u64) -> Vec<QaItem> {
    let kg = KgStore::new(FixtureBackend::load(&data("fixture_kg.json")).unwrap());
    let bank = TemplateBank::load(&data("templates.tsv")).unwrap();
    let wordnet = WordNetIndex::load(&data("wordnet_index.tsv")).unwrap();
    generate_dataset(images, &kg, &wordnet, &bank, &GenerationConfig::new(seed)).unwrap().items
}

/// Maria Magdalena kyrka, Stockholm City Hall and the Petronas Towers.
fn three_landmarks() -> Vec<QaItem> {
    generate(
        &[
            landmark("gld-a", "Maria_Magdalena_kyrka,_Stockholm"),
            landmark("gld-b", "Stockholm_City_Hall"),
            landmark("gld-c", "Petronas_Towers"),
        ],
        17,
    )
}

fn full_fixture() -> Vec<QaItem> {
    let relations = read_scene_relations(&data("vg_relations.jsonl")).unwrap();
    let mut images = group_images(read_vg_objects(&data("vg_objects.jsonl")).unwrap(), ImageSource::VisualGenome, &relations);
    images.extend(group_images(read_landmark_csv(&data("gld_images.csv")).unwrap(), ImageSource::Landmarks, &[]));
    generate(&images, 5)
}

#[test]
fn groups_match_hand_count() {
    let items = three_landmarks();
    // church: 4 one-hop + 5 via Sweden; city hall and towers: 4 one-hop,
    // 3 via the architect, 5 via the country
    assert_eq!(items.len(), 33);
    let groups: BTreeMap<String, Vec<(String, usize)>> = build_groups(&items)
        .into_iter()
        .map(|g| (g.group_key, g.histogram))
        .collect();
    let h = |pairs: &[(&str, usize)]| pairs.iter().map(|(a, n)| (a.to_string(), *n)).collect::<Vec<_>>();
    assert_eq!(groups.len(), 13);
    assert_eq!(groups["capital"], h(&[("Stockholm", 2), ("Kuala Lumpur", 1)]));
    assert_eq!(groups["country"], h(&[("Sweden", 2), ("Malaysia", 1)]));
    assert_eq!(groups["architect"], h(&[("César Pelli", 1), ("Ragnar Östberg", 1)]));
    assert_eq!(groups["sex or gender"], h(&[("male", 2)]));
    assert_eq!(groups["height"], h(&[("106 metre", 1), ("451.9 metre", 1), ("58 metre", 1)]));
    assert_eq!(groups["named after"], h(&[("Mary Magdalene", 1)]));
    assert_eq!(groups.values().map(|g| g.iter().map(|p| p.1).sum::<usize>()).sum::<usize>(), 33);
}

#[test]
fn truncation_removes_hand_enumerated_questions() {
    let items = three_landmarks();
    let id_of = |image: &str, q: &str| {
        items
            .iter()
            .find(|i| i.image_id == image && i.question == q)
            .unwrap_or_else(|| panic!("{q}"))
            .question_id
            .clone()
    };
    let mut removed = BTreeSet::new();
    for g in build_groups(&items) {
        removed.extend(truncate_top_k(&g, 2).1);
    }
    // only height and inception have three distinct answers; the
    // lexicographically last one goes
    let expected = BTreeSet::from([
        id_of("gld-a", "How high is this church?"),
        id_of("gld-c", "When was this skyscraper built?"),
    ]);
    assert_eq!(removed, expected);
}

#[test]
fn stats_and_qualifying_match_hand_tally() {
    let items = three_landmarks();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    write_jsonl(&path, &items).unwrap();
    let s = stats::stats(&path).unwrap();
    assert_eq!(s.n_images, 3);
    assert_eq!(s.n_questions, 33);
    assert_eq!(s.n_per_hop, [12, 21, 0]);
    assert_eq!(s.per_source["GLDv2"], 33);
    // 33 answers: every answer is at least 1/33 > 1% of the pool. 26
    // (group, answer) pairs, Stockholm is shared by capital and place of birth
    let q = qualifying_answers(&items);
    assert_eq!(build_groups(&items).iter().map(|g| g.histogram.len()).sum::<usize>(), 26);
    assert_eq!(q.len(), 25);
    assert!(q.contains("Stockholm") && q.contains("male") && q.contains("1634"));
}

#[test]
fn fixture_balancing_report_is_monotone() {
    let items = full_fixture();
    let cfg = BalanceConfig::default();
    let (balanced, report) = balance(&items, &cfg, 5).unwrap();
    assert!(balanced.len() <= items.len());
    assert_eq!(report.rounds.len(), 20);
    for (group, initial) in &report.initial {
        let mut prev = initial.ratio;
        for round in &report.rounds {
            let Some(g) = round.groups.get(group) else { continue };
            assert!(g.ratio <= prev + 1e-12, "{group} round {}: {} > {prev}", round.round, g.ratio);
            assert!(g.ratio <= initial.ratio.max(cfg.head_tail_target));
            prev = g.ratio;
        }
    }
    let mut prev = report.questions_before;
    for round in &report.rounds {
        assert!(round.questions_after <= prev);
        prev = round.questions_after;
    }
}

#[test]
fn fixture_split_has_no_overlap() {
    let items = full_fixture();
    let s = split(&items, 0.7, 3).unwrap();
    let train: BTreeSet<&str> = s.train.iter().map(|i| i.image_id.as_str()).collect();
    let test: BTreeSet<&str> = s.test.iter().map(|i| i.image_id.as_str()).collect();
    assert!(train.is_disjoint(&test));
    assert_eq!(s.train.len() + s.test.len(), items.len());
    for (key, cat) in &s.manifest {
        if cat.train.len() + cat.test.len() >= 2 {
            assert!(!cat.test.is_empty(), "{key}");
        }
        assert!(!cat.train.is_empty(), "{key}");
    }
}
