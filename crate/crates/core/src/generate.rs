//! Question generation by nesting templates along knowledge-graph paths.
//!
//! A path `p1 -> p2 -> ... -> pk` out of the main object is verbalized
//! innermost first: the object itself is `this <class>` (or a scene-graph
//! clause), every non-final property wraps it in its sub-clause template and
//! the outermost property's main template turns it into a question:
//!
//! ```text
//! this church
//! the country where this church is located          (country, sub-clause)
//! What is the capital of the country where this church is located?
//! ```

use std::collections::{BTreeSet, HashSet};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::choices::{assemble_choices, categorize, gen_false_choices, DistractorContext, DistractorSpec, LiteralPools};
use crate::dataset::{PathStep, PropertyPath, QaItem};
use crate::kg::{EntityId, KgStore, KnowledgeSubgraph, ObjectValue, Statement, MAX_DEPTH};
use crate::linker::{link_object, AnnotatedImage, ImageSource, ObjectAnnotation, SceneRelation, WordNetIndex};
use crate::rng::substream;
use crate::templates::{fill, DomainTag, TemplateBank};
use crate::{Error, Result};

pub const DEFAULT_BRANCH_CAP: usize = 4;
pub const DEFAULT_SCENE_GRAPH_PROBABILITY: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub max_hops: usize,
    /// Keep only questions whose outermost property carries one of these
    /// domains.
    pub domain_filter: Option<BTreeSet<DomainTag>>,
    /// Statements considered per property per entity.
    pub branch_cap: usize,
    pub scene_graph_probability: f64,
    pub distractors: DistractorSpec,
    pub seed: u64,
}

impl GenerationConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            max_hops: 2,
            domain_filter: None,
            branch_cap: DEFAULT_BRANCH_CAP,
            scene_graph_probability: DEFAULT_SCENE_GRAPH_PROBABILITY,
            distractors: DistractorSpec::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_DEPTH).contains(&self.max_hops) {
            return Err(Error::Config(format!("max_hops must be 1..=3, got {}", self.max_hops)));
        }
        if self.branch_cap == 0 {
            return Err(Error::Config("branch_cap must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.scene_graph_probability) {
            return Err(Error::Config("scene_graph_probability must be in [0, 1]".into()));
        }
        if self.distractors.count == 0 {
            return Err(Error::Config("distractor count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Why a candidate question was not produced.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Skip {
    #[error("no template for property {0:?}")]
    MissingTemplate(String),
    #[error("property {0:?} has no sub-clause template")]
    MissingSubClause(String),
    #[error("invalid property path: {0}")]
    PathInvalid(String),
}

/// A question before false choices are attached.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionDraft {
    pub main_object: EntityId,
    pub path: PropertyPath,
    pub question: String,
    pub answer: ObjectValue,
    pub uses_scene_graph: bool,
}

/// `this <class>`.
pub fn default_clause(class_name: &str) -> String {
    format!("this {class_name}")
}

/// `the <class> <predicate> the <object>`, e.g. "the car parked next to the
/// sidewalk".
pub fn scene_graph_clause(rel: &SceneRelation, class_name: &str) -> Result<String> {
    let predicate = rel.predicate.trim();
    let object = rel.object_label.trim();
    if predicate.is_empty() {
        return Err(Error::Input("scene relation has an empty predicate".into()));
    }
    if object.is_empty() {
        return Err(Error::Input("scene relation has an empty object label".into()));
    }
    Ok(format!("the {class_name} {predicate} the {object}"))
}

fn render_chain(
    main: &EntityId,
    chain: &[&Statement],
    clause0: &str,
    uses_scene_graph: bool,
    bank: &TemplateBank,
) -> std::result::Result<QuestionDraft, Skip> {
    if chain.is_empty() || chain.len() > MAX_DEPTH {
        return Err(Skip::PathInvalid(format!("{} hops", chain.len())));
    }
    if &chain[0].subject != main {
        return Err(Skip::PathInvalid(format!(
            "first statement is about {}, not {main}",
            chain[0].subject
        )));
    }
    let mut steps = Vec::with_capacity(chain.len());
    let mut clause = clause0.to_string();
    for (j, s) in chain.iter().enumerate() {
        let label = &s.property.label;
        let template = bank.get(label).ok_or_else(|| Skip::MissingTemplate(label.clone()))?;
        let last = j + 1 == chain.len();
        let via = if last {
            None
        } else {
            let next = s.object.entity_id().ok_or_else(|| {
                Skip::PathInvalid(format!("hop {} ({label}) ends in a literal", j + 1))
            })?;
            if &chain[j + 1].subject != next {
                return Err(Skip::PathInvalid(format!(
                    "hop {} ends at {next} but hop {} starts at {}",
                    j + 1,
                    j + 2,
                    chain[j + 1].subject
                )));
            }
            Some(next.clone())
        };
        let text = if last {
            template.main_text.as_str()
        } else {
            template
                .sub_clause_text
                .as_deref()
                .ok_or_else(|| Skip::MissingSubClause(label.clone()))?
        };
        clause = fill(text, &clause).map_err(|e| Skip::PathInvalid(e.to_string()))?;
        steps.push(PathStep {
            property: s.property.clone(),
            via,
        });
    }
    Ok(QuestionDraft {
        main_object: main.clone(),
        path: PropertyPath { steps },
        question: clause,
        answer: chain[chain.len() - 1].object.clone(),
        uses_scene_graph,
    })
}

/// A one-hop question about `stmt`, e.g. "Who designed this skyscraper?".
pub fn generate_one_hop(
    main: &EntityId,
    stmt: &Statement,
    class_name: &str,
    bank: &TemplateBank,
) -> std::result::Result<QuestionDraft, Skip> {
    render_chain(main, &[stmt], &default_clause(class_name), false, bank)
}

/// A question along the statement chain `chain` (innermost first), whose
/// statements must all belong to `subgraph`. `clause0` names the main
/// object: [`default_clause`] or a [`scene_graph_clause`].
pub fn generate_multi_hop(
    main: &EntityId,
    chain: &[&Statement],
    subgraph: &KnowledgeSubgraph,
    clause0: &str,
    uses_scene_graph: bool,
    bank: &TemplateBank,
) -> std::result::Result<QuestionDraft, Skip> {
    for s in chain {
        if !subgraph.statements.contains(s) {
            return Err(Skip::PathInvalid(format!(
                "{} / {} is outside the subgraph of {}",
                s.subject, s.property.label, subgraph.root
            )));
        }
    }
    render_chain(main, chain, clause0, uses_scene_graph, bank)
}

/// All valid statement chains out of `main` of length `1..=max_hops`, in
/// depth-first (prefix-first lexicographic) order. Chains never revisit an
/// entity, so a chain's answer is never the main object or an intermediate.
pub fn enumerate_paths<'a>(
    main: &EntityId,
    subgraph: &'a KnowledgeSubgraph,
    bank: &TemplateBank,
    max_hops: usize,
    branch_cap: usize,
) -> Vec<Vec<&'a Statement>> {
    struct Walk<'a, 'b> {
        subgraph: &'a KnowledgeSubgraph,
        bank: &'b TemplateBank,
        max_hops: usize,
        branch_cap: usize,
        visited: HashSet<EntityId>,
        out: Vec<Vec<&'a Statement>>,
    }

    impl<'a> Walk<'a, '_> {
        fn walk(&mut self, current: &EntityId, chain: &mut Vec<&'a Statement>) {
            let mut per_property: Vec<(&str, usize)> = Vec::new();
            for s in self.subgraph.outgoing(current) {
                match per_property.last_mut() {
                    Some((pid, n)) if *pid == s.property.id => {
                        if *n >= self.branch_cap {
                            continue;
                        }
                        *n += 1;
                    }
                    _ => per_property.push((&s.property.id, 1)),
                }
                let Some(template) = self.bank.get(&s.property.label) else {
                    continue;
                };
                let target = s.object.entity_id();
                if target.is_some_and(|t| self.visited.contains(t)) {
                    continue;
                }
                chain.push(s);
                self.out.push(chain.clone());
                if let (Some(next), Some(_), true) =
                    (target, template.sub_clause_text.as_ref(), chain.len() < self.max_hops)
                {
                    self.visited.insert(next.clone());
                    self.walk(next, chain);
                    self.visited.remove(next);
                }
                chain.pop();
            }
        }
    }

    let mut w = Walk {
        subgraph,
        bank,
        max_hops,
        branch_cap,
        visited: HashSet::from([main.clone()]),
        out: Vec::new(),
    };
    w.walk(main, &mut Vec::new());
    w.out
}

/// An object that was not turned into questions, and why.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct SkipRecord {
    pub image_id: String,
    pub object_id: String,
    pub reason: String,
}

/// A linked object with everything generation needs from the graph.
#[derive(Debug, Clone)]
pub struct ResolvedObject {
    pub annotation: ObjectAnnotation,
    pub entity: EntityId,
    pub class_name: String,
    pub subgraph: KnowledgeSubgraph,
}

#[derive(Debug, Clone)]
pub struct ResolvedImage {
    pub image_id: String,
    pub source: ImageSource,
    pub objects: Vec<ResolvedObject>,
    pub relations: Vec<SceneRelation>,
}

/// Links every object of `image` and fetches its neighborhood. Transport
/// failures abort; every other per-object failure becomes a skip record.
pub fn resolve_image(
    image: &AnnotatedImage,
    kg: &KgStore,
    wordnet: &WordNetIndex,
    max_hops: usize,
    skips: &mut Vec<SkipRecord>,
) -> Result<ResolvedImage> {
    let mut objects = Vec::new();
    for ann in &image.objects {
        let mut skip = |reason: String| {
            skips.push(SkipRecord {
                image_id: image.image_id.clone(),
                object_id: ann.object_id.clone(),
                reason,
            })
        };
        let resolved = link_object(ann, kg, wordnet).and_then(|entity| match entity {
            None => Ok(None),
            Some(entity) => {
                let class_name = kg.class_name_of(&entity)?;
                let subgraph = kg.neighborhood(&entity, max_hops)?;
                Ok(Some((entity, class_name, subgraph)))
            }
        });
        match resolved {
            Ok(Some((entity, class_name, subgraph))) => objects.push(ResolvedObject {
                annotation: ann.clone(),
                entity,
                class_name,
                subgraph,
            }),
            Ok(None) => skip("no linked entity".into()),
            Err(e @ Error::Transport(_)) => return Err(e),
            Err(e) => skip(e.to_string()),
        }
    }
    Ok(ResolvedImage {
        image_id: image.image_id.clone(),
        source: image.source,
        objects,
        relations: image.relations.clone(),
    })
}

/// Questions for one resolved image, with choices attached, deduplicated on
/// (question, answer) and ordered by question id.
pub fn questions_for_image(
    image: &ResolvedImage,
    bank: &TemplateBank,
    pools: &LiteralPools,
    cfg: &GenerationConfig,
) -> Vec<QaItem> {
    let mut items = Vec::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for (obj_idx, obj) in image.objects.iter().enumerate() {
        let relation = image
            .relations
            .iter()
            .find(|r| r.subject_object_id == obj.annotation.object_id);
        let chains = enumerate_paths(&obj.entity, &obj.subgraph, bank, cfg.max_hops, cfg.branch_cap);
        for (path_idx, chain) in chains.iter().enumerate() {
            let outer = chain[chain.len() - 1];
            let Some(template) = bank.get(&outer.property.label) else {
                continue;
            };
            if let Some(filter) = &cfg.domain_filter {
                if template.domains.is_disjoint(filter) {
                    continue;
                }
            }
            let question_id = format!("{}-{:02}-{:03}", image.image_id, obj_idx + 1, path_idx + 1);

            let scene_clause = relation.and_then(|rel| {
                let mut rng = substream(cfg.seed, &[&question_id, "scene"]);
                rng.random_bool(cfg.scene_graph_probability)
                    .then(|| scene_graph_clause(rel, &obj.class_name).ok())
                    .flatten()
            });
            let uses_scene_graph = scene_clause.is_some();
            let clause0 = scene_clause.unwrap_or_else(|| default_clause(&obj.class_name));

            let draft = match generate_multi_hop(&obj.entity, chain, &obj.subgraph, &clause0, uses_scene_graph, bank) {
                Ok(d) => d,
                Err(skip) => {
                    log::debug!("{question_id}: {skip}");
                    continue;
                }
            };
            let answer_text = draft.answer.render();
            if !seen.insert((draft.question.clone(), answer_text.clone())) {
                continue;
            }
            let Ok(category) = categorize(&outer.property.label, &draft.answer, bank) else {
                continue;
            };
            let exclude: BTreeSet<String> = obj
                .subgraph
                .outgoing(&outer.subject)
                .filter(|s| s.property.id == outer.property.id)
                .map(|s| s.object.render())
                .collect();
            let ctx = DistractorContext {
                fixed_pool: template.fixed_choice_pool.as_deref(),
                literal_pool: pools.get(&outer.property.id),
                exclude: &exclude,
            };
            let mut rng = substream(cfg.seed, &[&question_id, "choices"]);
            let distractors = gen_false_choices(&draft.answer, category, &ctx, &cfg.distractors, &mut rng);
            let (choices, gold_index) = assemble_choices(answer_text, distractors.values, &mut rng);

            items.push(QaItem {
                question_id,
                image_id: image.image_id.clone(),
                source: image.source,
                main_object: draft.main_object,
                hops: draft.path.hops(),
                group_key: outer.property.label.clone(),
                path: draft.path,
                uses_scene_graph: draft.uses_scene_graph,
                question: draft.question,
                answer: draft.answer,
                answer_category: category,
                choices,
                gold_index,
                domains: template.domains.clone(),
                degenerate_range: distractors.degenerate_range,
            });
        }
    }
    items.sort_by(|a, b| a.question_id.cmp(&b.question_id));
    items
}

#[derive(Debug, Clone, Default)]
pub struct GenerationOutput {
    pub items: Vec<QaItem>,
    pub skips: Vec<SkipRecord>,
}

/// Generates questions for all images. Graph access happens first and
/// sequentially; literal pools are then frozen and images are rendered in
/// parallel. Output is sorted by (image id, question id).
pub fn generate_dataset(
    images: &[AnnotatedImage],
    kg: &KgStore,
    wordnet: &WordNetIndex,
    bank: &TemplateBank,
    cfg: &GenerationConfig,
) -> Result<GenerationOutput> {
    cfg.validate()?;
    let mut skips = Vec::new();
    let resolved = images
        .iter()
        .map(|img| resolve_image(img, kg, wordnet, cfg.max_hops, &mut skips))
        .collect::<Result<Vec<_>>>()?;
    let pools = LiteralPools::from_statements(&kg.loaded_statements());
    let mut items: Vec<QaItem> = resolved
        .par_iter()
        .flat_map_iter(|img| questions_for_image(img, bank, &pools, cfg))
        .collect();
    items.sort_by(|a, b| (&a.image_id, &a.question_id).cmp(&(&b.image_id, &b.question_id)));
    skips.sort();
    Ok(GenerationOutput { items, skips })
}
