//! Knowledge-graph access: typed statements, entity lookup and bounded
//! neighborhoods over a pluggable backend.

mod fixture;
mod sparql;
mod types;

pub use fixture::FixtureBackend;
pub use sparql::{parse_select_results, SparqlBackend, SparqlConfig};
pub use types::{decimal_places, format_number, CalendarDate, DatePrecision, EntityId, ObjectValue, PropertyId, Statement};
pub(crate) use types::with_unit;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::{Arc, RwLock};

use crate::{Error, Result};

/// Wikidata `instance of`.
pub const INSTANCE_OF: &str = "P31";
/// Wikidata `subclass of`.
pub const SUBCLASS_OF: &str = "P279";

pub const MAX_DEPTH: usize = 3;

/// Raw access to a knowledge graph. Implementations return statements in any
/// order; [`KgStore`] sorts and caches them.
pub trait KgBackend: Send + Sync {
    fn entity_by_synset_id(&self, synset_id: &str) -> Result<Option<EntityId>>;

    fn entity_by_commons_name(&self, name: &str) -> Result<Option<EntityId>>;

    /// All statements whose subject is `entity`. Unknown entities yield
    /// [`Error::NotFound`].
    fn fetch_statements(&self, entity: &EntityId) -> Result<Vec<Statement>>;

    /// Every statement of the graph, when the backend holds the whole graph
    /// in memory. Remote backends return `None`.
    fn all_statements(&self) -> Option<Vec<Statement>> {
        None
    }
}

/// A breadth-first neighborhood of `root`, at most `depth` hops deep.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeSubgraph {
    pub root: EntityId,
    pub depth: usize,
    pub statements: Vec<Statement>,
}

impl KnowledgeSubgraph {
    /// Statements with `entity` as subject, in stored order.
    pub fn outgoing<'a, 'e>(&'a self, entity: &'e EntityId) -> impl Iterator<Item = &'a Statement> + use<'a, 'e> {
        self.statements.iter().filter(move |s| &s.subject == entity)
    }
}

/// Cached, sorted access to a [`KgBackend`].
pub struct KgStore {
    backend: Box<dyn KgBackend>,
    cache: RwLock<HashMap<EntityId, Arc<Vec<Statement>>>>,
}

impl std::fmt::Debug for KgStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let cached = self.cache.read().map(|c| c.len()).unwrap_or(0);
        f.debug_struct("KgStore").field("cached_entities", &cached).finish()
    }
}

/// Checks the `NNNNNNNN-p` shape of a WordNet synset id.
pub fn validate_synset_id(synset_id: &str) -> Result<()> {
    let bytes = synset_id.as_bytes();
    let ok = bytes.len() == 10
        && bytes[..8].iter().all(u8::is_ascii_digit)
        && bytes[8] == b'-'
        && bytes[9].is_ascii_lowercase();
    if ok {
        Ok(())
    } else {
        Err(Error::Input(format!("malformed synset id {synset_id:?}")))
    }
}

impl KgStore {
    pub fn new(backend: impl KgBackend + 'static) -> Self {
        Self::from_boxed(Box::new(backend))
    }

    pub fn from_boxed(backend: Box<dyn KgBackend>) -> Self {
        Self {
            backend,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn entity_by_synset_id(&self, synset_id: &str) -> Result<Option<EntityId>> {
        validate_synset_id(synset_id)?;
        self.backend.entity_by_synset_id(synset_id)
    }

    pub fn entity_by_commons_name(&self, name: &str) -> Result<Option<EntityId>> {
        if name.trim().is_empty() {
            return Err(Error::Input("empty Commons name".into()));
        }
        self.backend.entity_by_commons_name(name)
    }

    fn cached(&self, entity: &EntityId) -> Result<Arc<Vec<Statement>>> {
        if let Some(hit) = self.cache.read().expect("cache lock poisoned").get(entity) {
            return Ok(Arc::clone(hit));
        }
        let mut fetched = self.backend.fetch_statements(entity)?;
        fetched.sort();
        fetched.dedup();
        let fetched = Arc::new(fetched);
        let mut cache = self.cache.write().expect("cache lock poisoned");
        Ok(Arc::clone(
            cache.entry(entity.clone()).or_insert(fetched),
        ))
    }

    /// Statements of `entity`, sorted by property id then object. When
    /// `properties` is given only statements with those property ids are kept.
    pub fn statements_of(
        &self,
        entity: &EntityId,
        properties: Option<&BTreeSet<String>>,
    ) -> Result<Vec<Statement>> {
        let all = self.cached(entity)?;
        Ok(match properties {
            None => all.as_ref().clone(),
            Some(filter) => all
                .iter()
                .filter(|s| filter.contains(&s.property.id))
                .cloned()
                .collect(),
        })
    }

    /// Lower-cased label of the first `instance of` object, falling back to
    /// the first `subclass of` object.
    pub fn class_name_of(&self, entity: &EntityId) -> Result<String> {
        let statements = self.cached(entity)?;
        [INSTANCE_OF, SUBCLASS_OF]
            .iter()
            .find_map(|pid| statements.iter().find(|s| s.property.id == *pid))
            .map(|s| s.object.render().to_lowercase())
            .ok_or_else(|| Error::MissingClass(entity.to_string()))
    }

    /// Breadth-first expansion along entity-valued objects. Literal objects
    /// end a branch and every entity is expanded at most once.
    pub fn neighborhood(&self, entity: &EntityId, depth: usize) -> Result<KnowledgeSubgraph> {
        if !(1..=MAX_DEPTH).contains(&depth) {
            return Err(Error::Input(format!(
                "neighborhood depth must be in 1..={MAX_DEPTH}, got {depth}"
            )));
        }
        let mut statements = Vec::new();
        let mut visited: HashSet<EntityId> = HashSet::from([entity.clone()]);
        let mut frontier = vec![entity.clone()];
        for level in 0..depth {
            let mut next = Vec::new();
            for current in &frontier {
                let outgoing = match self.cached(current) {
                    Ok(s) => s,
                    // the root must exist; deeper entities may be dangling references
                    Err(Error::NotFound(msg)) if level > 0 => {
                        log::debug!("neighborhood: skipping {current}: {msg}");
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                for s in outgoing.iter() {
                    if let ObjectValue::Entity { id, .. } = &s.object {
                        if visited.insert(id.clone()) {
                            next.push(id.clone());
                        }
                    }
                }
                statements.extend(outgoing.iter().cloned());
            }
            frontier = next;
        }
        Ok(KnowledgeSubgraph {
            root: entity.clone(),
            depth,
            statements,
        })
    }

    /// Every statement known to the store: the whole graph for in-memory
    /// backends, otherwise everything fetched so far. Sorted.
    pub fn loaded_statements(&self) -> Vec<Statement> {
        let mut all = match self.backend.all_statements() {
            Some(all) => all,
            None => self
                .cache
                .read()
                .expect("cache lock poisoned")
                .values()
                .flat_map(|v| v.iter().cloned())
                .collect(),
        };
        all.sort();
        all.dedup();
        all
    }
}
