use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::Deserialize;

use super::types::{CalendarDate, EntityId, ObjectValue, PropertyId, Statement};
use super::KgBackend;
use crate::{Error, Result};

#[derive(Deserialize)]
struct FixtureFile {
    entities: BTreeMap<String, RawEntity>,
}

#[derive(Deserialize)]
struct RawEntity {
    label: String,
    #[serde(default)]
    synsets: Vec<String>,
    #[serde(default)]
    commons_name: Option<String>,
    #[serde(default)]
    statements: Vec<RawStatement>,
}

#[derive(Deserialize)]
struct RawStatement {
    property_id: String,
    property_label: String,
    object: RawObject,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum RawObject {
    Entity {
        id: String,
        #[serde(default)]
        label: Option<String>,
    },
    Literal {
        value: String,
    },
    Number {
        value: f64,
        #[serde(default)]
        unit: Option<String>,
    },
    Date(CalendarDate),
}

/// An in-memory knowledge graph loaded from a single JSON document.
#[derive(Debug, Clone)]
pub struct FixtureBackend {
    statements: BTreeMap<EntityId, Vec<Statement>>,
    by_synset: HashMap<String, EntityId>,
    by_commons: HashMap<String, EntityId>,
}

impl FixtureBackend {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: FixtureFile = serde_json::from_str(text)?;
        let labels: HashMap<&str, &str> = file
            .entities
            .iter()
            .map(|(id, e)| (id.as_str(), e.label.as_str()))
            .collect();

        let mut statements = BTreeMap::new();
        let mut by_synset = HashMap::new();
        let mut by_commons = HashMap::new();
        for (raw_id, entity) in &file.entities {
            let id = EntityId::new(raw_id.clone())?;
            for syn in &entity.synsets {
                super::validate_synset_id(syn)?;
                if let Some(prev) = by_synset.insert(syn.clone(), id.clone()) {
                    return Err(Error::Input(format!(
                        "synset {syn} annotates both {prev} and {id}"
                    )));
                }
            }
            if let Some(name) = &entity.commons_name {
                if let Some(prev) = by_commons.insert(name.clone(), id.clone()) {
                    return Err(Error::Input(format!(
                        "Commons name {name:?} links both {prev} and {id}"
                    )));
                }
            }
            let mut own = Vec::with_capacity(entity.statements.len());
            for raw in &entity.statements {
                let object = match &raw.object {
                    RawObject::Entity { id: target, label } => {
                        let label = label
                            .as_deref()
                            .or_else(|| labels.get(target.as_str()).copied());
                        match label {
                            Some(label) => ObjectValue::Entity {
                                id: EntityId::new(target.clone())?,
                                label: label.to_string(),
                            },
                            None => {
                                log::warn!("{raw_id}/{}: {target} has no label, skipped", raw.property_id);
                                continue;
                            }
                        }
                    }
                    RawObject::Literal { value } => ObjectValue::Literal {
                        value: value.clone(),
                    },
                    RawObject::Number { value, unit } => ObjectValue::Number {
                        value: *value,
                        unit: unit.clone(),
                    },
                    RawObject::Date(d) => ObjectValue::Date(*d),
                };
                own.push(Statement::new(
                    id.clone(),
                    PropertyId::new(raw.property_id.clone(), raw.property_label.clone()),
                    object,
                )?);
            }
            statements.insert(id, own);
        }
        Ok(Self {
            statements,
            by_synset,
            by_commons,
        })
    }
}

impl KgBackend for FixtureBackend {
    fn entity_by_synset_id(&self, synset_id: &str) -> Result<Option<EntityId>> {
        Ok(self.by_synset.get(synset_id).cloned())
    }

    fn entity_by_commons_name(&self, name: &str) -> Result<Option<EntityId>> {
        Ok(self.by_commons.get(name).cloned())
    }

    fn fetch_statements(&self, entity: &EntityId) -> Result<Vec<Statement>> {
        self.statements
            .get(entity)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("entity {entity}")))
    }

    fn all_statements(&self) -> Option<Vec<Statement>> {
        Some(self.statements.values().flatten().cloned().collect())
    }
}
