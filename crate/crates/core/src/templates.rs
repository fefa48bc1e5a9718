//! Per-property question templates.
//!
//! Bank files are UTF-8 TSV with the header
//! `property  main  subclause  category  domains  fixed_pool`; `subclause`
//! and `fixed_pool` may be empty, `domains` and `fixed_pool` are
//! `|`-separated.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const PLACEHOLDER: &str = "__";
const HEADER: [&str; 6] = ["property", "main", "subclause", "category", "domains", "fixed_pool"];
const MIN_FIXED_POOL: usize = 4;

/// How false choices are synthesized for an answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerCategory {
    Fixed,
    Date,
    Number,
    Literal,
}

impl AnswerCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            AnswerCategory::Fixed => "fixed",
            AnswerCategory::Date => "date",
            AnswerCategory::Number => "number",
            AnswerCategory::Literal => "literal",
        }
    }
}

impl FromStr for AnswerCategory {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "date" => Ok(Self::Date),
            "number" => Ok(Self::Number),
            "literal" => Ok(Self::Literal),
            other => Err(format!("unknown answer category {other:?}")),
        }
    }
}

macro_rules! domains {
    ($($variant:ident => $name:literal,)*) => {
        /// One of the twenty fixed knowledge domains a question can belong to.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum DomainTag { $($variant,)* }

        impl DomainTag {
            pub const ALL: [DomainTag; 20] = [$(DomainTag::$variant,)*];

            pub fn name(self) -> &'static str {
                match self { $(DomainTag::$variant => $name,)* }
            }
        }

        impl FromStr for DomainTag {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s.trim() {
                    $($name => Ok(DomainTag::$variant),)*
                    other => Err(format!("unknown domain {other:?}")),
                }
            }
        }
    };
}

domains! {
    PlacesLocations => "Places & Locations",
    PersonInstitutions => "Person & Institutions",
    TemporalConcepts => "Temporal Concepts",
    CharacteristicsProperties => "Characteristics & Properties",
    LanguageCultural => "Language & Cultural",
    HistoryEvents => "History & Events",
    PhysicalGeography => "Physical Geography",
    PoliticsIdeologies => "Politics & Ideologies",
    EconomicsLabor => "Economics & Labor",
    NatureHumanInteraction => "Nature & Human Interaction",
    TechnologyInnovation => "Technology & Innovation",
    ScienceQuantitative => "Science & Quantitative Analysis",
    HealthMedicine => "Health & Medicine",
    EducationKnowledge => "Education & Knowledge Systems",
    ArtCreative => "Art & Creative Expressions",
    PhilosophySpiritual => "Philosophy & Spiritual Beliefs",
    MediaCommunication => "Media & Communication Systems",
    EnvironmentSustainability => "Environment & Sustainability",
    LawJustice => "Law & Justice Systems",
    FoodNutrition => "Food & Nutrition",
}

impl fmt::Display for DomainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for DomainTag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for DomainTag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub property_label: String,
    pub main_text: String,
    /// Absent for terminal properties, which can only be the outermost hop.
    pub sub_clause_text: Option<String>,
    pub answer_category: AnswerCategory,
    pub domains: BTreeSet<DomainTag>,
    pub fixed_choice_pool: Option<Vec<String>>,
}

impl Template {
    pub fn is_terminal(&self) -> bool {
        self.sub_clause_text.is_none()
    }
}

fn placeholder_count(text: &str) -> usize {
    text.matches(PLACEHOLDER).count()
}

/// Replaces the single `__` in `template` with `filler`. No other change is
/// made to the text.
pub fn fill(template: &str, filler: &str) -> Result<String> {
    match placeholder_count(template) {
        1 => Ok(template.replacen(PLACEHOLDER, filler, 1)),
        n => Err(Error::Input(format!(
            "template {template:?} has {n} placeholders, expected exactly one"
        ))),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemplateBank {
    templates: BTreeMap<String, Template>,
}

impl TemplateBank {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses bank TSV; `origin` only labels error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let invalid = |row: usize, field: &str, message: String| Error::Validation {
            path: PathBuf::from(origin),
            row,
            field: field.to_string(),
            message,
        };
        let mut lines = text.lines().enumerate();
        let header: Vec<&str> = match lines.next() {
            Some((_, h)) => h.split('\t').map(str::trim).collect(),
            None => return Err(invalid(1, "header", "empty bank file".into())),
        };
        if header != HEADER {
            return Err(invalid(1, "header", format!("expected {:?}, got {header:?}", HEADER)));
        }

        let mut templates = BTreeMap::new();
        for (idx, line) in lines {
            let row = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != HEADER.len() {
                return Err(invalid(row, "row", format!("expected 6 columns, got {}", cols.len())));
            }
            let property = cols[0].trim();
            if property.is_empty() {
                return Err(invalid(row, "property", "empty property label".into()));
            }
            let main = cols[1].trim();
            if placeholder_count(main) != 1 {
                return Err(invalid(row, "main", format!("{main:?} must contain exactly one `__`")));
            }
            let sub = cols[2].trim();
            let sub = if sub.is_empty() {
                None
            } else if placeholder_count(sub) != 1 {
                return Err(invalid(row, "subclause", format!("{sub:?} must contain exactly one `__`")));
            } else {
                Some(sub.to_string())
            };
            let category: AnswerCategory =
                cols[3].trim().parse().map_err(|m| invalid(row, "category", m))?;
            let domains = split_list(cols[4])
                .map(|d| d.parse::<DomainTag>())
                .collect::<std::result::Result<BTreeSet<_>, _>>()
                .map_err(|m| invalid(row, "domains", m))?;
            if domains.is_empty() {
                return Err(invalid(row, "domains", "at least one domain required".into()));
            }
            let pool: Vec<String> = split_list(cols[5]).map(String::from).collect();
            let pool = match (category, pool.is_empty()) {
                (AnswerCategory::Fixed, _) if pool.len() < MIN_FIXED_POOL => {
                    return Err(invalid(
                        row,
                        "fixed_pool",
                        format!("fixed category needs at least {MIN_FIXED_POOL} choices, got {}", pool.len()),
                    ))
                }
                (AnswerCategory::Fixed, _) => Some(pool),
                (_, true) => None,
                (_, false) => {
                    return Err(invalid(row, "fixed_pool", "only fixed-category rows carry a pool".into()))
                }
            };
            let template = Template {
                property_label: property.to_string(),
                main_text: main.to_string(),
                sub_clause_text: sub,
                answer_category: category,
                domains,
                fixed_choice_pool: pool,
            };
            if templates.insert(property.to_string(), template).is_some() {
                return Err(invalid(row, "property", format!("duplicate property {property:?}")));
            }
        }
        Ok(Self { templates })
    }

    /// Serializes back to bank TSV, rows sorted by property.
    pub fn to_tsv(&self) -> String {
        let mut out = HEADER.join("\t");
        out.push('\n');
        for t in self.templates.values() {
            let domains: Vec<&str> = t.domains.iter().map(|d| d.name()).collect();
            let row = [
                t.property_label.as_str(),
                t.main_text.as_str(),
                t.sub_clause_text.as_deref().unwrap_or(""),
                t.answer_category.as_str(),
                &domains.join("|"),
                &t.fixed_choice_pool.as_deref().unwrap_or(&[]).join("|"),
            ];
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn get(&self, property_label: &str) -> Option<&Template> {
        self.templates.get(property_label)
    }

    pub fn domains_of(&self, property_label: &str) -> Result<&BTreeSet<DomainTag>> {
        self.get(property_label)
            .map(|t| &t.domains)
            .ok_or_else(|| Error::NotFound(format!("no template for property {property_label:?}")))
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Template> {
        self.templates.values()
    }
}

fn split_list(field: &str) -> impl Iterator<Item = &str> {
    field.split('|').map(str::trim).filter(|s| !s.is_empty())
}
