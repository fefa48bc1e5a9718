use std::collections::BTreeMap;
use std::time::Duration;

use serde::Deserialize;
use url::Url;

use super::types::{CalendarDate, EntityId, ObjectValue, PropertyId, Statement};
use super::KgBackend;
use crate::{Error, Result};

const ENTITY_PREFIX: &str = "http://www.wikidata.org/entity/";
/// Wikidata's "dimensionless" unit.
const UNIT_ONE: &str = "http://www.wikidata.org/entity/Q199";

#[derive(Debug, Clone)]
pub struct SparqlConfig {
    pub endpoint: Url,
    /// Label language, e.g. `en`.
    pub language: String,
    pub timeout: Duration,
    pub retries: u32,
}

impl SparqlConfig {
    pub fn new(endpoint: &str) -> Result<Self> {
        Ok(Self {
            endpoint: Url::parse(endpoint)
                .map_err(|e| Error::Config(format!("bad endpoint URL {endpoint:?}: {e}")))?,
            language: "en".into(),
            timeout: Duration::from_secs(30),
            retries: 2,
        })
    }
}

/// One cell of a SPARQL JSON results binding.
#[derive(Debug, Clone, Deserialize, PartialEq)]
pub struct Term {
    #[serde(rename = "type")]
    pub kind: String,
    pub value: String,
    #[serde(default)]
    pub datatype: Option<String>,
    #[serde(default, rename = "xml:lang")]
    pub lang: Option<String>,
}

pub type Row = BTreeMap<String, Term>;

#[derive(Deserialize)]
struct SelectResults {
    results: Bindings,
}

#[derive(Deserialize)]
struct Bindings {
    bindings: Vec<Row>,
}

/// Parses the standard SPARQL 1.1 JSON results serialization.
pub fn parse_select_results(body: &str) -> Result<Vec<Row>> {
    let parsed: SelectResults = serde_json::from_str(body)
        .map_err(|e| Error::Transport(format!("malformed SPARQL JSON results: {e}")))?;
    Ok(parsed.results.bindings)
}

/// Knowledge-graph backend speaking SPARQL over HTTP to a Wikidata-style
/// endpoint.
pub struct SparqlBackend {
    config: SparqlConfig,
    client: reqwest::blocking::Client,
}

impl std::fmt::Debug for SparqlBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparqlBackend").field("config", &self.config).finish()
    }
}

fn string_literal(s: &str) -> String {
    let escaped = s
        .replace('\\', "\\\\")
        .replace('"', "\\\"")
        .replace('\n', "\\n")
        .replace('\r', "\\r");
    format!("\"{escaped}\"")
}

fn local_id(uri: &str) -> Option<&str> {
    uri.strip_prefix(ENTITY_PREFIX)
}

impl SparqlBackend {
    pub fn new(config: SparqlConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .user_agent(concat!("kgvqa/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(Self { config, client })
    }

    pub fn select(&self, query: &str) -> Result<Vec<Row>> {
        let url = Url::parse_with_params(
            self.config.endpoint.as_str(),
            &[("query", query), ("format", "json")],
        )
        .map_err(|e| Error::Config(e.to_string()))?;
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                log::warn!("SPARQL retry {attempt}/{}: {last}", self.config.retries);
                std::thread::sleep(Duration::from_millis(200 * u64::from(attempt)));
            }
            let response = match self
                .client
                .get(url.clone())
                .header("Accept", "application/sparql-results+json")
                .send()
            {
                Ok(r) => r,
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            };
            let status = response.status();
            if status.is_server_error() || status.as_u16() == 429 {
                last = format!("HTTP {status}");
                continue;
            }
            if !status.is_success() {
                return Err(Error::Transport(format!("HTTP {status} from {}", self.config.endpoint)));
            }
            let body = response.text().map_err(|e| Error::Transport(e.to_string()))?;
            return parse_select_results(&body);
        }
        Err(Error::Transport(format!(
            "{} unreachable after {} attempts: {last}",
            self.config.endpoint,
            self.config.retries + 1
        )))
    }

    fn single_item(&self, rows: Vec<Row>, what: &str) -> Result<Option<EntityId>> {
        let mut ids: Vec<&str> = rows
            .iter()
            .filter_map(|r| r.get("item"))
            .filter_map(|t| local_id(&t.value))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() > 1 {
            log::warn!("{what} matches {} entities, using {}", ids.len(), ids[0]);
        }
        ids.first().map(|id| EntityId::new(*id)).transpose()
    }

    fn statements_query(&self, entity: &EntityId) -> String {
        format!(
            r#"SELECT ?prop ?propLabel ?value ?valueLabel ?amount ?unit ?unitLabel ?time ?precision WHERE {{
  wd:{id} ?claim ?st .
  ?prop wikibase:claim ?claim ; wikibase:statementProperty ?ps .
  ?st ?ps ?value .
  OPTIONAL {{
    ?prop wikibase:statementValue ?psv . ?st ?psv ?node .
    OPTIONAL {{ ?node wikibase:quantityAmount ?amount ; wikibase:quantityUnit ?unit . }}
    OPTIONAL {{ ?node wikibase:timeValue ?time ; wikibase:timePrecision ?precision . }}
  }}
  SERVICE wikibase:label {{ bd:serviceParam wikibase:language "{lang}". }}
}}"#,
            id = entity.as_str(),
            lang = self.config.language
        )
    }
}

/// Converts rows of the statements query into typed statements. Rows that
/// cannot be typed (non-entity URIs, other-language text, missing labels)
/// are dropped.
pub(crate) fn statements_from_rows(subject: &EntityId, rows: &[Row], language: &str) -> Vec<Statement> {
    let mut out = Vec::new();
    for row in rows {
        let (Some(prop), Some(value)) = (row.get("prop"), row.get("value")) else {
            continue;
        };
        let Some(pid) = local_id(&prop.value) else {
            continue;
        };
        let label = match row.get("propLabel") {
            Some(l) if l.value != pid => l.value.clone(),
            _ => {
                log::warn!("property {pid} has no {language} label, skipped");
                continue;
            }
        };
        let object = if let (Some(time), Some(precision)) = (row.get("time"), row.get("precision")) {
            match parse_time(&time.value, &precision.value) {
                Some(d) => ObjectValue::Date(d),
                None => continue,
            }
        } else if let Some(amount) = row.get("amount") {
            let Ok(v) = amount.value.trim_start_matches('+').parse::<f64>() else {
                continue;
            };
            let unit = row
                .get("unit")
                .filter(|u| u.value != UNIT_ONE)
                .and_then(|_| row.get("unitLabel"))
                .map(|l| l.value.clone());
            ObjectValue::Number { value: v, unit }
        } else if value.kind == "uri" {
            let Some(target) = local_id(&value.value) else {
                continue;
            };
            match row.get("valueLabel") {
                Some(l) if l.value != target => ObjectValue::Entity {
                    id: match EntityId::new(target) {
                        Ok(id) => id,
                        Err(_) => continue,
                    },
                    label: l.value.clone(),
                },
                _ => {
                    log::warn!("{subject}/{pid}: {target} has no {language} label, skipped");
                    continue;
                }
            }
        } else {
            if value.lang.as_deref().is_some_and(|l| l != language) {
                continue;
            }
            match value.datatype.as_deref() {
                Some(dt) if dt.ends_with("#decimal") || dt.ends_with("#integer") || dt.ends_with("#double") => {
                    match value.value.parse::<f64>() {
                        Ok(v) => ObjectValue::Number { value: v, unit: None },
                        Err(_) => continue,
                    }
                }
                _ => ObjectValue::Literal {
                    value: value.value.clone(),
                },
            }
        };
        if let Ok(s) = Statement::new(subject.clone(), PropertyId::new(pid, label), object) {
            out.push(s);
        }
    }
    out
}

/// Parses a Wikidata time value such as `+1889-03-31T00:00:00Z` with its
/// numeric precision (9 = year, 10 = month, 11 = day; coarser maps to year).
fn parse_time(value: &str, precision: &str) -> Option<CalendarDate> {
    let precision: u32 = precision.parse().ok()?;
    let (negative, body) = match value.as_bytes().first()? {
        b'-' => (true, &value[1..]),
        b'+' => (false, &value[1..]),
        _ => (false, value),
    };
    let date = body.split('T').next()?;
    let mut parts = date.split('-');
    let year: i32 = parts.next()?.parse().ok()?;
    let year = if negative { -year } else { year };
    let month: u32 = parts.next()?.parse().ok()?;
    let day: u32 = parts.next()?.parse().ok()?;
    match precision {
        0..=9 => Some(CalendarDate::year(year)),
        10 => CalendarDate::month(year, month).ok(),
        _ => CalendarDate::day(year, month, day).ok(),
    }
}

impl KgBackend for SparqlBackend {
    fn entity_by_synset_id(&self, synset_id: &str) -> Result<Option<EntityId>> {
        // P8814: WordNet synset ID
        let q = format!(
            "SELECT ?item WHERE {{ ?item wdt:P8814 {} . }} LIMIT 10",
            string_literal(synset_id)
        );
        let rows = self.select(&q)?;
        self.single_item(rows, synset_id)
    }

    fn entity_by_commons_name(&self, name: &str) -> Result<Option<EntityId>> {
        // P373: Commons category
        let q = format!(
            "SELECT ?item WHERE {{ ?item wdt:P373 {} . }} LIMIT 10",
            string_literal(name)
        );
        let rows = self.select(&q)?;
        self.single_item(rows, name)
    }

    fn fetch_statements(&self, entity: &EntityId) -> Result<Vec<Statement>> {
        let rows = self.select(&self.statements_query(entity))?;
        Ok(statements_from_rows(entity, &rows, &self.config.language))
    }
}
