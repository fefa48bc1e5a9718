use std::cmp::Ordering;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Opaque, non-empty entity identifier (a Wikidata Q-id or a fixture token).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EntityId(String);

impl EntityId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err(Error::Input("empty entity id".into()));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for EntityId {
    type Error = Error;
    fn try_from(value: String) -> Result<Self> {
        Self::new(value)
    }
}

impl From<EntityId> for String {
    fn from(value: EntityId) -> Self {
        value.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A property (relation). The label keys the template bank.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PropertyId {
    pub id: String,
    pub label: String,
}

impl PropertyId {
    pub fn new(id: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatePrecision {
    Year,
    Month,
    Day,
}

#[derive(Deserialize)]
struct RawDate {
    year: i32,
    #[serde(default)]
    month: Option<u32>,
    #[serde(default)]
    day: Option<u32>,
    precision: DatePrecision,
}

/// A calendar date known to year, month or day precision. Components finer
/// than the precision are absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawDate")]
pub struct CalendarDate {
    year: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    month: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    day: Option<u32>,
    precision: DatePrecision,
}

impl TryFrom<RawDate> for CalendarDate {
    type Error = Error;
    fn try_from(raw: RawDate) -> Result<Self> {
        match (raw.precision, raw.month, raw.day) {
            (DatePrecision::Year, None, None) => Ok(Self::year(raw.year)),
            (DatePrecision::Month, Some(m), None) => Self::month(raw.year, m),
            (DatePrecision::Day, Some(m), Some(d)) => Self::day(raw.year, m, d),
            (p, m, d) => Err(Error::Input(format!(
                "date precision {p:?} inconsistent with month {m:?} / day {d:?}"
            ))),
        }
    }
}

const MONTHS: [&str; 12] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

impl CalendarDate {
    pub fn year(year: i32) -> Self {
        Self {
            year,
            month: None,
            day: None,
            precision: DatePrecision::Year,
        }
    }

    pub fn month(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Input(format!("month {month} out of range")));
        }
        Ok(Self {
            year,
            month: Some(month),
            day: None,
            precision: DatePrecision::Month,
        })
    }

    pub fn day(year: i32, month: u32, day: u32) -> Result<Self> {
        NaiveDate::from_ymd_opt(year, month, day)
            .ok_or_else(|| Error::Input(format!("invalid date {year}-{month}-{day}")))?;
        Ok(Self {
            year,
            month: Some(month),
            day: Some(day),
            precision: DatePrecision::Day,
        })
    }

    pub fn from_naive(date: NaiveDate) -> Self {
        use chrono::Datelike;
        Self {
            year: date.year(),
            month: Some(date.month()),
            day: Some(date.day()),
            precision: DatePrecision::Day,
        }
    }

    pub fn precision(&self) -> DatePrecision {
        self.precision
    }

    pub fn year_value(&self) -> i32 {
        self.year
    }

    pub fn month_value(&self) -> Option<u32> {
        self.month
    }

    /// The date as a `NaiveDate`, using the first day/month for coarser
    /// precisions.
    pub fn to_naive(&self) -> Option<NaiveDate> {
        NaiveDate::from_ymd_opt(self.year, self.month.unwrap_or(1), self.day.unwrap_or(1))
    }

    /// "12 October 1926", "October 1926" or "1926".
    pub fn render(&self) -> String {
        let month = |m: u32| MONTHS[(m - 1) as usize];
        match (self.month, self.day) {
            (Some(m), Some(d)) => format!("{d} {} {}", month(m), self.year),
            (Some(m), None) => format!("{} {}", month(m), self.year),
            _ => self.year.to_string(),
        }
    }
}

/// The object of a statement.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ObjectValue {
    Entity {
        id: EntityId,
        label: String,
    },
    Literal {
        value: String,
    },
    Number {
        value: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        unit: Option<String>,
    },
    Date(CalendarDate),
}

/// Shortest round-trip decimal form, no exponent: `58`, `451.9`.
pub fn format_number(value: f64) -> String {
    let s = format!("{value}");
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

/// Digits after the decimal point in [`format_number`]'s output.
pub fn decimal_places(value: f64) -> usize {
    format_number(value)
        .split_once('.')
        .map_or(0, |(_, frac)| frac.len())
}

impl ObjectValue {
    /// Human-readable form used for questions, choices and answer matching.
    pub fn render(&self) -> String {
        match self {
            ObjectValue::Entity { label, .. } => label.clone(),
            ObjectValue::Literal { value } => value.clone(),
            ObjectValue::Number { value, unit } => with_unit(format_number(*value), unit.as_deref()),
            ObjectValue::Date(d) => d.render(),
        }
    }

    pub fn entity_id(&self) -> Option<&EntityId> {
        match self {
            ObjectValue::Entity { id, .. } => Some(id),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            ObjectValue::Entity { .. } => 0,
            ObjectValue::Literal { .. } => 1,
            ObjectValue::Number { .. } => 2,
            ObjectValue::Date(_) => 3,
        }
    }
}

pub(crate) fn with_unit(number: String, unit: Option<&str>) -> String {
    match unit {
        Some(u) if !u.is_empty() => format!("{number} {u}"),
        _ => number,
    }
}

impl PartialEq for ObjectValue {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ObjectValue {}

impl PartialOrd for ObjectValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ObjectValue {
    fn cmp(&self, other: &Self) -> Ordering {
        use ObjectValue::*;
        match (self, other) {
            (Entity { id: a, label: la }, Entity { id: b, label: lb }) => {
                a.cmp(b).then_with(|| la.cmp(lb))
            }
            (Literal { value: a }, Literal { value: b }) => a.cmp(b),
            (Number { value: a, unit: ua }, Number { value: b, unit: ub }) => {
                a.total_cmp(b).then_with(|| ua.cmp(ub))
            }
            (Date(a), Date(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

/// One knowledge-graph triple.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Statement {
    pub subject: EntityId,
    pub property: PropertyId,
    pub object: ObjectValue,
}

impl Statement {
    pub fn new(subject: EntityId, property: PropertyId, object: ObjectValue) -> Result<Self> {
        if property.label.trim().is_empty() {
            return Err(Error::Input(format!("property {} has an empty label", property.id)));
        }
        if let ObjectValue::Number { value, .. } = &object {
            if !value.is_finite() {
                return Err(Error::Input(format!("non-finite number in {subject}/{}", property.id)));
            }
        }
        Ok(Self {
            subject,
            property,
            object,
        })
    }
}
