//! Coded bilateral political events: parsing, validation and filtering.
//!
//! Records follow the LLM output schema with keys `year`, `country1`,
//! `country2`, `event_name`, `event_description`, `CAMEO_quad_class`,
//! `CAMEO_root_code`, `CAMEO_event_code`, `economic_event`,
//! `Goldstein_Scale`, `relationship` and `evaluation_summary`. Input may be
//! JSON Lines, one JSON array, or objects wrapping the records under
//! `historical_political_events`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const NO_EVENTS_SENTINEL: &str = "No Major Bilateral Events Found";
const WRAPPER_KEY: &str = "historical_political_events";

fn normalize(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QuadClass {
    #[serde(rename = "Verbal Cooperation")]
    VerbalCooperation,
    #[serde(rename = "Material Cooperation")]
    MaterialCooperation,
    #[serde(rename = "Verbal Conflict")]
    VerbalConflict,
    #[serde(rename = "Material Conflict")]
    MaterialConflict,
}

impl QuadClass {
    pub fn is_cooperation(self) -> bool {
        matches!(self, QuadClass::VerbalCooperation | QuadClass::MaterialCooperation)
    }

    fn parse(s: &str) -> Option<Self> {
        match normalize(s).as_str() {
            "verbalcooperation" | "verbalcoop" => Some(QuadClass::VerbalCooperation),
            "materialcooperation" | "materialcoop" => Some(QuadClass::MaterialCooperation),
            "verbalconflict" => Some(QuadClass::VerbalConflict),
            "materialconflict" => Some(QuadClass::MaterialConflict),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EconomicEvent {
    Tariffs,
    #[serde(rename = "Economic Sanctions")]
    EconomicSanctions,
    #[serde(rename = "Trade Agreements and Treaties")]
    TradeAgreementsAndTreaties,
    #[serde(rename = "Other Economic Policies")]
    OtherEconomicPolicies,
    #[serde(rename = "Not an economic event")]
    NotAnEconomicEvent,
}

impl EconomicEvent {
    pub const ALL: [EconomicEvent; 5] = [
        EconomicEvent::Tariffs,
        EconomicEvent::EconomicSanctions,
        EconomicEvent::TradeAgreementsAndTreaties,
        EconomicEvent::OtherEconomicPolicies,
        EconomicEvent::NotAnEconomicEvent,
    ];

    fn parse(s: &str) -> Option<Self> {
        match normalize(s).as_str() {
            "tariffs" | "tariff" => Some(EconomicEvent::Tariffs),
            "economicsanctions" | "sanctions" => Some(EconomicEvent::EconomicSanctions),
            "tradeagreementsandtreaties" => Some(EconomicEvent::TradeAgreementsAndTreaties),
            "othereconomicpolicies" => Some(EconomicEvent::OtherEconomicPolicies),
            "notaneconomicevent" | "noteconomic" | "notecon" | "none" => {
                Some(EconomicEvent::NotAnEconomicEvent)
            }
            _ => None,
        }
    }
}

/// Overall relationship category assigned to a pair-year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relationship {
    #[serde(rename = "State of War / Active Conflict")]
    War,
    #[serde(rename = "Crisis / Intense Confrontation")]
    Crisis,
    #[serde(rename = "Hostile / Antagonistic Relationship")]
    Hostile,
    #[serde(rename = "Competitive / Rivalrous Relationship")]
    Competitive,
    #[serde(rename = "Limited Contact / Cool Relationship")]
    LimitedContact,
    #[serde(rename = "Selective Cooperation / Transactional Relationship")]
    SelectiveCooperation,
    #[serde(rename = "Broad Cooperation / Partnership")]
    BroadCooperation,
    #[serde(rename = "Strategic Partnership")]
    StrategicPartnership,
    Alliance,
}

impl Relationship {
    pub const ALL: [Relationship; 9] = [
        Relationship::War,
        Relationship::Crisis,
        Relationship::Hostile,
        Relationship::Competitive,
        Relationship::LimitedContact,
        Relationship::SelectiveCooperation,
        Relationship::BroadCooperation,
        Relationship::StrategicPartnership,
        Relationship::Alliance,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Relationship::War => "State of War / Active Conflict",
            Relationship::Crisis => "Crisis / Intense Confrontation",
            Relationship::Hostile => "Hostile / Antagonistic Relationship",
            Relationship::Competitive => "Competitive / Rivalrous Relationship",
            Relationship::LimitedContact => "Limited Contact / Cool Relationship",
            Relationship::SelectiveCooperation => {
                "Selective Cooperation / Transactional Relationship"
            }
            Relationship::BroadCooperation => "Broad Cooperation / Partnership",
            Relationship::StrategicPartnership => "Strategic Partnership",
            Relationship::Alliance => "Alliance",
        }
    }

    /// Accepts the full label or either side of the slash, ignoring case and
    /// punctuation.
    fn parse(s: &str) -> Option<Self> {
        let key = normalize(s);
        Relationship::ALL.into_iter().find(|r| {
            let label = r.label();
            normalize(label) == key || label.split('/').any(|part| normalize(part) == key)
        })
    }
}

impl fmt::Display for Relationship {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One validated bilateral event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub year: i32,
    pub country1: String,
    pub country2: String,
    pub event_name: String,
    pub event_description: String,
    #[serde(rename = "CAMEO_quad_class")]
    pub cameo_quad_class: QuadClass,
    #[serde(rename = "CAMEO_root_code")]
    pub cameo_root_code: u8,
    #[serde(rename = "CAMEO_event_code")]
    pub cameo_event_code: u16,
    pub economic_event: EconomicEvent,
    #[serde(rename = "Goldstein_Scale")]
    pub goldstein: f64,
    pub relationship: Relationship,
    pub evaluation_summary: String,
}

impl EventRecord {
    /// Checks the record invariants; `index` is used in the error.
    pub fn validate(&self, index: usize) -> Result<()> {
        if !self.goldstein.is_finite() || !(-10.0..=10.0).contains(&self.goldstein) {
            return Err(Error::validation(
                index,
                "Goldstein_Scale",
                format!("goldstein out of range: {}", self.goldstein),
            ));
        }
        if !(1..=20).contains(&self.cameo_root_code) {
            return Err(Error::validation(
                index,
                "CAMEO_root_code",
                format!("root code {} outside 1-20", self.cameo_root_code),
            ));
        }
        if !(10..=209).contains(&self.cameo_event_code) {
            return Err(Error::validation(
                index,
                "CAMEO_event_code",
                format!("event code {} is not a three-digit code", self.cameo_event_code),
            ));
        }
        if self.cameo_event_code / 10 != u16::from(self.cameo_root_code) {
            return Err(Error::validation(
                index,
                "CAMEO_event_code",
                format!(
                    "event code prefix mismatch: {:03} does not start with root {:02}",
                    self.cameo_event_code, self.cameo_root_code
                ),
            ));
        }
        let coop_root = self.cameo_root_code <= 8;
        if coop_root != self.cameo_quad_class.is_cooperation() {
            return Err(Error::validation(
                index,
                "CAMEO_quad_class",
                format!(
                    "quad class {:?} inconsistent with root code {}",
                    self.cameo_quad_class, self.cameo_root_code
                ),
            ));
        }
        if self.country1.is_empty() || self.country2.is_empty() {
            return Err(Error::validation(index, "country1", "empty country code"));
        }
        if self.country1 == self.country2 {
            return Err(Error::validation(
                index,
                "country2",
                format!("country1 equals country2 ({})", self.country1),
            ));
        }
        Ok(())
    }

    /// Unordered pair key, lexicographically sorted.
    pub fn pair(&self) -> (String, String) {
        ordered_pair(&self.country1, &self.country2)
    }
}

pub fn ordered_pair(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Relationship category for a pair-year that carried no events.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationshipAnnotation {
    pub year: i32,
    pub country1: String,
    pub country2: String,
    pub relationship: Option<Relationship>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    pub index: usize,
    pub field: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Abort on the first invalid record.
    #[default]
    Strict,
    /// Collect invalid records in the rejection report.
    Lenient,
}

#[derive(Debug, Clone, Default)]
pub struct ParseReport {
    pub events: Vec<EventRecord>,
    pub annotations: Vec<RelationshipAnnotation>,
    pub rejections: Vec<Rejection>,
    /// Records sharing pair, year and event name with an earlier record.
    /// They are kept.
    pub duplicates: usize,
}

/// Parses JSON Lines, a JSON array, or wrapper objects into validated events.
pub fn parse_events(source: &str, mode: ParseMode) -> Result<ParseReport> {
    let mut report = ParseReport::default();
    let mut seen: HashMap<(String, String, i32, String), usize> = HashMap::new();
    let mut index = 0usize;

    let stream = serde_json::Deserializer::from_str(source).into_iter::<Value>();
    for item in stream {
        let value = item.map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        for raw in flatten(value) {
            let current = index;
            index += 1;
            match record_from_value(&raw, current) {
                Ok(Parsed::Event(ev)) => {
                    let key = {
                        let (a, b) = ev.pair();
                        (a, b, ev.year, ev.event_name.clone())
                    };
                    let count = seen.entry(key).or_insert(0);
                    if *count > 0 {
                        report.duplicates += 1;
                    }
                    *count += 1;
                    report.events.push(ev);
                }
                Ok(Parsed::Sentinel(note)) => report.annotations.push(note),
                Err(err) => match mode {
                    ParseMode::Strict => return Err(err),
                    ParseMode::Lenient => {
                        if let Error::Validation { index, field, reason } = err {
                            report.rejections.push(Rejection { index, field, reason });
                        } else {
                            return Err(err);
                        }
                    }
                },
            }
        }
    }
    if report.duplicates > 0 {
        log::info!("{} duplicate event records passed through", report.duplicates);
    }
    Ok(report)
}

fn flatten(value: Value) -> Vec<Value> {
    match value {
        Value::Array(items) => items.into_iter().flat_map(flatten).collect(),
        Value::Object(mut map) if map.contains_key(WRAPPER_KEY) => {
            flatten(map.remove(WRAPPER_KEY).unwrap_or(Value::Null))
        }
        other => vec![other],
    }
}

enum Parsed {
    Event(EventRecord),
    Sentinel(RelationshipAnnotation),
}

fn record_from_value(value: &Value, index: usize) -> Result<Parsed> {
    let obj = value
        .as_object()
        .ok_or_else(|| Error::validation(index, "record", "expected a JSON object"))?;
    let get = |field: &str| obj.get(field).filter(|v| !v.is_null());

    let text = |field: &str| -> Result<String> {
        match get(field) {
            Some(Value::String(s)) => Ok(s.trim().to_string()),
            Some(other) => Err(Error::validation(index, field, format!("expected text, got {other}"))),
            None => Err(Error::validation(index, field, "missing")),
        }
    };
    let optional_text = |field: &str| -> String {
        match get(field) {
            Some(Value::String(s)) => s.trim().to_string(),
            Some(other) => other.to_string(),
            None => String::new(),
        }
    };
    let integer = |field: &str| -> Result<i64> {
        match get(field) {
            Some(Value::Number(n)) => n
                .as_i64()
                .or_else(|| n.as_f64().filter(|f| f.fract() == 0.0).map(|f| f as i64))
                .ok_or_else(|| Error::validation(index, field, format!("not an integer: {n}"))),
            Some(Value::String(s)) => s
                .trim()
                .parse::<i64>()
                .map_err(|_| Error::validation(index, field, format!("not an integer: {s:?}"))),
            Some(other) => Err(Error::validation(index, field, format!("not an integer: {other}"))),
            None => Err(Error::validation(index, field, "missing")),
        }
    };

    let year = integer("year")?;
    let year = i32::try_from(year)
        .map_err(|_| Error::validation(index, "year", format!("year {year} out of range")))?;
    let country1 = text("country1")?;
    let country2 = text("country2")?;
    let event_name = optional_text("event_name");

    let relationship = match get("relationship") {
        Some(Value::String(s)) => Some(Relationship::parse(s).ok_or_else(|| {
            Error::validation(index, "relationship", format!("unknown category {s:?}"))
        })?),
        Some(other) => {
            return Err(Error::validation(index, "relationship", format!("expected text, got {other}")))
        }
        None => None,
    };

    if normalize(&event_name) == normalize(NO_EVENTS_SENTINEL) {
        return Ok(Parsed::Sentinel(RelationshipAnnotation {
            year,
            country1,
            country2,
            relationship,
        }));
    }
    let relationship =
        relationship.ok_or_else(|| Error::validation(index, "relationship", "missing"))?;

    let quad_raw = text("CAMEO_quad_class")?;
    let cameo_quad_class = QuadClass::parse(&quad_raw).ok_or_else(|| {
        Error::validation(index, "CAMEO_quad_class", format!("unknown quad class {quad_raw:?}"))
    })?;
    let root = integer("CAMEO_root_code")?;
    let cameo_root_code = u8::try_from(root).map_err(|_| {
        Error::validation(index, "CAMEO_root_code", format!("root code {root} outside 1-20"))
    })?;
    let cameo_event_code = match get("CAMEO_event_code") {
        Some(Value::String(s)) => {
            let s = s.trim();
            if s.len() != 3 || !s.bytes().all(|b| b.is_ascii_digit()) {
                return Err(Error::validation(
                    index,
                    "CAMEO_event_code",
                    format!("event code {s:?} is not a three-digit code"),
                ));
            }
            s.parse::<u16>().expect("three ascii digits")
        }
        _ => {
            let code = integer("CAMEO_event_code")?;
            u16::try_from(code).map_err(|_| {
                Error::validation(index, "CAMEO_event_code", format!("invalid event code {code}"))
            })?
        }
    };
    let econ_raw = text("economic_event")?;
    let economic_event = EconomicEvent::parse(&econ_raw).ok_or_else(|| {
        Error::validation(index, "economic_event", format!("unknown class {econ_raw:?}"))
    })?;
    let goldstein = match get("Goldstein_Scale") {
        Some(Value::Number(n)) => n.as_f64().unwrap_or(f64::NAN),
        Some(Value::String(s)) => s.trim().parse::<f64>().map_err(|_| {
            Error::validation(index, "Goldstein_Scale", format!("not a number: {s:?}"))
        })?,
        Some(other) => {
            return Err(Error::validation(index, "Goldstein_Scale", format!("not a number: {other}")))
        }
        None => return Err(Error::validation(index, "Goldstein_Scale", "missing")),
    };

    let record = EventRecord {
        year,
        country1,
        country2,
        event_name,
        event_description: optional_text("event_description"),
        cameo_quad_class,
        cameo_root_code,
        cameo_event_code,
        economic_event,
        goldstein,
        relationship,
        evaluation_summary: optional_text("evaluation_summary"),
    };
    record.validate(index)?;
    Ok(Parsed::Event(record))
}

/// Selection clauses over validated events. An absent clause matches all.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventFilter {
    pub root_codes: Option<(u8, u8)>,
    pub economic_classes: Option<BTreeSet<EconomicEvent>>,
    pub goldstein_min: Option<f64>,
    pub goldstein_max: Option<f64>,
}

impl EventFilter {
    pub fn new(
        root_codes: Option<(u8, u8)>,
        economic_classes: Option<BTreeSet<EconomicEvent>>,
        goldstein_min: Option<f64>,
        goldstein_max: Option<f64>,
    ) -> Result<Self> {
        if let Some((lo, hi)) = root_codes {
            if lo > hi {
                return Err(Error::Config(format!("root code interval {lo}-{hi} is reversed")));
            }
        }
        if let (Some(lo), Some(hi)) = (goldstein_min, goldstein_max) {
            if lo > hi {
                return Err(Error::Config(format!("goldstein bounds {lo} > {hi}")));
            }
        }
        Ok(Self {
            root_codes,
            economic_classes,
            goldstein_min,
            goldstein_max,
        })
    }

    /// Non-economic mild conflicts: roots 9-18, not an economic event,
    /// Goldstein score at most zero.
    pub fn instrument() -> Self {
        Self {
            root_codes: Some((9, 18)),
            economic_classes: Some([EconomicEvent::NotAnEconomicEvent].into_iter().collect()),
            goldstein_min: None,
            goldstein_max: Some(0.0),
        }
    }

    pub fn matches(&self, ev: &EventRecord) -> bool {
        if let Some((lo, hi)) = self.root_codes {
            if ev.cameo_root_code < lo || ev.cameo_root_code > hi {
                return false;
            }
        }
        if let Some(classes) = &self.economic_classes {
            if !classes.contains(&ev.economic_event) {
                return false;
            }
        }
        if self.goldstein_min.is_some_and(|lo| ev.goldstein < lo) {
            return false;
        }
        if self.goldstein_max.is_some_and(|hi| ev.goldstein > hi) {
            return false;
        }
        true
    }
}

pub fn filter_events(events: &[EventRecord], filter: &EventFilter) -> Vec<EventRecord> {
    events.iter().filter(|e| filter.matches(e)).cloned().collect()
}

/// Canonical JSON Lines output, one record per line.
pub fn write_jsonl<W: Write>(events: &[EventRecord], mut out: W) -> Result<()> {
    for ev in events {
        let line = serde_json::to_string(ev).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn write_rejections_csv<W: Write>(rejections: &[Rejection], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["record_index", "field", "reason"])?;
    for r in rejections {
        w.write_record([r.index.to_string(), r.field.clone(), r.reason.clone()])?;
    }
    w.flush()?;
    Ok(())
}
