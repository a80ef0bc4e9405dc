//! Typed XES event log model.
//!
//! A [`Log`] holds [`Trace`]s, each identified by a case id and holding
//! case-scope attributes plus a timestamp-ordered list of [`Event`]s. The two
//! mandatory event fields (activity and timestamp) and the case id are stored
//! once as struct fields and are mapped to the standard `concept:name` and
//! `time:timestamp` keys on the wire.

mod parse;
mod validate;
mod write;

use std::fmt;

use serde::{Serialize, Serializer};

pub use parse::{parse_xes, XesError};
pub use validate::{validate_log, Scope, Violation};
pub use write::{write_xes, write_xes_with, CaseIdType, WriteOptions};

use crate::time::{format_decimal, format_timestamp, Timestamp};

pub const KEY_CONCEPT_NAME: &str = "concept:name";
pub const KEY_TIMESTAMP: &str = "time:timestamp";

/// Attribute keys the model stores as dedicated fields.
pub const RESERVED_KEYS: [&str; 2] = [KEY_CONCEPT_NAME, KEY_TIMESTAMP];

#[derive(Debug, Clone, PartialEq)]
pub enum AttributeValue {
    String(String),
    Int(i64),
    Float(f64),
    Boolean(bool),
    Date(Timestamp),
}

impl AttributeValue {
    /// XES element tag for this value type.
    pub fn type_tag(&self) -> &'static str {
        match self {
            AttributeValue::String(_) => "string",
            AttributeValue::Int(_) => "int",
            AttributeValue::Float(_) => "float",
            AttributeValue::Boolean(_) => "boolean",
            AttributeValue::Date(_) => "date",
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            AttributeValue::Int(v) => Some(*v as f64),
            AttributeValue::Float(v) => Some(*v),
            _ => None,
        }
    }

    /// Canonical lexical form, as written in the `value` XML attribute.
    pub fn lexical(&self) -> String {
        match self {
            AttributeValue::String(s) => s.clone(),
            AttributeValue::Int(v) => v.to_string(),
            AttributeValue::Float(v) => format_decimal(*v),
            AttributeValue::Boolean(v) => v.to_string(),
            AttributeValue::Date(ts) => format_timestamp(ts),
        }
    }
}

impl fmt::Display for AttributeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.lexical())
    }
}

impl Serialize for AttributeValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            AttributeValue::String(s) => serializer.serialize_str(s),
            AttributeValue::Int(v) => serializer.serialize_i64(*v),
            AttributeValue::Float(v) => serializer.serialize_f64(*v),
            AttributeValue::Boolean(v) => serializer.serialize_bool(*v),
            AttributeValue::Date(ts) => serializer.serialize_str(&format_timestamp(ts)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attribute {
    pub key: String,
    pub value: AttributeValue,
}

impl Attribute {
    pub fn new(key: impl Into<String>, value: AttributeValue) -> Self {
        Self { key: key.into(), value }
    }
}

/// Attribute set kept in lexicographic key order.
///
/// [`AttributeSet::insert`] upholds key uniqueness. [`AttributeSet::push`]
/// does not, so a parsed document with repeated keys stays representable and
/// [`validate_log`] can report it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttributeSet(Vec<Attribute>);

impl AttributeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Attribute> {
        self.0.iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|a| a.key.as_str())
    }

    pub fn get(&self, key: &str) -> Option<&AttributeValue> {
        self.position(key).map(|i| &self.0[i].value)
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.position(key).is_some()
    }

    /// Sets `key` to `value`, returning the previous value if there was one.
    pub fn insert(&mut self, key: impl Into<String>, value: AttributeValue) -> Option<AttributeValue> {
        let key = key.into();
        match self.position(&key) {
            Some(i) => Some(std::mem::replace(&mut self.0[i].value, value)),
            None => {
                self.push(Attribute { key, value });
                None
            }
        }
    }

    /// Adds an attribute without checking for an existing key. Order among
    /// equal keys follows insertion order.
    pub fn push(&mut self, attribute: Attribute) {
        let at = self.0.partition_point(|a| a.key <= attribute.key);
        self.0.insert(at, attribute);
    }

    pub fn remove(&mut self, key: &str) -> Option<AttributeValue> {
        self.position(key).map(|i| self.0.remove(i).value)
    }

    fn position(&self, key: &str) -> Option<usize> {
        let at = self.0.partition_point(|a| a.key.as_str() < key);
        (self.0.get(at).map(|a| a.key.as_str()) == Some(key)).then_some(at)
    }
}

impl FromIterator<Attribute> for AttributeSet {
    fn from_iter<I: IntoIterator<Item = Attribute>>(iter: I) -> Self {
        let mut set = AttributeSet::new();
        for attribute in iter {
            set.push(attribute);
        }
        set
    }
}

impl<'a> IntoIterator for &'a AttributeSet {
    type Item = &'a Attribute;
    type IntoIter = std::slice::Iter<'a, Attribute>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub activity: String,
    pub timestamp: Timestamp,
    pub attributes: AttributeSet,
}

impl Event {
    pub fn new(activity: impl Into<String>, timestamp: Timestamp) -> Self {
        Self {
            activity: activity.into(),
            timestamp,
            attributes: AttributeSet::new(),
        }
    }

    pub fn with_attribute(mut self, key: impl Into<String>, value: AttributeValue) -> Self {
        self.attributes.insert(key, value);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub case_id: String,
    pub attributes: AttributeSet,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn new(case_id: impl Into<String>) -> Self {
        Self {
            case_id: case_id.into(),
            attributes: AttributeSet::new(),
            events: Vec::new(),
        }
    }

    /// Stable sort by timestamp; events with equal timestamps keep their
    /// relative order.
    pub fn sort_events(&mut self) {
        self.events.sort_by_key(|e| e.timestamp);
    }

    /// Inserts `event` after every event whose timestamp is not later than
    /// its own. Returns the insertion index.
    pub fn insert_event(&mut self, event: Event) -> usize {
        let at = self.events.partition_point(|e| e.timestamp <= event.timestamp);
        self.events.insert(at, event);
        at
    }

    /// First and last event timestamps, or `None` for an empty trace.
    pub fn span(&self) -> Option<(Timestamp, Timestamp)> {
        Some((self.events.first()?.timestamp, self.events.last()?.timestamp))
    }
}

/// A `<extension>` declaration carried through unchanged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extension {
    pub name: String,
    pub prefix: String,
    pub uri: String,
}

impl Extension {
    pub fn concept() -> Self {
        Self {
            name: "Concept".into(),
            prefix: "concept".into(),
            uri: "http://www.xes-standard.org/concept.xesext".into(),
        }
    }

    pub fn time() -> Self {
        Self {
            name: "Time".into(),
            prefix: "time".into(),
            uri: "http://www.xes-standard.org/time.xesext".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Log {
    pub extensions: Vec<Extension>,
    pub metadata: AttributeSet,
    pub traces: Vec<Trace>,
}

impl Log {
    /// Empty log declaring the Concept and Time extensions.
    pub fn new() -> Self {
        Self {
            extensions: vec![Extension::concept(), Extension::time()],
            ..Self::default()
        }
    }

    pub fn trace(&self, case_id: &str) -> Option<&Trace> {
        self.traces.iter().find(|t| t.case_id == case_id)
    }

    pub fn event_count(&self) -> usize {
        self.traces.iter().map(|t| t.events.len()).sum()
    }

    /// Union of attribute keys at case and event scope, with the stored
    /// mandatory fields listed under their conceptual names (`case_id`,
    /// `activity`, `timestamp`).
    pub fn schema(&self) -> LogSchema {
        let mut schema = LogSchema::default();
        for trace in &self.traces {
            schema.case_keys.insert("case_id".to_owned());
            schema.case_keys.extend(trace.attributes.keys().map(str::to_owned));
            for event in &trace.events {
                schema.event_keys.insert("activity".to_owned());
                schema.event_keys.insert("timestamp".to_owned());
                schema.event_keys.extend(event.attributes.keys().map(str::to_owned));
            }
        }
        schema
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LogSchema {
    pub case_keys: std::collections::BTreeSet<String>,
    pub event_keys: std::collections::BTreeSet<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::from_millis;

    #[test]
    fn attribute_set_is_key_ordered_and_unique_on_insert() {
        let mut set = AttributeSet::new();
        set.insert("pain", AttributeValue::Int(5));
        set.insert("acuity", AttributeValue::Int(3));
        assert_eq!(set.insert("pain", AttributeValue::Int(2)), Some(AttributeValue::Int(5)));
        assert_eq!(set.keys().collect::<Vec<_>>(), ["acuity", "pain"]);
        assert_eq!(set.get("pain"), Some(&AttributeValue::Int(2)));
        assert!(set.get("missing").is_none());
    }

    #[test]
    fn push_keeps_duplicates() {
        let mut set = AttributeSet::new();
        set.push(Attribute::new("k", AttributeValue::Int(1)));
        set.push(Attribute::new("k", AttributeValue::Int(2)));
        assert_eq!(set.len(), 2);
        assert_eq!(set.get("k"), Some(&AttributeValue::Int(1)));
    }

    #[test]
    fn insert_event_goes_after_equal_timestamps() {
        let mut trace = Trace::new("c");
        trace.events.push(Event::new("a", from_millis(10)));
        trace.events.push(Event::new("b", from_millis(20)));
        let at = trace.insert_event(Event::new("x", from_millis(10)));
        assert_eq!(at, 1);
        let names: Vec<_> = trace.events.iter().map(|e| e.activity.as_str()).collect();
        assert_eq!(names, ["a", "x", "b"]);
    }
}
