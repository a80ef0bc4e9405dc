use std::collections::HashMap;

use quick_xml::events::{BytesStart, Event as XmlEvent};
use quick_xml::Reader;
use thiserror::Error;

use super::{Attribute, AttributeSet, AttributeValue, Event, Extension, Log, Trace, KEY_CONCEPT_NAME, KEY_TIMESTAMP};
use crate::time::{parse_decimal, parse_timestamp};

/// Byte offset plus 1-based line and column of a location in the document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Position {
    pub offset: usize,
    pub line: usize,
    pub column: usize,
}

impl std::fmt::Display for Position {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}, column {}", self.line, self.column)
    }
}

#[derive(Debug, Error)]
pub enum XesError {
    #[error("XML syntax error at {position}: {message}")]
    Syntax { position: Position, message: String },
    #[error("unexpected structure at {position}: {message}")]
    Structure { position: Position, message: String },
    #[error("unknown attribute type <{tag}> at {position}")]
    UnknownAttributeType { tag: String, position: Position },
    #[error("unsupported attribute <{tag}> at {position}: {reason}")]
    UnsupportedAttribute {
        tag: String,
        position: Position,
        reason: &'static str,
    },
    #[error("invalid {tag} value {value:?} for key {key:?} at {position}")]
    InvalidValue {
        key: String,
        tag: String,
        value: String,
        position: Position,
    },
    #[error("trace {trace_index}: missing case id ({KEY_CONCEPT_NAME})")]
    MissingCaseId { trace_index: usize },
    #[error("trace {trace_index}, event {event_index}: missing mandatory {field}")]
    MissingMandatory {
        trace_index: usize,
        event_index: usize,
        field: &'static str,
    },
    #[error("trace {trace_index}: duplicate case id {case_id:?}")]
    DuplicateCaseId { trace_index: usize, case_id: String },
}

fn position_of(document: &[u8], offset: usize) -> Position {
    let offset = offset.min(document.len());
    let before = &document[..offset];
    let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
    let line_start = before.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let column = String::from_utf8_lossy(&before[line_start..]).chars().count() + 1;
    Position { offset, line, column }
}

/// Owned view of one XML element start.
struct Element {
    name: String,
    attrs: HashMap<String, String>,
    empty: bool,
    offset: usize,
}

enum Node {
    Open(Element),
    Close,
    Eof,
}

struct Cursor<'a> {
    document: &'a [u8],
    reader: Reader<&'a [u8]>,
}

impl<'a> Cursor<'a> {
    fn new(document: &'a [u8]) -> Self {
        let mut reader = Reader::from_reader(document);
        reader.config_mut().trim_text(true);
        Self { document, reader }
    }

    fn position(&self, offset: usize) -> Position {
        position_of(self.document, offset)
    }

    fn syntax(&self, offset: usize, message: impl ToString) -> XesError {
        XesError::Syntax {
            position: self.position(offset),
            message: message.to_string(),
        }
    }

    fn structure(&self, offset: usize, message: impl Into<String>) -> XesError {
        XesError::Structure {
            position: self.position(offset),
            message: message.into(),
        }
    }

    fn next(&mut self) -> Result<Node, XesError> {
        loop {
            let offset = self.reader.buffer_position() as usize;
            let event = self
                .reader
                .read_event()
                .map_err(|e| self.syntax(self.reader.error_position() as usize, e))?;
            match event {
                XmlEvent::Start(start) => return self.element(&start, false, offset).map(Node::Open),
                XmlEvent::Empty(start) => return self.element(&start, true, offset).map(Node::Open),
                XmlEvent::End(_) => return Ok(Node::Close),
                XmlEvent::Eof => return Ok(Node::Eof),
                _ => continue,
            }
        }
    }

    fn element(&self, start: &BytesStart<'_>, empty: bool, offset: usize) -> Result<Element, XesError> {
        let name = String::from_utf8_lossy(start.name().as_ref()).into_owned();
        let mut attrs = HashMap::new();
        for attr in start.attributes() {
            let attr = attr.map_err(|e| self.syntax(offset, e))?;
            let key = String::from_utf8_lossy(attr.key.as_ref()).into_owned();
            let value = attr.unescape_value().map_err(|e| self.syntax(offset, e))?.into_owned();
            attrs.insert(key, value);
        }
        Ok(Element {
            name,
            attrs,
            empty,
            offset,
        })
    }

    /// Consumes everything up to and including the end tag of `element`.
    fn skip(&mut self, element: &Element) -> Result<(), XesError> {
        if element.empty {
            return Ok(());
        }
        let mut depth = 1usize;
        while depth > 0 {
            match self.next()? {
                Node::Open(child) if !child.empty => depth += 1,
                Node::Open(_) => {}
                Node::Close => depth -= 1,
                Node::Eof => return Err(self.syntax(self.document.len(), "unexpected end of document")),
            }
        }
        Ok(())
    }

    fn attribute(&mut self, element: &Element) -> Result<Attribute, XesError> {
        let tag = element.name.as_str();
        match tag {
            "string" | "int" | "float" | "boolean" | "date" => {}
            "list" | "container" => {
                return Err(XesError::UnsupportedAttribute {
                    tag: tag.to_owned(),
                    position: self.position(element.offset),
                    reason: "collection attributes are not supported",
                })
            }
            _ => {
                return Err(XesError::UnknownAttributeType {
                    tag: tag.to_owned(),
                    position: self.position(element.offset),
                })
            }
        }
        let key = element
            .attrs
            .get("key")
            .filter(|k| !k.is_empty())
            .ok_or_else(|| self.structure(element.offset, format!("<{tag}> without a key")))?
            .clone();
        let raw = element
            .attrs
            .get("value")
            .ok_or_else(|| self.structure(element.offset, format!("<{tag} key={key:?}> without a value")))?;
        let invalid = || XesError::InvalidValue {
            key: key.clone(),
            tag: tag.to_owned(),
            value: raw.clone(),
            position: self.position(element.offset),
        };
        let value = match tag {
            "string" => AttributeValue::String(raw.clone()),
            "int" => AttributeValue::Int(raw.trim().parse().map_err(|_| invalid())?),
            "float" => AttributeValue::Float(parse_decimal(raw).ok_or_else(invalid)?),
            "boolean" => AttributeValue::Boolean(match raw.trim() {
                "true" | "1" => true,
                "false" | "0" => false,
                _ => return Err(invalid()),
            }),
            _ => AttributeValue::Date(parse_timestamp(raw).ok_or_else(invalid)?),
        };
        if !element.empty {
            match self.next()? {
                Node::Close => {}
                Node::Open(child) => {
                    return Err(XesError::UnsupportedAttribute {
                        tag: child.name,
                        position: self.position(child.offset),
                        reason: "nested attributes are not supported",
                    })
                }
                Node::Eof => return Err(self.syntax(self.document.len(), "unexpected end of document")),
            }
        }
        Ok(Attribute { key, value })
    }
}

/// Parses an XES document into a [`Log`].
///
/// Supported attribute types are `string`, `int`, `float`, `boolean` and
/// `date`. `<global>` and `<classifier>` declarations are skipped;
/// `<extension>` declarations are kept. Events are stably re-sorted by
/// timestamp.
pub fn parse_xes(document: &[u8]) -> Result<Log, XesError> {
    let mut cursor = Cursor::new(document);
    let root = match cursor.next()? {
        Node::Open(element) if element.name == "log" => element,
        Node::Open(element) => {
            return Err(cursor.structure(element.offset, format!("expected <log>, found <{}>", element.name)))
        }
        _ => return Err(cursor.structure(0, "document has no <log> element")),
    };
    let mut log = Log::default();
    if root.empty {
        return Ok(log);
    }
    loop {
        match cursor.next()? {
            Node::Close => break,
            Node::Eof => return Err(cursor.syntax(document.len(), "unexpected end of document")),
            Node::Open(element) => match element.name.as_str() {
                "extension" => {
                    log.extensions.push(Extension {
                        name: element.attrs.get("name").cloned().unwrap_or_default(),
                        prefix: element.attrs.get("prefix").cloned().unwrap_or_default(),
                        uri: element.attrs.get("uri").cloned().unwrap_or_default(),
                    });
                    cursor.skip(&element)?;
                }
                "global" | "classifier" => cursor.skip(&element)?,
                "trace" => {
                    let trace_index = log.traces.len();
                    let trace = parse_trace(&mut cursor, &element, trace_index)?;
                    log.traces.push(trace);
                }
                _ => {
                    let attribute = cursor.attribute(&element)?;
                    log.metadata.push(attribute);
                }
            },
        }
    }
    let mut seen = HashMap::new();
    for (trace_index, trace) in log.traces.iter().enumerate() {
        if seen.insert(trace.case_id.as_str(), trace_index).is_some() {
            return Err(XesError::DuplicateCaseId {
                trace_index,
                case_id: trace.case_id.clone(),
            });
        }
    }
    Ok(log)
}

fn parse_trace(cursor: &mut Cursor<'_>, element: &Element, trace_index: usize) -> Result<Trace, XesError> {
    let mut case_id = None;
    let mut attributes = AttributeSet::new();
    let mut events = Vec::new();
    if !element.empty {
        loop {
            match cursor.next()? {
                Node::Close => break,
                Node::Eof => return Err(cursor.syntax(cursor.document.len(), "unexpected end of document")),
                Node::Open(child) if child.name == "event" => {
                    let event_index = events.len();
                    events.push(parse_event(cursor, &child, trace_index, event_index)?);
                }
                Node::Open(child) => {
                    let attribute = cursor.attribute(&child)?;
                    if attribute.key == KEY_CONCEPT_NAME {
                        if case_id.is_some() {
                            return Err(cursor.structure(child.offset, "trace declares concept:name twice"));
                        }
                        case_id = Some(attribute.value.lexical());
                    } else {
                        attributes.push(attribute);
                    }
                }
            }
        }
    }
    let case_id = case_id.ok_or(XesError::MissingCaseId { trace_index })?;
    let mut trace = Trace {
        case_id,
        attributes,
        events,
    };
    trace.sort_events();
    Ok(trace)
}

fn parse_event(
    cursor: &mut Cursor<'_>,
    element: &Element,
    trace_index: usize,
    event_index: usize,
) -> Result<Event, XesError> {
    let mut activity = None;
    let mut timestamp = None;
    let mut attributes = AttributeSet::new();
    if !element.empty {
        loop {
            match cursor.next()? {
                Node::Close => break,
                Node::Eof => return Err(cursor.syntax(cursor.document.len(), "unexpected end of document")),
                Node::Open(child) => {
                    let attribute = cursor.attribute(&child)?;
                    match attribute.key.as_str() {
                        KEY_CONCEPT_NAME => {
                            if activity.replace(attribute.value.lexical()).is_some() {
                                return Err(cursor.structure(child.offset, "event declares concept:name twice"));
                            }
                        }
                        KEY_TIMESTAMP => {
                            let AttributeValue::Date(ts) = attribute.value else {
                                return Err(XesError::InvalidValue {
                                    key: attribute.key,
                                    tag: child.name,
                                    value: attribute.value.lexical(),
                                    position: cursor.position(child.offset),
                                });
                            };
                            if timestamp.replace(ts).is_some() {
                                return Err(cursor.structure(child.offset, "event declares time:timestamp twice"));
                            }
                        }
                        _ => attributes.push(attribute),
                    }
                }
            }
        }
    }
    let missing = |field| XesError::MissingMandatory {
        trace_index,
        event_index,
        field,
    };
    Ok(Event {
        activity: activity.filter(|a| !a.is_empty()).ok_or_else(|| missing("activity"))?,
        timestamp: timestamp.ok_or_else(|| missing("timestamp"))?,
        attributes,
    })
}
