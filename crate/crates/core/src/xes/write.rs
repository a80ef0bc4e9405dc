use serde::{Deserialize, Serialize};

use super::{AttributeSet, AttributeValue, Log, KEY_CONCEPT_NAME, KEY_TIMESTAMP};

/// Wire type used for the trace `concept:name`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseIdType {
    #[default]
    String,
    /// Emit `<int>` when every case id of the log is a canonical integer,
    /// otherwise fall back to `<string>`.
    Int,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WriteOptions {
    pub case_id_type: CaseIdType,
}

pub fn write_xes(log: &Log) -> Vec<u8> {
    write_xes_with(log, WriteOptions::default())
}

/// Serializes a log. Output is a pure function of `(log, options)`: attributes
/// are emitted in lexicographic key order at every scope.
pub fn write_xes_with(log: &Log, options: WriteOptions) -> Vec<u8> {
    let ids_as_int = options.case_id_type == CaseIdType::Int
        && log
            .traces
            .iter()
            .all(|t| t.case_id.parse::<i64>().is_ok_and(|v| v.to_string() == t.case_id));

    let mut out = String::with_capacity(256 + log.event_count() * 160);
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<log xes.version=\"1849-2016\" xes.features=\"\">\n");
    for ext in &log.extensions {
        out.push_str(&format!(
            "  <extension name=\"{}\" prefix=\"{}\" uri=\"{}\"/>\n",
            escape(&ext.name),
            escape(&ext.prefix),
            escape(&ext.uri)
        ));
    }
    write_attributes(&mut out, 1, &log.metadata, Vec::new());
    for trace in &log.traces {
        out.push_str("  <trace>\n");
        let case_id = if ids_as_int {
            AttributeValue::Int(trace.case_id.parse().expect("checked above"))
        } else {
            AttributeValue::String(trace.case_id.clone())
        };
        write_attributes(&mut out, 2, &trace.attributes, vec![(KEY_CONCEPT_NAME, case_id)]);
        for event in &trace.events {
            out.push_str("    <event>\n");
            let mandatory = vec![
                (KEY_CONCEPT_NAME, AttributeValue::String(event.activity.clone())),
                (KEY_TIMESTAMP, AttributeValue::Date(event.timestamp)),
            ];
            write_attributes(&mut out, 3, &event.attributes, mandatory);
            out.push_str("    </event>\n");
        }
        out.push_str("  </trace>\n");
    }
    out.push_str("</log>\n");
    out.into_bytes()
}

fn write_attributes(
    out: &mut String,
    depth: usize,
    attributes: &AttributeSet,
    mut mandatory: Vec<(&str, AttributeValue)>,
) {
    mandatory.sort_by(|a, b| a.0.cmp(b.0));
    let mut mandatory = mandatory.into_iter().peekable();
    let mut rest = attributes.iter().peekable();
    loop {
        let take_mandatory = match (mandatory.peek(), rest.peek()) {
            (Some(m), Some(a)) => m.0 <= a.key.as_str(),
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => break,
        };
        let (key, value) = if take_mandatory {
            let (k, v) = mandatory.next().expect("peeked");
            (k.to_owned(), v)
        } else {
            let a = rest.next().expect("peeked");
            (a.key.clone(), a.value.clone())
        };
        for _ in 0..depth {
            out.push_str("  ");
        }
        out.push_str(&format!(
            "<{tag} key=\"{key}\" value=\"{value}\"/>\n",
            tag = value.type_tag(),
            key = escape(&key),
            value = escape(&value.lexical())
        ));
    }
}

fn escape(text: &str) -> String {
    let mut escaped = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => escaped.push_str("&amp;"),
            '<' => escaped.push_str("&lt;"),
            '>' => escaped.push_str("&gt;"),
            '"' => escaped.push_str("&quot;"),
            '\'' => escaped.push_str("&apos;"),
            '\n' => escaped.push_str("&#10;"),
            '\r' => escaped.push_str("&#13;"),
            '\t' => escaped.push_str("&#9;"),
            c => escaped.push(c),
        }
    }
    escaped
}
