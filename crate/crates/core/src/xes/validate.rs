use std::collections::HashMap;

use serde::Serialize;

use super::{AttributeSet, Log, RESERVED_KEYS};

/// Location of an attribute set within a log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "scope", rename_all = "snake_case")]
pub enum Scope {
    Log,
    Trace { trace: usize },
    Event { trace: usize, event: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    DuplicateCaseId {
        trace: usize,
        first_trace: usize,
        case_id: String,
    },
    /// `events[event]` is later than `events[event + 1]`.
    UnsortedEvents {
        trace: usize,
        event: usize,
    },
    DuplicateAttributeKey {
        at: Scope,
        key: String,
    },
    EmptyAttributeKey {
        at: Scope,
    },
    ReservedAttributeKey {
        at: Scope,
        key: String,
    },
    EmptyActivity {
        trace: usize,
        event: usize,
    },
}

/// Checks every structural invariant of a log, returning one violation per
/// problem found.
pub fn validate_log(log: &Log) -> Vec<Violation> {
    let mut violations = Vec::new();
    check_attributes(&log.metadata, Scope::Log, &mut violations);
    let mut first_seen: HashMap<&str, usize> = HashMap::new();
    for (t, trace) in log.traces.iter().enumerate() {
        match first_seen.get(trace.case_id.as_str()) {
            Some(&first_trace) => violations.push(Violation::DuplicateCaseId {
                trace: t,
                first_trace,
                case_id: trace.case_id.clone(),
            }),
            None => {
                first_seen.insert(&trace.case_id, t);
            }
        }
        check_attributes(&trace.attributes, Scope::Trace { trace: t }, &mut violations);
        for (e, event) in trace.events.iter().enumerate() {
            if event.activity.is_empty() {
                violations.push(Violation::EmptyActivity { trace: t, event: e });
            }
            check_attributes(&event.attributes, Scope::Event { trace: t, event: e }, &mut violations);
        }
        for (e, pair) in trace.events.windows(2).enumerate() {
            if pair[0].timestamp > pair[1].timestamp {
                violations.push(Violation::UnsortedEvents { trace: t, event: e });
            }
        }
    }
    violations
}

fn check_attributes(attributes: &AttributeSet, at: Scope, violations: &mut Vec<Violation>) {
    let mut previous: Option<&str> = None;
    // the set is key-ordered, so repeats are adjacent
    for key in attributes.keys() {
        if key.is_empty() {
            violations.push(Violation::EmptyAttributeKey { at });
        } else if RESERVED_KEYS.contains(&key) {
            violations.push(Violation::ReservedAttributeKey {
                at,
                key: key.to_owned(),
            });
        }
        if previous == Some(key) {
            violations.push(Violation::DuplicateAttributeKey {
                at,
                key: key.to_owned(),
            });
        }
        previous = Some(key);
    }
}
