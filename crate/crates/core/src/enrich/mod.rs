//! Plan execution: correlate readings with cases and events, derive attribute
//! values and synthetic events, and aggregate process-level metrics.
//!
//! Per trace the engine runs in three passes, each in plan order:
//!
//! 1. case-attribute bindings, so later bindings can correlate through
//!    attributes written by earlier ones (e.g. a license plate read by RFID);
//! 2. event-derivation rules, inserting synthetic events;
//! 3. event-attribute bindings, which may target derived events too.
//!
//! Process-level bindings are evaluated per trace after pass 1 and aggregated
//! once every trace is done. Their results go to the [`ProcessContextReport`]
//! and never into the log.

mod correlate;
mod derive;

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

pub use correlate::{correlate, correlate_at, CorrelateError};
use derive::natural;
pub use derive::{coerce, condition_holds, derive_value, DeriveError};

use crate::model::{
    validate_plan, BindingTarget, CaseAggregate, CollisionPolicy, ContextBinding, CorrelationRule, DerivationRule,
    EnrichmentPlan, EventDerivationRule, PlanViolation,
};
use crate::sensor::{build_index, load_stream, IndexError, SensorError, SensorReading, StreamIndex};
use crate::time::Timestamp;
use crate::xes::{validate_log, AttributeSet, AttributeValue, Event, Log, Trace, Violation};

/// Attribute stamped on every derived event, holding the rule id.
pub const DERIVED_FROM_KEY: &str = "derived_from";

#[derive(Debug, Error)]
pub enum EnrichError {
    #[error("plan is not executable ({} violations)", .0.len())]
    InvalidPlan(Vec<PlanViolation>),
    #[error("log is not valid ({} violations)", .0.len())]
    InvalidLog(Vec<Violation>),
    #[error("binding {binding_id:?}: key {key:?} already present in trace {trace} ({case_id:?}){}", event_suffix(.event))]
    Collision {
        binding_id: String,
        trace: usize,
        case_id: String,
        event: Option<usize>,
        key: String,
    },
    #[error("binding {binding_id:?}, trace {trace} ({case_id:?}): {source}")]
    Correlation {
        binding_id: String,
        trace: usize,
        case_id: String,
        #[source]
        source: CorrelateError,
    },
    #[error("binding {binding_id:?}, trace {trace} ({case_id:?}){}: {source}", event_suffix(.event))]
    Derivation {
        binding_id: String,
        trace: usize,
        case_id: String,
        event: Option<usize>,
        #[source]
        source: DeriveError,
    },
}

fn event_suffix(event: &Option<usize>) -> String {
    event.map(|e| format!(", event {e}")).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditAction {
    CaseAttribute,
    EventAttribute,
    DerivedEvent,
}

/// Provenance of one attribute or derived event added to the log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRecord {
    /// Binding id, or rule id for derived events.
    pub binding_id: String,
    pub action: AuditAction,
    pub trace: usize,
    pub case_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event: Option<usize>,
    /// Attribute key, or activity name for derived events.
    pub key: String,
    pub readings_consumed: usize,
    pub value: AttributeValue,
    pub overwritten: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditWarning {
    pub binding_id: String,
    pub trace: usize,
    pub case_id: String,
    pub message: String,
}

/// Inter-case metrics, one entry per process-level binding. An entry is
/// `None` when no case produced a value.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ProcessContextReport {
    pub case_count: usize,
    pub entries: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone)]
pub struct EnrichmentResult {
    pub log: Log,
    pub report: ProcessContextReport,
    pub audit: Vec<AuditRecord>,
    pub warnings: Vec<AuditWarning>,
}

#[derive(Debug, Error)]
pub enum SourceError {
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Loads every source the plan declares, resolving relative paths against
/// `sensors_dir`, and indexes them.
pub fn load_plan_sources(plan: &EnrichmentPlan, sensors_dir: &Path) -> Result<StreamIndex, SourceError> {
    let mut streams = Vec::with_capacity(plan.sources.len());
    for source in &plan.sources {
        let path = sensors_dir.join(&source.path);
        streams.push(load_stream(&path, &source.stream_spec())?);
    }
    Ok(build_index(streams)?)
}

/// Emits one event per maximal run of correlated readings satisfying the
/// rule's condition, timestamped at the run's first reading and tagged with
/// [`DERIVED_FROM_KEY`].
pub fn derive_events(
    trace: &Trace,
    index: &StreamIndex,
    rule: &EventDerivationRule,
    plan: &EnrichmentPlan,
) -> Result<Vec<Event>, CorrelateError> {
    let readings = correlate_at(None, trace, index, &rule.source_id, &rule.correlation)?;
    Ok(runs(&readings, rule, plan)
        .into_iter()
        .map(|ts| {
            Event::new(&rule.activity_name, ts)
                .with_attribute(DERIVED_FROM_KEY, AttributeValue::String(rule.rule_id.clone()))
        })
        .collect())
}

fn runs(readings: &[&SensorReading], rule: &EventDerivationRule, plan: &EnrichmentPlan) -> Vec<Timestamp> {
    let mut starts = Vec::new();
    let mut in_run = false;
    for reading in readings {
        let holds = condition_holds(reading, &rule.condition, plan);
        if holds && !in_run {
            starts.push(reading.timestamp);
        }
        in_run = holds;
    }
    starts
}

/// Derived events are identified by activity, timestamp and originating rule;
/// attributes added later by event bindings do not count.
fn same_derived(a: &Event, b: &Event) -> bool {
    a.activity == b.activity
        && a.timestamp == b.timestamp
        && a.attributes.get(DERIVED_FROM_KEY) == b.attributes.get(DERIVED_FROM_KEY)
}

struct TraceOutcome {
    trace: Trace,
    audit: Vec<AuditRecord>,
    warnings: Vec<AuditWarning>,
    metrics: Vec<Option<f64>>,
}

struct TraceContext<'a> {
    plan: &'a EnrichmentPlan,
    index: &'a StreamIndex,
    trace_index: usize,
    case_id: String,
    audit: Vec<AuditRecord>,
    warnings: Vec<AuditWarning>,
}

/// Runs `plan` over `log`.
///
/// The plan and the log must both validate. Traces are processed in log
/// order and bindings in plan order, so the first collision reported under
/// [`CollisionPolicy::Error`] is reproducible. Pre-existing events and
/// attributes are never removed or reordered; under `Skip` the operation is
/// idempotent.
pub fn enrich(log: &Log, index: &StreamIndex, plan: &EnrichmentPlan) -> Result<EnrichmentResult, EnrichError> {
    let plan_violations = validate_plan(plan);
    if !plan_violations.is_empty() {
        return Err(EnrichError::InvalidPlan(plan_violations));
    }
    let log_violations = validate_log(log);
    if !log_violations.is_empty() {
        return Err(EnrichError::InvalidLog(log_violations));
    }

    let mut out = Log {
        extensions: log.extensions.clone(),
        metadata: log.metadata.clone(),
        traces: Vec::with_capacity(log.traces.len()),
    };
    let mut audit = Vec::new();
    let mut warnings = Vec::new();
    let process_bindings: Vec<&ContextBinding> = plan
        .bindings
        .iter()
        .filter(|b| matches!(b.target, BindingTarget::ProcessReportEntry { .. }))
        .collect();
    let mut per_case: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(log.traces.len()); process_bindings.len()];

    for (trace_index, trace) in log.traces.iter().enumerate() {
        let outcome = enrich_trace(trace, trace_index, index, plan, &process_bindings)?;
        for (column, value) in per_case.iter_mut().zip(outcome.metrics) {
            column.push(value);
        }
        out.traces.push(outcome.trace);
        audit.extend(outcome.audit);
        warnings.extend(outcome.warnings);
    }

    let mut report = ProcessContextReport {
        case_count: log.traces.len(),
        entries: BTreeMap::new(),
    };
    for (binding, values) in process_bindings.iter().zip(&per_case) {
        let BindingTarget::ProcessReportEntry {
            metric_name,
            across_cases,
        } = &binding.target
        else {
            unreachable!("filtered above");
        };
        report
            .entries
            .insert(metric_name.clone(), aggregate_cases(values, *across_cases));
    }

    Ok(EnrichmentResult {
        log: out,
        report,
        audit,
        warnings,
    })
}

/// Folds per-case values left to right in trace order, skipping absent ones.
fn aggregate_cases(values: &[Option<f64>], how: CaseAggregate) -> Option<f64> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if how == CaseAggregate::Count {
        return Some(present.len() as f64);
    }
    if present.is_empty() {
        return None;
    }
    Some(match how {
        CaseAggregate::Mean => present.iter().fold(0.0, |acc, v| acc + v) / present.len() as f64,
        CaseAggregate::Sum => present.iter().fold(0.0, |acc, v| acc + v),
        CaseAggregate::Min => present.iter().copied().fold(f64::INFINITY, f64::min),
        CaseAggregate::Max => present.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        CaseAggregate::Count => unreachable!(),
    })
}

fn enrich_trace(
    source: &Trace,
    trace_index: usize,
    index: &StreamIndex,
    plan: &EnrichmentPlan,
    process_bindings: &[&ContextBinding],
) -> Result<TraceOutcome, EnrichError> {
    let mut trace = source.clone();
    let mut cx = TraceContext {
        plan,
        index,
        trace_index,
        case_id: trace.case_id.clone(),
        audit: Vec::new(),
        warnings: Vec::new(),
    };

    for binding in &plan.bindings {
        if let BindingTarget::CaseAttribute { attribute_key } = &binding.target {
            let Some((value, consumed)) = cx.case_value(&trace, binding)? else {
                continue;
            };
            if let Some(overwritten) = cx.place(&mut trace.attributes, binding, attribute_key, None, &value)? {
                cx.record(
                    binding,
                    AuditAction::CaseAttribute,
                    None,
                    attribute_key,
                    consumed,
                    value,
                    overwritten,
                );
            }
        }
    }

    let mut metrics = Vec::with_capacity(process_bindings.len());
    for binding in process_bindings {
        metrics.push(cx.case_value(&trace, binding)?.and_then(|(v, _)| v.as_f64()));
    }

    let mut derived = Vec::new();
    for rule in &plan.event_rules {
        let events = match derive_events(&trace, index, rule, plan) {
            Ok(events) => events,
            Err(CorrelateError::MissingSubjectAttribute(key)) => {
                cx.warn(&rule.rule_id, format!("no case attribute {key:?}; rule skipped"));
                continue;
            }
            Err(source) => {
                return Err(EnrichError::Correlation {
                    binding_id: rule.rule_id.clone(),
                    trace: trace_index,
                    case_id: cx.case_id.clone(),
                    source,
                })
            }
        };
        for event in events {
            let duplicate = trace
                .events
                .iter()
                .chain(derived.iter().map(|(_, e)| e))
                .any(|e| same_derived(e, &event));
            if duplicate {
                match plan.collision_policy {
                    CollisionPolicy::Error => {
                        return Err(EnrichError::Collision {
                            binding_id: rule.rule_id.clone(),
                            trace: trace_index,
                            case_id: cx.case_id.clone(),
                            event: None,
                            key: rule.activity_name.clone(),
                        })
                    }
                    CollisionPolicy::Overwrite | CollisionPolicy::Skip => continue,
                }
            }
            derived.push((rule, event));
        }
    }
    let mut derived_at: Vec<(usize, &EventDerivationRule, Timestamp)> = Vec::new();
    for (rule, event) in derived {
        let ts = event.timestamp;
        let at = trace.insert_event(event);
        for entry in derived_at.iter_mut().filter(|(i, _, _)| *i >= at) {
            entry.0 += 1;
        }
        derived_at.push((at, rule, ts));
    }
    for (at, rule, ts) in derived_at {
        cx.audit.push(AuditRecord {
            binding_id: rule.rule_id.clone(),
            action: AuditAction::DerivedEvent,
            trace: trace_index,
            case_id: cx.case_id.clone(),
            event: Some(at),
            key: rule.activity_name.clone(),
            readings_consumed: 1,
            value: AttributeValue::Date(ts),
            overwritten: false,
        });
    }

    for binding in &plan.bindings {
        let BindingTarget::EventAttribute {
            attribute_key,
            activity_filter,
        } = &binding.target
        else {
            continue;
        };
        for e in 0..trace.events.len() {
            if !activity_filter.is_empty() && !activity_filter.contains(&trace.events[e].activity) {
                continue;
            }
            let at = Some(trace.events[e].timestamp);
            let Some(readings) = cx.correlated(&trace, binding, at)? else {
                continue;
            };
            let value = match &binding.derivation {
                Some(rule) => cx.derive(&readings, rule, binding, Some(e))?,
                // no derivation: the first reading, in its own type
                None => readings.first().map(|r| natural(&r.value)),
            };
            let Some(value) = value else { continue };
            let consumed = readings.len();
            if let Some(overwritten) =
                cx.place(&mut trace.events[e].attributes, binding, attribute_key, Some(e), &value)?
            {
                cx.record(
                    binding,
                    AuditAction::EventAttribute,
                    Some(e),
                    attribute_key,
                    consumed,
                    value,
                    overwritten,
                );
            }
        }
    }

    Ok(TraceOutcome {
        trace,
        audit: cx.audit,
        warnings: cx.warnings,
        metrics,
    })
}

impl<'a> TraceContext<'a> {
    fn warn(&mut self, binding_id: &str, message: String) {
        self.warnings.push(AuditWarning {
            binding_id: binding_id.to_owned(),
            trace: self.trace_index,
            case_id: self.case_id.clone(),
            message,
        });
    }

    /// Correlated readings, or `None` (with a warning) when the trace lacks
    /// the subject attribute the rule needs.
    fn correlated(
        &mut self,
        trace: &Trace,
        binding: &ContextBinding,
        at: Option<Timestamp>,
    ) -> Result<Option<Vec<&'a SensorReading>>, EnrichError> {
        match correlate_at(at, trace, self.index, &binding.source_id, &binding.correlation) {
            Ok(readings) => Ok(Some(readings)),
            Err(CorrelateError::MissingSubjectAttribute(key)) => {
                self.warn(
                    &binding.binding_id,
                    format!("no case attribute {key:?}; binding skipped"),
                );
                Ok(None)
            }
            Err(source) => Err(EnrichError::Correlation {
                binding_id: binding.binding_id.clone(),
                trace: self.trace_index,
                case_id: self.case_id.clone(),
                source,
            }),
        }
    }

    fn derive(
        &self,
        readings: &[&SensorReading],
        rule: &DerivationRule,
        binding: &ContextBinding,
        event: Option<usize>,
    ) -> Result<Option<AttributeValue>, EnrichError> {
        derive_value(readings, rule, self.plan).map_err(|source| EnrichError::Derivation {
            binding_id: binding.binding_id.clone(),
            trace: self.trace_index,
            case_id: self.case_id.clone(),
            event,
            source,
        })
    }

    /// Value of a case- or process-scope binding for this trace, with the
    /// number of readings it consumed.
    fn case_value(
        &mut self,
        trace: &Trace,
        binding: &ContextBinding,
    ) -> Result<Option<(AttributeValue, usize)>, EnrichError> {
        let needs_anchor = matches!(
            binding.correlation,
            CorrelationRule::NearestBefore | CorrelationRule::NearestWithin { .. }
        );
        let anchor = if needs_anchor {
            let event = match &binding.anchor_activity {
                Some(activity) => trace.events.iter().find(|e| &e.activity == activity),
                None => trace.events.first(),
            };
            match event {
                Some(e) => Some(e.timestamp),
                None => {
                    self.warn(&binding.binding_id, "no anchor event in trace; binding skipped".into());
                    return Ok(None);
                }
            }
        } else {
            None
        };
        let Some(readings) = self.correlated(trace, binding, anchor)? else {
            return Ok(None);
        };
        let rule = binding
            .derivation
            .as_ref()
            .expect("validated plans declare derivations for case and process bindings");
        Ok(self
            .derive(&readings, rule, binding, None)?
            .map(|v| (v, readings.len())))
    }

    /// Applies the collision policy and writes the value. Returns
    /// `Some(overwritten)` when the attribute was written.
    fn place(
        &self,
        attributes: &mut AttributeSet,
        binding: &ContextBinding,
        key: &str,
        event: Option<usize>,
        value: &AttributeValue,
    ) -> Result<Option<bool>, EnrichError> {
        if attributes.contains_key(key) {
            match self.plan.collision_policy {
                CollisionPolicy::Error => {
                    return Err(EnrichError::Collision {
                        binding_id: binding.binding_id.clone(),
                        trace: self.trace_index,
                        case_id: self.case_id.clone(),
                        event,
                        key: key.to_owned(),
                    })
                }
                CollisionPolicy::Skip => return Ok(None),
                CollisionPolicy::Overwrite => {
                    attributes.insert(key, value.clone());
                    return Ok(Some(true));
                }
            }
        }
        attributes.insert(key, value.clone());
        Ok(Some(false))
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        binding: &ContextBinding,
        action: AuditAction,
        event: Option<usize>,
        key: &str,
        readings_consumed: usize,
        value: AttributeValue,
        overwritten: bool,
    ) {
        self.audit.push(AuditRecord {
            binding_id: binding.binding_id.clone(),
            action,
            trace: self.trace_index,
            case_id: self.case_id.clone(),
            event,
            key: key.to_owned(),
            readings_consumed,
            value,
            overwritten,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_plan;
    use crate::sensor::{build_index, SensorStream, SensorValue};
    use crate::time::from_millis;

    fn temp(ms: i64, v: f64) -> SensorReading {
        let mut r = SensorReading::new("probe", from_millis(ms), SensorValue::Decimal(v));
        r.subject_key = Some("T1".into());
        r
    }

    fn log() -> Log {
        let mut trace = Trace::new("1");
        trace.attributes.insert("plate", AttributeValue::String("T1".into()));
        for (i, activity) in ["arrive", "load", "leave"].into_iter().enumerate() {
            trace.events.push(Event::new(activity, from_millis(i as i64 * 10_000)));
        }
        let mut log = Log::new();
        log.traces.push(trace);
        log
    }

    fn index(values: &[(i64, f64)]) -> StreamIndex {
        let readings = values.iter().map(|&(ms, v)| temp(ms, v)).collect();
        build_index(vec![SensorStream::new("temp", "temperature", readings)]).unwrap()
    }

    fn plan(policy: &str) -> EnrichmentPlan {
        let json = format!(
            r#"{{
  "plan_version": 1,
  "collision_policy": "{policy}",
  "sources": [{{"source_id": "temp", "path": "temp.csv", "format": "csv", "sensor_type": "temperature",
    "value_type": "decimal", "cell": {{"level": "sensor", "category": "environment"}}}}],
  "bindings": [
    {{"binding_id": "peak", "cell": {{"level": "instance", "category": "environment"}}, "source_id": "temp",
      "correlation": {{"strategy": "subject_key_equals", "case_attribute": "plate"}},
      "derivation": {{"aggregator": {{"kind": "max"}}, "output_type": "float"}},
      "target": {{"kind": "case_attribute", "attribute_key": "peak_temp"}}}},
    {{"binding_id": "at_event", "cell": {{"level": "event", "category": "environment"}}, "source_id": "temp",
      "correlation": {{"strategy": "nearest_before"}},
      "target": {{"kind": "event_attribute", "attribute_key": "temp"}}}},
    {{"binding_id": "mean", "cell": {{"level": "process", "category": "environment"}}, "source_id": "temp",
      "correlation": {{"strategy": "span_overlap"}},
      "derivation": {{"aggregator": {{"kind": "mean"}}, "output_type": "float"}},
      "target": {{"kind": "process_report_entry", "metric_name": "mean_temp"}}}}
  ],
  "event_rules": [
    {{"rule_id": "hot", "source_id": "temp", "condition": {{"kind": "above", "threshold": 35}},
      "activity_name": "overheat", "correlation": {{"strategy": "subject_key_equals", "case_attribute": "plate"}}}}
  ]
}}"#
        );
        parse_plan(json.as_bytes()).unwrap()
    }

    #[test]
    fn empty_plan_is_identity() {
        let log = log();
        let out = enrich(&log, &index(&[(0, 20.0)]), &EnrichmentPlan::empty()).unwrap();
        assert_eq!(out.log, log);
        assert!(out.audit.is_empty());
        assert!(out.report.entries.is_empty());
    }

    #[test]
    fn three_passes() {
        let readings = [(0, 30.0), (5_000, 36.0), (8_000, 37.0), (12_000, 20.0), (15_000, 40.0)];
        let out = enrich(&log(), &index(&readings), &plan("error")).unwrap();
        let trace = &out.log.traces[0];
        assert_eq!(trace.attributes.get("peak_temp"), Some(&AttributeValue::Float(40.0)));
        let activities: Vec<_> = trace.events.iter().map(|e| e.activity.as_str()).collect();
        assert_eq!(activities, ["arrive", "overheat", "load", "overheat", "leave"]);
        assert_eq!(trace.events[1].timestamp, from_millis(5_000));
        assert_eq!(trace.events[3].timestamp, from_millis(15_000));
        assert_eq!(
            trace.events[1].attributes.get(DERIVED_FROM_KEY),
            Some(&AttributeValue::String("hot".into()))
        );
        // derived events are visible to event bindings
        assert_eq!(
            trace.events[1].attributes.get("temp"),
            Some(&AttributeValue::Float(36.0))
        );
        assert_eq!(
            trace.events[2].attributes.get("temp"),
            Some(&AttributeValue::Float(37.0))
        );
        let mean = (30.0 + 36.0 + 37.0 + 20.0 + 40.0) / 5.0;
        assert_eq!(out.report.entries["mean_temp"], Some(mean));
        assert!(trace.attributes.get("mean_temp").is_none());
    }

    #[test]
    fn collision_under_error_policy() {
        let mut log = log();
        log.traces[0].attributes.insert("peak_temp", AttributeValue::Float(0.0));
        let err = enrich(&log, &index(&[(0, 30.0)]), &plan("error")).unwrap_err();
        assert!(matches!(err, EnrichError::Collision { ref key, event: None, .. } if key == "peak_temp"));
    }

    #[test]
    fn skip_is_idempotent() {
        let idx = index(&[(0, 30.0), (5_000, 36.0), (12_000, 20.0)]);
        let plan = plan("skip");
        let once = enrich(&log(), &idx, &plan).unwrap().log;
        let twice = enrich(&once, &idx, &plan).unwrap().log;
        assert_eq!(once, twice);
    }

    #[test]
    fn missing_subject_attribute_warns() {
        let mut log = log();
        log.traces[0].attributes.remove("plate");
        let out = enrich(&log, &index(&[(0, 40.0)]), &plan("error")).unwrap();
        assert_eq!(out.log.traces[0].events.len(), 3);
        assert_eq!(out.warnings.len(), 2);
    }

    #[test]
    fn case_aggregates() {
        let values = [Some(1.0), None, Some(3.0)];
        assert_eq!(aggregate_cases(&values, CaseAggregate::Mean), Some(2.0));
        assert_eq!(aggregate_cases(&values, CaseAggregate::Count), Some(2.0));
        assert_eq!(aggregate_cases(&[None], CaseAggregate::Max), None);
    }
}
