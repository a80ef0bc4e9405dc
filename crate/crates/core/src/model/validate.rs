use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::Serialize;

use super::plan::{
    Aggregator, BindingTarget, Condition, ConstValue, CorrelationRule, EnrichmentPlan, OutputType, Threshold,
};
use super::ProcessContextLevel;
use crate::sensor::ValueType;
use crate::xes::RESERVED_KEYS;

/// One reason a plan cannot be executed, located by JSON pointer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanViolation {
    pub pointer: String,
    #[serde(flatten)]
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum ViolationKind {
    /// Organisational and sensor context cannot be bound to log attributes.
    LevelForbidden {
        binding_id: String,
        level: ProcessContextLevel,
    },
    /// Event binds to event attributes, Instance to case attributes,
    /// Process to report entries.
    TargetLevelMismatch {
        binding_id: String,
        level: ProcessContextLevel,
        target: &'static str,
    },
    SourceNotSensorLevel {
        source_id: String,
        level: ProcessContextLevel,
    },
    DuplicateId {
        what: &'static str,
        id: String,
    },
    DuplicateAttributeKey {
        scope: &'static str,
        key: String,
    },
    DuplicateMetric {
        metric_name: String,
    },
    EmptyName {
        what: &'static str,
    },
    ExcludedKeyTargeted {
        key: String,
    },
    ReservedKeyTargeted {
        key: String,
    },
    UnknownSource {
        source_id: String,
    },
    UnknownConstant {
        name: String,
    },
    NonNumericConstant {
        name: String,
    },
    BucketArity {
        boundaries: usize,
        labels: usize,
    },
    BucketNotAscending,
    NonPositiveWindow {
        window_ms: i64,
    },
    EventRuleCorrelation {
        rule_id: String,
    },
    MissingDerivation {
        binding_id: String,
    },
    AnchorOnEventBinding {
        binding_id: String,
    },
    AggregatorTypeMismatch {
        source_id: String,
        value_type: ValueType,
    },
    InvertNonBoolean,
    NonNumericMetric {
        binding_id: String,
        output_type: OutputType,
    },
}

impl fmt::Display for PlanViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ViolationKind::*;
        write!(f, "{}: ", self.pointer)?;
        match &self.kind {
            LevelForbidden { binding_id, level } => write!(
                f,
                "binding {binding_id:?} sits at the {level} level; only event, instance and process context can be bound"
            ),
            TargetLevelMismatch { binding_id, level, target } => {
                write!(f, "binding {binding_id:?} at the {level} level cannot target a {target}")
            }
            SourceNotSensorLevel { source_id, level } => {
                write!(f, "source {source_id:?} must sit at the sensor level, not {level}")
            }
            DuplicateId { what, id } => write!(f, "duplicate {what} {id:?}"),
            DuplicateAttributeKey { scope, key } => write!(f, "{scope} attribute {key:?} is written by more than one binding"),
            DuplicateMetric { metric_name } => write!(f, "report metric {metric_name:?} is written by more than one binding"),
            EmptyName { what } => write!(f, "empty {what}"),
            ExcludedKeyTargeted { key } => write!(f, "excluded key {key:?} is a binding target"),
            ReservedKeyTargeted { key } => write!(f, "{key:?} is reserved for mandatory log fields"),
            UnknownSource { source_id } => write!(f, "unknown source {source_id:?}"),
            UnknownConstant { name } => write!(f, "unknown constant {name:?}"),
            NonNumericConstant { name } => write!(f, "constant {name:?} is used as a threshold but is not a number"),
            BucketArity { boundaries, labels } => {
                write!(f, "{boundaries} bucket boundaries need {} labels, found {labels}", boundaries + 1)
            }
            BucketNotAscending => write!(f, "bucket boundaries must be strictly ascending"),
            NonPositiveWindow { window_ms } => write!(f, "correlation window must be positive, found {window_ms} ms"),
            EventRuleCorrelation { rule_id } => {
                write!(f, "event rule {rule_id:?} must correlate by subject_key_equals or span_overlap")
            }
            MissingDerivation { binding_id } => {
                write!(f, "binding {binding_id:?} targets case or report scope and needs an explicit derivation")
            }
            AnchorOnEventBinding { binding_id } => {
                write!(f, "binding {binding_id:?}: anchor_activity applies only to case and report targets")
            }
            AggregatorTypeMismatch { source_id, value_type } => {
                write!(f, "numeric aggregator over source {source_id:?} whose values are {value_type:?}")
            }
            InvertNonBoolean => write!(f, "invert requires boolean output"),
            NonNumericMetric { binding_id, output_type } => {
                write!(f, "report binding {binding_id:?} must produce a number, not {output_type:?}")
            }
        }
    }
}

struct Collector {
    violations: Vec<PlanViolation>,
}

impl Collector {
    fn push(&mut self, pointer: impl Into<String>, kind: ViolationKind) {
        self.violations.push(PlanViolation {
            pointer: pointer.into(),
            kind,
        });
    }

    fn unique<'a>(&mut self, what: &'static str, ids: impl Iterator<Item = (String, &'a str)>) {
        let mut seen = HashSet::new();
        for (pointer, id) in ids {
            if id.is_empty() {
                self.push(pointer, ViolationKind::EmptyName { what });
            } else if !seen.insert(id) {
                self.push(
                    pointer,
                    ViolationKind::DuplicateId {
                        what,
                        id: id.to_owned(),
                    },
                );
            }
        }
    }

    fn threshold(&mut self, plan: &EnrichmentPlan, threshold: &Threshold, at: &str) -> Option<f64> {
        if let Threshold::Constant { constant } = threshold {
            match plan.constant(constant) {
                None => self.push(at, ViolationKind::UnknownConstant { name: constant.clone() }),
                Some(c) if !matches!(c.value, ConstValue::Decimal(_)) => {
                    self.push(at, ViolationKind::NonNumericConstant { name: constant.clone() })
                }
                Some(_) => {}
            }
        }
        plan.resolve(threshold)
    }

    fn correlation(&mut self, rule: &CorrelationRule, at: String) {
        if let CorrelationRule::NearestWithin { window_ms } = rule {
            if *window_ms <= 0 {
                self.push(at, ViolationKind::NonPositiveWindow { window_ms: *window_ms });
            }
        }
    }
}

/// Returns every reason `plan` is not executable; empty iff it is.
pub fn validate_plan(plan: &EnrichmentPlan) -> Vec<PlanViolation> {
    let mut c = Collector { violations: Vec::new() };

    c.unique(
        "source id",
        plan.sources
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("/sources/{i}/source_id"), s.source_id.as_str())),
    );
    c.unique(
        "binding id",
        plan.bindings
            .iter()
            .enumerate()
            .map(|(i, b)| (format!("/bindings/{i}/binding_id"), b.binding_id.as_str())),
    );
    c.unique(
        "event rule id",
        plan.event_rules
            .iter()
            .enumerate()
            .map(|(i, r)| (format!("/event_rules/{i}/rule_id"), r.rule_id.as_str())),
    );
    c.unique(
        "constant",
        plan.constants
            .iter()
            .enumerate()
            .map(|(i, k)| (format!("/constants/{i}/name"), k.name.as_str())),
    );

    for (i, source) in plan.sources.iter().enumerate() {
        if source.cell.level != ProcessContextLevel::Sensor {
            c.push(
                format!("/sources/{i}/cell/level"),
                ViolationKind::SourceNotSensorLevel {
                    source_id: source.source_id.clone(),
                    level: source.cell.level,
                },
            );
        }
    }

    let excluded: HashSet<&str> = plan.excluded_keys.iter().map(String::as_str).collect();
    let mut keys: BTreeMap<(&'static str, &str), usize> = BTreeMap::new();
    let mut metrics: HashSet<&str> = HashSet::new();

    for (i, binding) in plan.bindings.iter().enumerate() {
        let at = |field: &str| format!("/bindings/{i}/{field}");
        let level = binding.cell.level;
        let level_ok = match level {
            ProcessContextLevel::Organisational | ProcessContextLevel::Sensor => {
                c.push(
                    at("cell/level"),
                    ViolationKind::LevelForbidden {
                        binding_id: binding.binding_id.clone(),
                        level,
                    },
                );
                false
            }
            ProcessContextLevel::Event => matches!(binding.target, BindingTarget::EventAttribute { .. }),
            ProcessContextLevel::Instance => matches!(binding.target, BindingTarget::CaseAttribute { .. }),
            ProcessContextLevel::Process => matches!(binding.target, BindingTarget::ProcessReportEntry { .. }),
        };
        let forbidden = matches!(level, ProcessContextLevel::Organisational | ProcessContextLevel::Sensor);
        if !level_ok && !forbidden {
            c.push(
                at("target/kind"),
                ViolationKind::TargetLevelMismatch {
                    binding_id: binding.binding_id.clone(),
                    level,
                    target: binding.target.kind(),
                },
            );
        }

        let source = plan.source(&binding.source_id);
        if source.is_none() {
            c.push(
                at("source_id"),
                ViolationKind::UnknownSource {
                    source_id: binding.source_id.clone(),
                },
            );
        }
        c.correlation(&binding.correlation, at("correlation/window_ms"));
        if let CorrelationRule::SubjectKeyEquals { case_attribute } = &binding.correlation {
            if case_attribute.is_empty() {
                c.push(
                    at("correlation/case_attribute"),
                    ViolationKind::EmptyName { what: "case attribute" },
                );
            }
        }

        match &binding.target {
            BindingTarget::EventAttribute { attribute_key, .. } => {
                check_key(
                    &mut c,
                    &mut keys,
                    &excluded,
                    "event",
                    attribute_key,
                    at("target/attribute_key"),
                );
                if binding.anchor_activity.is_some() {
                    c.push(
                        at("anchor_activity"),
                        ViolationKind::AnchorOnEventBinding {
                            binding_id: binding.binding_id.clone(),
                        },
                    );
                }
            }
            BindingTarget::CaseAttribute { attribute_key } => {
                check_key(
                    &mut c,
                    &mut keys,
                    &excluded,
                    "case",
                    attribute_key,
                    at("target/attribute_key"),
                );
            }
            BindingTarget::ProcessReportEntry { metric_name, .. } => {
                if metric_name.is_empty() {
                    c.push(
                        at("target/metric_name"),
                        ViolationKind::EmptyName { what: "metric name" },
                    );
                } else if !metrics.insert(metric_name) {
                    c.push(
                        at("target/metric_name"),
                        ViolationKind::DuplicateMetric {
                            metric_name: metric_name.clone(),
                        },
                    );
                }
                if excluded.contains(metric_name.as_str()) {
                    c.push(
                        at("target/metric_name"),
                        ViolationKind::ExcludedKeyTargeted {
                            key: metric_name.clone(),
                        },
                    );
                }
                if let Some(d) = &binding.derivation {
                    if !matches!(d.output_type, OutputType::Int | OutputType::Float) {
                        c.push(
                            at("derivation/output_type"),
                            ViolationKind::NonNumericMetric {
                                binding_id: binding.binding_id.clone(),
                                output_type: d.output_type,
                            },
                        );
                    }
                }
            }
        }

        let case_scope = !matches!(binding.target, BindingTarget::EventAttribute { .. });
        match &binding.derivation {
            None if case_scope => c.push(
                at("derivation"),
                ViolationKind::MissingDerivation {
                    binding_id: binding.binding_id.clone(),
                },
            ),
            None => {}
            Some(derivation) => {
                let agg_at = at("derivation/aggregator");
                let mut values = Vec::new();
                for threshold in derivation.aggregator.thresholds() {
                    values.push(c.threshold(plan, threshold, &agg_at));
                }
                if let Aggregator::ThresholdBucket { boundaries, labels } = &derivation.aggregator {
                    if labels.len() != boundaries.len() + 1 {
                        c.push(
                            agg_at.clone(),
                            ViolationKind::BucketArity {
                                boundaries: boundaries.len(),
                                labels: labels.len(),
                            },
                        );
                    }
                    let resolved: Option<Vec<f64>> = values.iter().copied().collect();
                    if let Some(resolved) = resolved {
                        if resolved
                            .windows(2)
                            .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
                        {
                            c.push(agg_at.clone(), ViolationKind::BucketNotAscending);
                        }
                    }
                }
                if derivation.aggregator.is_numeric() {
                    if let Some(source) = source.filter(|s| s.value_type != ValueType::Decimal) {
                        c.push(
                            agg_at,
                            ViolationKind::AggregatorTypeMismatch {
                                source_id: source.source_id.clone(),
                                value_type: source.value_type,
                            },
                        );
                    }
                }
                if derivation.invert && derivation.output_type != OutputType::Boolean {
                    c.push(at("derivation/invert"), ViolationKind::InvertNonBoolean);
                }
            }
        }
    }

    for (i, rule) in plan.event_rules.iter().enumerate() {
        let at = |field: &str| format!("/event_rules/{i}/{field}");
        if rule.activity_name.is_empty() {
            c.push(at("activity_name"), ViolationKind::EmptyName { what: "activity name" });
        }
        if plan.source(&rule.source_id).is_none() {
            c.push(
                at("source_id"),
                ViolationKind::UnknownSource {
                    source_id: rule.source_id.clone(),
                },
            );
        }
        match &rule.correlation {
            CorrelationRule::SubjectKeyEquals { .. } | CorrelationRule::SpanOverlap => {}
            _ => c.push(
                at("correlation/strategy"),
                ViolationKind::EventRuleCorrelation {
                    rule_id: rule.rule_id.clone(),
                },
            ),
        }
        if let Condition::Above { threshold } | Condition::Below { threshold } = &rule.condition {
            c.threshold(plan, threshold, &at("condition/threshold"));
        }
    }

    c.violations
}

fn check_key<'a>(
    c: &mut Collector,
    keys: &mut BTreeMap<(&'static str, &'a str), usize>,
    excluded: &HashSet<&str>,
    scope: &'static str,
    key: &'a str,
    at: String,
) {
    if key.is_empty() {
        c.push(at, ViolationKind::EmptyName { what: "attribute key" });
        return;
    }
    if RESERVED_KEYS.contains(&key) {
        c.push(at.clone(), ViolationKind::ReservedKeyTargeted { key: key.to_owned() });
    }
    if excluded.contains(key) {
        c.push(at.clone(), ViolationKind::ExcludedKeyTargeted { key: key.to_owned() });
    }
    let count = keys.entry((scope, key)).or_default();
    *count += 1;
    if *count == 2 {
        c.push(
            at,
            ViolationKind::DuplicateAttributeKey {
                scope,
                key: key.to_owned(),
            },
        );
    }
}
