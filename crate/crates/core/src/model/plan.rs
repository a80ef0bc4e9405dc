use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_path_to_error::Segment;
use thiserror::Error;

use super::IoTProCell;
use crate::sensor::{SourceFormat, StreamSpec, ValueType};
use crate::xes::CaseIdType;

pub const PLAN_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("plan schema violation at {pointer:?}: {message}")]
    Schema { pointer: String, message: String },
    #[error("unknown enumeration member at {pointer:?}: {message}")]
    UnknownMember { pointer: String, message: String },
    #[error("unsupported plan_version {found} (expected {PLAN_VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("{pointer:?} references unknown source {source_id:?}")]
    UnknownSource { pointer: String, source_id: String },
    #[error("{pointer:?} references unknown constant {name:?}")]
    UnknownConstant { pointer: String, name: String },
}

/// Declarative enrichment plan.
///
/// `business_concern` and `analytical_questions` record why the plan exists;
/// nothing in the engine reads them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnrichmentPlan {
    pub plan_version: u32,
    #[serde(default)]
    pub business_concern: String,
    #[serde(default)]
    pub analytical_questions: Vec<String>,
    #[serde(default)]
    pub collision_policy: CollisionPolicy,
    #[serde(default)]
    pub case_id_type: CaseIdType,
    #[serde(default)]
    pub excluded_keys: Vec<String>,
    #[serde(default)]
    pub sources: Vec<SourceDecl>,
    #[serde(default)]
    pub constants: Vec<RuleConstant>,
    #[serde(default)]
    pub bindings: Vec<ContextBinding>,
    #[serde(default)]
    pub event_rules: Vec<EventDerivationRule>,
}

impl EnrichmentPlan {
    /// Plan with no sources, bindings or rules.
    pub fn empty() -> Self {
        Self {
            plan_version: PLAN_VERSION,
            business_concern: String::new(),
            analytical_questions: Vec::new(),
            collision_policy: CollisionPolicy::default(),
            case_id_type: CaseIdType::default(),
            excluded_keys: Vec::new(),
            sources: Vec::new(),
            constants: Vec::new(),
            bindings: Vec::new(),
            event_rules: Vec::new(),
        }
    }

    pub fn source(&self, source_id: &str) -> Option<&SourceDecl> {
        self.sources.iter().find(|s| s.source_id == source_id)
    }

    pub fn constant(&self, name: &str) -> Option<&RuleConstant> {
        self.constants.iter().find(|c| c.name == name)
    }

    /// Numeric value of a threshold, looking constants up by name.
    pub fn resolve(&self, threshold: &Threshold) -> Option<f64> {
        match threshold {
            Threshold::Value(v) => Some(*v),
            Threshold::Constant { constant } => match self.constant(constant)?.value {
                ConstValue::Decimal(v) => Some(v),
                _ => None,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionPolicy {
    #[default]
    Error,
    Overwrite,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceDecl {
    pub source_id: String,
    /// Relative paths resolve against the sensors directory.
    pub path: String,
    pub format: SourceFormat,
    pub sensor_type: String,
    pub value_type: ValueType,
    pub cell: IoTProCell,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub hints: BTreeMap<String, String>,
}

impl SourceDecl {
    pub fn stream_spec(&self) -> StreamSpec {
        StreamSpec {
            source_id: self.source_id.clone(),
            sensor_type: self.sensor_type.clone(),
            format: self.format,
            value_type: self.value_type,
        }
    }
}

/// How readings are matched to an event or a case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorrelationRule {
    /// Latest reading at or before the event.
    NearestBefore,
    /// Reading closest to the event within `window_ms` either side.
    NearestWithin { window_ms: i64 },
    /// All readings inside the trace's first-to-last event span.
    SpanOverlap,
    /// Readings whose subject key equals the case attribute, inside the
    /// trace span.
    SubjectKeyEquals { case_attribute: String },
}

/// A number, or a reference to a named plan constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Threshold {
    Value(f64),
    Constant { constant: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Aggregator {
    First,
    Last,
    Min,
    Max,
    Mean,
    Sum,
    AnyAbove {
        threshold: Threshold,
    },
    AllBelow {
        threshold: Threshold,
    },
    ThresholdBucket {
        boundaries: Vec<Threshold>,
        labels: Vec<String>,
    },
}

impl Aggregator {
    pub fn is_numeric(&self) -> bool {
        !matches!(self, Aggregator::First | Aggregator::Last)
    }

    pub fn thresholds(&self) -> Vec<&Threshold> {
        match self {
            Aggregator::AnyAbove { threshold } | Aggregator::AllBelow { threshold } => vec![threshold],
            Aggregator::ThresholdBucket { boundaries, .. } => boundaries.iter().collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputType {
    String,
    Int,
    Float,
    Boolean,
    Date,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivationRule {
    pub aggregator: Aggregator,
    pub output_type: OutputType,
    /// Negates a boolean result, for encodings where `true` means absence.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub invert: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseAggregate {
    #[default]
    Mean,
    Sum,
    Min,
    Max,
    Count,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BindingTarget {
    EventAttribute {
        attribute_key: String,
        /// Empty means every event.
        #[serde(default)]
        activity_filter: Vec<String>,
    },
    CaseAttribute {
        attribute_key: String,
    },
    ProcessReportEntry {
        metric_name: String,
        #[serde(default)]
        across_cases: CaseAggregate,
    },
}

impl BindingTarget {
    pub fn kind(&self) -> &'static str {
        match self {
            BindingTarget::EventAttribute { .. } => "event_attribute",
            BindingTarget::CaseAttribute { .. } => "case_attribute",
            BindingTarget::ProcessReportEntry { .. } => "process_report_entry",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextBinding {
    pub binding_id: String,
    pub cell: IoTProCell,
    pub source_id: String,
    pub correlation: CorrelationRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derivation: Option<DerivationRule>,
    pub target: BindingTarget,
    /// For case and process targets: the activity whose first occurrence
    /// anchors event-relative correlation. Defaults to the first event.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_activity: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstValue {
    Boolean(bool),
    Decimal(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Condition {
    Above { threshold: Threshold },
    Below { threshold: Threshold },
    Equals { value: ConstValue },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventDerivationRule {
    pub rule_id: String,
    pub source_id: String,
    pub condition: Condition,
    pub activity_name: String,
    pub correlation: CorrelationRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleConstant {
    pub name: String,
    pub value: ConstValue,
    #[serde(default)]
    pub rationale: String,
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    let mut out = String::new();
    for segment in path.iter() {
        out.push('/');
        match segment {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

/// Parses a JSON plan document and checks its references.
///
/// Everything beyond schema and referential integrity (level restrictions,
/// key uniqueness, bucket arity) is left to [`super::validate_plan`].
pub fn parse_plan(document: &[u8]) -> Result<EnrichmentPlan, PlanError> {
    let mut deserializer = serde_json::Deserializer::from_slice(document);
    let plan: EnrichmentPlan = serde_path_to_error::deserialize(&mut deserializer).map_err(|err| {
        let pointer = pointer(err.path());
        let message = err.inner().to_string();
        if message.starts_with("unknown variant") {
            PlanError::UnknownMember { pointer, message }
        } else {
            PlanError::Schema { pointer, message }
        }
    })?;
    deserializer.end().map_err(|e| PlanError::Schema {
        pointer: String::new(),
        message: e.to_string(),
    })?;
    if plan.plan_version != PLAN_VERSION {
        return Err(PlanError::UnsupportedVersion {
            found: plan.plan_version,
        });
    }
    check_references(&plan)?;
    Ok(plan)
}

fn check_references(plan: &EnrichmentPlan) -> Result<(), PlanError> {
    let sources: HashSet<&str> = plan.sources.iter().map(|s| s.source_id.as_str()).collect();
    let constants: HashSet<&str> = plan.constants.iter().map(|c| c.name.as_str()).collect();
    let check_constant = |threshold: &Threshold, at: String| match threshold {
        Threshold::Constant { constant } if !constants.contains(constant.as_str()) => Err(PlanError::UnknownConstant {
            pointer: at,
            name: constant.clone(),
        }),
        _ => Ok(()),
    };
    for (i, binding) in plan.bindings.iter().enumerate() {
        if !sources.contains(binding.source_id.as_str()) {
            return Err(PlanError::UnknownSource {
                pointer: format!("/bindings/{i}/source_id"),
                source_id: binding.source_id.clone(),
            });
        }
        if let Some(derivation) = &binding.derivation {
            for threshold in derivation.aggregator.thresholds() {
                check_constant(threshold, format!("/bindings/{i}/derivation/aggregator"))?;
            }
        }
    }
    for (i, rule) in plan.event_rules.iter().enumerate() {
        if !sources.contains(rule.source_id.as_str()) {
            return Err(PlanError::UnknownSource {
                pointer: format!("/event_rules/{i}/source_id"),
                source_id: rule.source_id.clone(),
            });
        }
        if let Condition::Above { threshold } | Condition::Below { threshold } = &rule.condition {
            check_constant(threshold, format!("/event_rules/{i}/condition/threshold"))?;
        }
    }
    Ok(())
}

/// Pretty-printed JSON; [`parse_plan`] reads it back to an equal plan.
pub fn serialize_plan(plan: &EnrichmentPlan) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(plan).expect("plan serializes");
    out.push(b'\n');
    out
}
