//! The IoT-Pro context classification and the enrichment plan that
//! instantiates it.
//!
//! The classification crosses five process-context levels with five
//! IoT-context categories. A plan places every sensor source in the
//! [`ProcessContextLevel::Sensor`] row and every binding in the Event,
//! Instance or Process row; organisational context enters only as named
//! [`RuleConstant`]s.

mod plan;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use plan::{
    parse_plan, serialize_plan, Aggregator, BindingTarget, CaseAggregate, CollisionPolicy, Condition, ConstValue,
    ContextBinding, CorrelationRule, DerivationRule, EnrichmentPlan, EventDerivationRule, OutputType, PlanError,
    RuleConstant, SourceDecl, Threshold, PLAN_VERSION,
};
pub use validate::{validate_plan, PlanViolation, ViolationKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessContextLevel {
    Organisational,
    Process,
    Instance,
    Event,
    Sensor,
}

impl ProcessContextLevel {
    pub const ALL: [ProcessContextLevel; 5] = [
        ProcessContextLevel::Organisational,
        ProcessContextLevel::Process,
        ProcessContextLevel::Instance,
        ProcessContextLevel::Event,
        ProcessContextLevel::Sensor,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IoTContextCategory {
    PhysicalObject,
    Location,
    Time,
    Identity,
    Environment,
}

impl IoTContextCategory {
    pub const ALL: [IoTContextCategory; 5] = [
        IoTContextCategory::PhysicalObject,
        IoTContextCategory::Location,
        IoTContextCategory::Time,
        IoTContextCategory::Identity,
        IoTContextCategory::Environment,
    ];
}

impl fmt::Display for ProcessContextLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ProcessContextLevel::Organisational => "organisational",
            ProcessContextLevel::Process => "process",
            ProcessContextLevel::Instance => "instance",
            ProcessContextLevel::Event => "event",
            ProcessContextLevel::Sensor => "sensor",
        };
        f.write_str(name)
    }
}

impl fmt::Display for IoTContextCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            IoTContextCategory::PhysicalObject => "physical_object",
            IoTContextCategory::Location => "location",
            IoTContextCategory::Time => "time",
            IoTContextCategory::Identity => "identity",
            IoTContextCategory::Environment => "environment",
        };
        f.write_str(name)
    }
}

/// One cell of the classification matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoTProCell {
    pub level: ProcessContextLevel,
    pub category: IoTContextCategory,
}

impl IoTProCell {
    pub fn new(level: ProcessContextLevel, category: IoTContextCategory) -> Self {
        Self { level, category }
    }

    /// All 25 cells, row-major.
    pub fn all() -> impl Iterator<Item = IoTProCell> {
        ProcessContextLevel::ALL.into_iter().flat_map(|level| {
            IoTContextCategory::ALL
                .into_iter()
                .map(move |category| IoTProCell { level, category })
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", content = "category", rename_all = "snake_case")]
pub enum Classification {
    Suggested(IoTContextCategory),
    Unclassified,
}

/// Suggests an IoT-context category for a sensor type.
///
/// The lookup is fixed: `gps` is location, `timer` is time, `weight` is a
/// physical object, `rain`/`temperature`/`humidity`/`smoke` are environment,
/// and `rfid` is identity when the `subject` hint names a person (driver,
/// operator, person) and a physical object otherwise. A type with no exact
/// match is retried token by token (`cargo_temperature` ends in
/// `temperature`). The result is only a suggestion; plans declare their own
/// cells.
pub fn classify_source(sensor_type: &str, hints: &BTreeMap<String, String>) -> Classification {
    let normalized = sensor_type.trim().to_ascii_lowercase();
    if let Some(category) = lookup(&normalized, hints) {
        return Classification::Suggested(category);
    }
    normalized
        .split(|c: char| !c.is_ascii_alphanumeric())
        .rev()
        .find_map(|token| lookup(token, hints))
        .map_or(Classification::Unclassified, Classification::Suggested)
}

fn lookup(sensor_type: &str, hints: &BTreeMap<String, String>) -> Option<IoTContextCategory> {
    use IoTContextCategory::*;
    Some(match sensor_type {
        "rfid" => {
            let subject = hints.get("subject").map(|s| s.to_ascii_lowercase());
            match subject.as_deref() {
                Some("driver" | "person" | "operator" | "identity") => Identity,
                _ => PhysicalObject,
            }
        }
        "gps" => Location,
        "timer" | "clock" => Time,
        "rain" | "temperature" | "humidity" | "smoke" => Environment,
        "weight" | "scale" => PhysicalObject,
        _ => return None,
    })
}
