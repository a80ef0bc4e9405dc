use thiserror::Error;

use crate::model::{Aggregator, Condition, ConstValue, DerivationRule, EnrichmentPlan, OutputType};
use crate::sensor::{SensorReading, SensorValue};
use crate::time::{format_decimal, parse_timestamp};
use crate::xes::AttributeValue;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DeriveError {
    #[error("reading {position} is not numeric ({value:?})")]
    NonNumeric { position: usize, value: String },
    #[error("threshold or constant could not be resolved")]
    UnresolvedThreshold,
    #[error("cannot represent {value:?} as {to:?}")]
    Coercion { value: String, to: OutputType },
}

fn numbers(readings: &[&SensorReading]) -> Result<Vec<f64>, DeriveError> {
    readings
        .iter()
        .enumerate()
        .map(|(position, r)| {
            r.value.as_f64().ok_or_else(|| DeriveError::NonNumeric {
                position,
                value: r.value.lexical(),
            })
        })
        .collect()
}

pub(crate) fn natural(value: &SensorValue) -> AttributeValue {
    match value {
        SensorValue::Decimal(v) => AttributeValue::Float(*v),
        SensorValue::Text(s) => AttributeValue::String(s.clone()),
        SensorValue::Boolean(b) => AttributeValue::Boolean(*b),
    }
}

/// Aggregates correlated readings into one attribute value.
///
/// No readings means no value. Numeric aggregators fold left to right in
/// the given order. `ThresholdBucket` labels the maximum reading: a value
/// `v` gets the label at the number of boundaries strictly below `v`, so
/// with boundaries `[35]` a reading of exactly 35 falls in the first bucket.
/// Thresholds may name plan constants, hence the `plan` argument.
pub fn derive_value(
    readings: &[&SensorReading],
    rule: &DerivationRule,
    plan: &EnrichmentPlan,
) -> Result<Option<AttributeValue>, DeriveError> {
    if readings.is_empty() {
        return Ok(None);
    }
    let resolve = |t| plan.resolve(t).ok_or(DeriveError::UnresolvedThreshold);
    let value = match &rule.aggregator {
        Aggregator::First => natural(&readings[0].value),
        Aggregator::Last => natural(&readings[readings.len() - 1].value),
        Aggregator::Min => AttributeValue::Float(numbers(readings)?.into_iter().fold(f64::INFINITY, f64::min)),
        Aggregator::Max => AttributeValue::Float(numbers(readings)?.into_iter().fold(f64::NEG_INFINITY, f64::max)),
        Aggregator::Sum => AttributeValue::Float(numbers(readings)?.into_iter().fold(0.0, |acc, v| acc + v)),
        Aggregator::Mean => {
            let values = numbers(readings)?;
            let sum = values.iter().fold(0.0, |acc, v| acc + v);
            AttributeValue::Float(sum / values.len() as f64)
        }
        Aggregator::AnyAbove { threshold } => {
            let threshold = resolve(threshold)?;
            AttributeValue::Boolean(numbers(readings)?.into_iter().any(|v| v > threshold))
        }
        Aggregator::AllBelow { threshold } => {
            let threshold = resolve(threshold)?;
            AttributeValue::Boolean(numbers(readings)?.into_iter().all(|v| v < threshold))
        }
        Aggregator::ThresholdBucket { boundaries, labels } => {
            let boundaries = boundaries.iter().map(resolve).collect::<Result<Vec<_>, _>>()?;
            let peak = numbers(readings)?.into_iter().fold(f64::NEG_INFINITY, f64::max);
            let bucket = boundaries.iter().filter(|&&b| b < peak).count();
            let label = labels.get(bucket).ok_or(DeriveError::UnresolvedThreshold)?;
            AttributeValue::String(label.clone())
        }
    };
    let value = match (rule.invert, value) {
        (true, AttributeValue::Boolean(b)) => AttributeValue::Boolean(!b),
        (_, v) => v,
    };
    coerce(value, rule.output_type).map(Some)
}

/// Converts a derived value to the declared attribute type.
pub fn coerce(value: AttributeValue, to: OutputType) -> Result<AttributeValue, DeriveError> {
    let fail = |v: &AttributeValue| DeriveError::Coercion { value: v.lexical(), to };
    Ok(match (to, &value) {
        (OutputType::String, AttributeValue::Float(v)) => AttributeValue::String(format_decimal(*v)),
        (OutputType::String, v) => AttributeValue::String(v.lexical()),
        (OutputType::Int, AttributeValue::Int(_)) => value,
        (OutputType::Int, AttributeValue::Float(v)) => {
            if v.fract() == 0.0 && v.abs() < 9.0e15 {
                AttributeValue::Int(*v as i64)
            } else {
                return Err(fail(&value));
            }
        }
        (OutputType::Int, AttributeValue::String(s)) => {
            AttributeValue::Int(s.trim().parse().map_err(|_| fail(&value))?)
        }
        (OutputType::Int, AttributeValue::Boolean(b)) => AttributeValue::Int(*b as i64),
        (OutputType::Float, AttributeValue::Float(_)) => value,
        (OutputType::Float, AttributeValue::Int(v)) => AttributeValue::Float(*v as f64),
        (OutputType::Float, AttributeValue::String(s)) => {
            AttributeValue::Float(s.trim().parse().map_err(|_| fail(&value))?)
        }
        (OutputType::Float, AttributeValue::Boolean(b)) => AttributeValue::Float(if *b { 1.0 } else { 0.0 }),
        (OutputType::Boolean, AttributeValue::Boolean(_)) => value,
        (OutputType::Boolean, AttributeValue::String(s)) => match s.trim() {
            "true" | "1" => AttributeValue::Boolean(true),
            "false" | "0" => AttributeValue::Boolean(false),
            _ => return Err(fail(&value)),
        },
        (OutputType::Boolean, AttributeValue::Float(v)) if *v == 0.0 || *v == 1.0 => AttributeValue::Boolean(*v == 1.0),
        (OutputType::Boolean, AttributeValue::Int(v)) if *v == 0 || *v == 1 => AttributeValue::Boolean(*v == 1),
        (OutputType::Date, AttributeValue::Date(_)) => value,
        (OutputType::Date, AttributeValue::String(s)) => {
            AttributeValue::Date(parse_timestamp(s).ok_or_else(|| fail(&value))?)
        }
        _ => return Err(fail(&value)),
    })
}

/// Whether one reading satisfies an event-derivation condition. Ordering
/// conditions never hold for non-numeric readings.
pub fn condition_holds(reading: &SensorReading, condition: &Condition, plan: &EnrichmentPlan) -> bool {
    match condition {
        Condition::Above { threshold } => match (reading.value.as_f64(), plan.resolve(threshold)) {
            (Some(v), Some(t)) => v > t,
            _ => false,
        },
        Condition::Below { threshold } => match (reading.value.as_f64(), plan.resolve(threshold)) {
            (Some(v), Some(t)) => v < t,
            _ => false,
        },
        Condition::Equals { value } => match (&reading.value, value) {
            (SensorValue::Decimal(a), ConstValue::Decimal(b)) => a == b,
            (SensorValue::Text(a), ConstValue::Text(b)) => a == b,
            (SensorValue::Boolean(a), ConstValue::Boolean(b)) => a == b,
            _ => false,
        },
    }
}
