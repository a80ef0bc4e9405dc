use chrono::Duration;
use thiserror::Error;

use crate::model::CorrelationRule;
use crate::sensor::{IndexError, SensorReading, StreamIndex};
use crate::time::Timestamp;
use crate::xes::{Event, Trace};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CorrelateError {
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("trace has no case attribute {0:?} to match subject keys against")]
    MissingSubjectAttribute(String),
}

/// Readings of `source_id` linked to `event` within `trace` under `rule`.
///
/// * `NearestBefore`: the latest reading at or before the event; among
///   readings sharing that timestamp, the first in stream order.
/// * `NearestWithin(w)`: the reading minimizing `|Δt| <= w`; ties go to the
///   earlier reading, then to the smaller sensor id.
/// * `SpanOverlap`: every reading inside the closed trace span.
/// * `SubjectKeyEquals(k)`: readings inside the trace span whose subject key
///   equals the trace's attribute `k`.
///
/// An empty result is valid.
pub fn correlate<'i>(
    event: &Event,
    trace: &Trace,
    index: &'i StreamIndex,
    source_id: &str,
    rule: &CorrelationRule,
) -> Result<Vec<&'i SensorReading>, CorrelateError> {
    correlate_at(Some(event.timestamp), trace, index, source_id, rule)
}

/// As [`correlate`], with the event reduced to its timestamp. Event-relative
/// strategies yield nothing when `at` is `None`.
pub fn correlate_at<'i>(
    at: Option<Timestamp>,
    trace: &Trace,
    index: &'i StreamIndex,
    source_id: &str,
    rule: &CorrelationRule,
) -> Result<Vec<&'i SensorReading>, CorrelateError> {
    let stream = index
        .stream(source_id)
        .ok_or_else(|| IndexError::UnknownSource(source_id.to_owned()))?;
    match rule {
        CorrelationRule::NearestBefore => {
            let Some(t) = at else { return Ok(Vec::new()) };
            let readings = &stream.readings;
            let hi = readings.partition_point(|r| r.timestamp <= t);
            if hi == 0 {
                return Ok(Vec::new());
            }
            let latest = readings[hi - 1].timestamp;
            let lo = readings.partition_point(|r| r.timestamp < latest);
            Ok(vec![&readings[lo]])
        }
        CorrelationRule::NearestWithin { window_ms } => {
            let Some(t) = at else { return Ok(Vec::new()) };
            let window = Duration::milliseconds(*window_ms);
            let candidates = index.range_query(source_id, t - window, t + window)?;
            let mut best: Option<(Duration, &SensorReading)> = None;
            for reading in candidates {
                let delta = (reading.timestamp - t).abs();
                // stream order is (timestamp, sensor_id), so keeping the first
                // minimum applies both tie-breaks
                if best.is_none_or(|(d, _)| delta < d) {
                    best = Some((delta, reading));
                }
            }
            Ok(best.map(|(_, r)| r).into_iter().collect())
        }
        CorrelationRule::SpanOverlap => match trace.span() {
            None => Ok(Vec::new()),
            Some((first, last)) => Ok(index.range_query(source_id, first, last)?.iter().collect()),
        },
        CorrelationRule::SubjectKeyEquals { case_attribute } => {
            let subject = trace
                .attributes
                .get(case_attribute)
                .ok_or_else(|| CorrelateError::MissingSubjectAttribute(case_attribute.clone()))?
                .lexical();
            match trace.span() {
                None => Ok(Vec::new()),
                Some((first, last)) => Ok(index.subject_range(source_id, &subject, first, last)?),
            }
        }
    }
}
