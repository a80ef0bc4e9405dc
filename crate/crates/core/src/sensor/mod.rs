//! Sensor reading streams: file ingestion and time/subject indexing.

mod index;
mod load;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub use index::{build_index, IndexError, ReadingPos, StreamIndex};
pub use load::{load_stream, read_stream, write_stream, SensorError, StreamSpec};

use crate::time::{format_decimal, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFormat {
    Csv,
    Jsonl,
}

impl SourceFormat {
    pub fn extension(self) -> &'static str {
        match self {
            SourceFormat::Csv => "csv",
            SourceFormat::Jsonl => "jsonl",
        }
    }
}

/// Declared type of the `value` column of a source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueType {
    Decimal,
    String,
    Boolean,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SensorValue {
    Decimal(f64),
    Text(String),
    Boolean(bool),
}

impl SensorValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            SensorValue::Decimal(v) => Some(*v),
            _ => None,
        }
    }

    pub fn lexical(&self) -> String {
        match self {
            SensorValue::Decimal(v) => format_decimal(*v),
            SensorValue::Text(s) => s.clone(),
            SensorValue::Boolean(b) => b.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub longitude: f64,
    pub latitude: f64,
}

impl GeoPoint {
    pub fn is_valid(&self) -> bool {
        (-180.0..=180.0).contains(&self.longitude) && (-90.0..=90.0).contains(&self.latitude)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorReading {
    pub sensor_id: String,
    pub timestamp: Timestamp,
    pub value: SensorValue,
    pub unit: Option<String>,
    /// Identity linkage token, e.g. the license plate an RFID reader saw.
    pub subject_key: Option<String>,
    pub location: Option<GeoPoint>,
}

impl SensorReading {
    pub fn new(sensor_id: impl Into<String>, timestamp: Timestamp, value: SensorValue) -> Self {
        Self {
            sensor_id: sensor_id.into(),
            timestamp,
            value,
            unit: None,
            subject_key: None,
            location: None,
        }
    }

    /// Stream order: timestamp, then sensor id.
    pub fn stream_order(&self, other: &Self) -> Ordering {
        self.timestamp
            .cmp(&other.timestamp)
            .then_with(|| self.sensor_id.cmp(&other.sensor_id))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorStream {
    pub source_id: String,
    pub sensor_type: String,
    pub readings: Vec<SensorReading>,
}

impl SensorStream {
    /// Builds a stream, sorting readings stably by `(timestamp, sensor_id)`.
    pub fn new(source_id: impl Into<String>, sensor_type: impl Into<String>, mut readings: Vec<SensorReading>) -> Self {
        readings.sort_by(SensorReading::stream_order);
        Self {
            source_id: source_id.into(),
            sensor_type: sensor_type.into(),
            readings,
        }
    }

    pub fn is_sorted(&self) -> bool {
        self.readings
            .windows(2)
            .all(|w| w[0].stream_order(&w[1]) != Ordering::Greater)
    }
}
