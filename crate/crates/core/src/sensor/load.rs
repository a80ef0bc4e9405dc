use std::io::Read;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};
use thiserror::Error;

use super::{GeoPoint, SensorReading, SensorStream, SensorValue, SourceFormat, ValueType};
use crate::time::{format_decimal, format_timestamp, parse_timestamp};

#[derive(Debug, Error)]
pub enum SensorError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: header is missing column {column:?}")]
    MissingColumn { path: PathBuf, column: &'static str },
    #[error("{path}: row {row}: {message}")]
    Row { path: PathBuf, row: u64, message: String },
}

/// What a loader needs to know about a source besides its bytes.
#[derive(Debug, Clone)]
pub struct StreamSpec {
    pub source_id: String,
    pub sensor_type: String,
    pub format: SourceFormat,
    pub value_type: ValueType,
}

/// Reads a stream file from disk.
pub fn load_stream(path: &Path, spec: &StreamSpec) -> Result<SensorStream, SensorError> {
    let file = std::fs::File::open(path).map_err(|source| SensorError::Io {
        path: path.to_owned(),
        source,
    })?;
    read_stream(file, path, spec)
}

/// Reads a stream from any reader; `path` is only used in error messages.
/// Rows are numbered from 1 for the first data row.
pub fn read_stream<R: Read>(reader: R, path: &Path, spec: &StreamSpec) -> Result<SensorStream, SensorError> {
    let readings = match spec.format {
        SourceFormat::Csv => read_csv(reader, path, spec)?,
        SourceFormat::Jsonl => read_jsonl(reader, path, spec)?,
    };
    Ok(SensorStream::new(&spec.source_id, &spec.sensor_type, readings))
}

struct RawRow<'a> {
    timestamp: Option<&'a str>,
    value: Option<RawValue<'a>>,
    sensor_id: Option<&'a str>,
    unit: Option<&'a str>,
    subject_key: Option<&'a str>,
    lon: Option<RawValue<'a>>,
    lat: Option<RawValue<'a>>,
}

enum RawValue<'a> {
    Text(&'a str),
    Json(&'a Value),
}

fn read_csv<R: Read>(reader: R, path: &Path, spec: &StreamSpec) -> Result<Vec<SensorReading>, SensorError> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let row_error = |row: u64, message: String| SensorError::Row {
        path: path.to_owned(),
        row,
        message,
    };
    let headers = csv.headers().map_err(|e| row_error(0, e.to_string()))?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let ts_col = column("timestamp").ok_or(SensorError::MissingColumn {
        path: path.to_owned(),
        column: "timestamp",
    })?;
    let value_col = column("value").ok_or(SensorError::MissingColumn {
        path: path.to_owned(),
        column: "value",
    })?;
    let (sensor_col, unit_col, subject_col, lon_col, lat_col) = (
        column("sensor_id"),
        column("unit"),
        column("subject_key"),
        column("lon"),
        column("lat"),
    );
    let mut readings = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let row = i as u64 + 1;
        let record = record.map_err(|e| row_error(row, e.to_string()))?;
        let optional = |col: Option<usize>| col.and_then(|c| record.get(c)).filter(|s| !s.is_empty());
        let raw = RawRow {
            timestamp: record.get(ts_col),
            value: record.get(value_col).map(RawValue::Text),
            sensor_id: optional(sensor_col),
            unit: optional(unit_col),
            subject_key: optional(subject_col),
            lon: optional(lon_col).map(RawValue::Text),
            lat: optional(lat_col).map(RawValue::Text),
        };
        readings.push(convert(raw, spec).map_err(|m| row_error(row, m))?);
    }
    Ok(readings)
}

fn read_jsonl<R: Read>(mut reader: R, path: &Path, spec: &StreamSpec) -> Result<Vec<SensorReading>, SensorError> {
    let mut text = String::new();
    reader.read_to_string(&mut text).map_err(|source| SensorError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut readings = Vec::new();
    let mut row = 0u64;
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        row += 1;
        let row_error = |message: String| SensorError::Row {
            path: path.to_owned(),
            row,
            message,
        };
        let object: Map<String, Value> = serde_json::from_str(line).map_err(|e| row_error(e.to_string()))?;
        let text_field = |name: &str| -> Result<Option<&str>, String> {
            match object.get(name) {
                None | Some(Value::Null) => Ok(None),
                Some(Value::String(s)) => Ok(Some(s.as_str())),
                Some(other) => Err(format!("{name} must be a string, found {other}")),
            }
        };
        let json_field = |name: &str| object.get(name).filter(|v| !v.is_null()).map(RawValue::Json);
        let raw = RawRow {
            timestamp: text_field("timestamp").map_err(row_error)?,
            value: json_field("value"),
            sensor_id: text_field("sensor_id").map_err(row_error)?,
            unit: text_field("unit").map_err(row_error)?,
            subject_key: text_field("subject_key").map_err(row_error)?,
            lon: json_field("lon"),
            lat: json_field("lat"),
        };
        readings.push(convert(raw, spec).map_err(row_error)?);
    }
    Ok(readings)
}

fn convert(raw: RawRow<'_>, spec: &StreamSpec) -> Result<SensorReading, String> {
    let ts_text = raw.timestamp.ok_or("missing timestamp")?;
    let timestamp = parse_timestamp(ts_text).ok_or_else(|| format!("unparsable timestamp {ts_text:?}"))?;
    let value = raw.value.ok_or("missing value")?;
    let value = match (spec.value_type, value) {
        (ValueType::String, RawValue::Text(s)) => SensorValue::Text(s.to_owned()),
        (ValueType::String, RawValue::Json(Value::String(s))) => SensorValue::Text(s.clone()),
        (ValueType::Decimal, raw) => SensorValue::Decimal(decimal(&raw).ok_or_else(|| mismatch(&raw, "decimal"))?),
        (ValueType::Boolean, RawValue::Text(s)) => SensorValue::Boolean(match s {
            "true" | "1" => true,
            "false" | "0" => false,
            _ => return Err(mismatch(&RawValue::Text(s), "boolean")),
        }),
        (ValueType::Boolean, RawValue::Json(Value::Bool(b))) => SensorValue::Boolean(*b),
        (expected, raw) => return Err(mismatch(&raw, &format!("{expected:?}").to_lowercase())),
    };
    let location = match (raw.lon, raw.lat) {
        (None, None) => None,
        (Some(lon), Some(lat)) => {
            let point = GeoPoint {
                longitude: decimal(&lon).ok_or_else(|| mismatch(&lon, "longitude"))?,
                latitude: decimal(&lat).ok_or_else(|| mismatch(&lat, "latitude"))?,
            };
            if !point.is_valid() {
                return Err(format!(
                    "coordinates out of range: lon {} lat {}",
                    point.longitude, point.latitude
                ));
            }
            Some(point)
        }
        _ => return Err("lon and lat must be given together".into()),
    };
    let sensor_id = raw.sensor_id.unwrap_or(&spec.source_id);
    if sensor_id.is_empty() {
        return Err("empty sensor_id".into());
    }
    Ok(SensorReading {
        sensor_id: sensor_id.to_owned(),
        timestamp,
        value,
        unit: raw.unit.map(str::to_owned),
        subject_key: raw.subject_key.map(str::to_owned),
        location,
    })
}

fn decimal(raw: &RawValue<'_>) -> Option<f64> {
    match raw {
        RawValue::Text(s) => s.parse().ok(),
        RawValue::Json(Value::Number(n)) => n.as_f64(),
        RawValue::Json(_) => None,
    }
}

fn mismatch(raw: &RawValue<'_>, expected: &str) -> String {
    let found = match raw {
        RawValue::Text(s) => format!("{s:?}"),
        RawValue::Json(v) => v.to_string(),
    };
    format!("expected {expected} value, found {found}")
}

/// Serializes a stream in the given format with the full column set.
pub fn write_stream(stream: &SensorStream, format: SourceFormat) -> Vec<u8> {
    match format {
        SourceFormat::Csv => {
            let mut out = csv::Writer::from_writer(Vec::new());
            out.write_record(["timestamp", "value", "sensor_id", "unit", "subject_key", "lon", "lat"])
                .expect("writing to memory");
            for r in &stream.readings {
                let (lon, lat) = r
                    .location
                    .map(|p| (format_decimal(p.longitude), format_decimal(p.latitude)))
                    .unwrap_or_default();
                out.write_record([
                    format_timestamp(&r.timestamp),
                    r.value.lexical(),
                    r.sensor_id.clone(),
                    r.unit.clone().unwrap_or_default(),
                    r.subject_key.clone().unwrap_or_default(),
                    lon,
                    lat,
                ])
                .expect("writing to memory");
            }
            out.into_inner().expect("writing to memory")
        }
        SourceFormat::Jsonl => {
            let mut out = Vec::new();
            for r in &stream.readings {
                let mut object = Map::new();
                object.insert("timestamp".into(), Value::from(format_timestamp(&r.timestamp)));
                object.insert(
                    "value".into(),
                    match &r.value {
                        SensorValue::Decimal(v) => Value::from(*v),
                        SensorValue::Text(s) => Value::from(s.clone()),
                        SensorValue::Boolean(b) => Value::from(*b),
                    },
                );
                object.insert("sensor_id".into(), Value::from(r.sensor_id.clone()));
                if let Some(unit) = &r.unit {
                    object.insert("unit".into(), Value::from(unit.clone()));
                }
                if let Some(subject) = &r.subject_key {
                    object.insert("subject_key".into(), Value::from(subject.clone()));
                }
                if let Some(p) = r.location {
                    object.insert("lon".into(), Value::from(p.longitude));
                    object.insert("lat".into(), Value::from(p.latitude));
                }
                serde_json::to_writer(&mut out, &object).expect("writing to memory");
                out.push(b'\n');
            }
            out
        }
    }
}
