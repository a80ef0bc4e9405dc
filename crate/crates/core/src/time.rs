//! Millisecond-precision UTC timestamps shared by the log and sensor layers.

use chrono::{DateTime, NaiveDateTime, SecondsFormat, TimeZone, Utc};

pub type Timestamp = DateTime<Utc>;

/// Parses an ISO-8601 timestamp. Offsets are normalized to UTC; a timestamp
/// without an offset is taken to be UTC. Sub-millisecond digits are truncated.
pub fn parse_timestamp(text: &str) -> Option<Timestamp> {
    let text = text.trim();
    let parsed = DateTime::parse_from_rfc3339(text)
        .map(|dt| dt.with_timezone(&Utc))
        .ok()
        .or_else(|| {
            ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"]
                .iter()
                .find_map(|fmt| NaiveDateTime::parse_from_str(text, fmt).ok())
                .map(|naive| Utc.from_utc_datetime(&naive))
        })?;
    Some(truncate_millis(parsed))
}

pub fn format_timestamp(ts: &Timestamp) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Millis, false)
}

pub fn truncate_millis(ts: Timestamp) -> Timestamp {
    from_millis(ts.timestamp_millis())
}

pub fn from_millis(ms: i64) -> Timestamp {
    Utc.timestamp_millis_opt(ms)
        .single()
        .expect("millisecond timestamp out of chrono range")
}

/// Formats a binary64 with the shortest digit string that parses back to the
/// same value.
pub fn format_decimal(value: f64) -> String {
    if value.is_nan() {
        "NaN".to_owned()
    } else if value.is_infinite() {
        if value > 0.0 { "INF" } else { "-INF" }.to_owned()
    } else {
        format!("{value:?}")
    }
}

pub fn parse_decimal(text: &str) -> Option<f64> {
    match text.trim() {
        "INF" | "+INF" => Some(f64::INFINITY),
        "-INF" => Some(f64::NEG_INFINITY),
        "NaN" => Some(f64::NAN),
        other => other.parse::<f64>().ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_normalize_to_utc() {
        let ts = parse_timestamp("2110-03-29T18:36:00+10:00").unwrap();
        assert_eq!(format_timestamp(&ts), "2110-03-29T08:36:00.000+00:00");
    }

    #[test]
    fn naive_times_are_utc_and_truncated() {
        let ts = parse_timestamp("2023-06-01T10:00:00.123456").unwrap();
        assert_eq!(format_timestamp(&ts), "2023-06-01T10:00:00.123+00:00");
        assert!(parse_timestamp("yesterday").is_none());
    }

    #[test]
    fn decimal_shortest_form() {
        assert_eq!(format_decimal(97.0), "97.0");
        assert_eq!(format_decimal(99.8), "99.8");
        assert_eq!(format_decimal(0.1 + 0.2), "0.30000000000000004");
        assert_eq!(parse_decimal("INF"), Some(f64::INFINITY));
    }
}
