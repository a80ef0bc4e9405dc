//! Synthetic truck pick-up data: a base log, the sensor streams both bundled
//! plans read, and a ground-truth manifest of what was injected.
//!
//! All randomness comes from one ChaCha8 stream seeded with
//! [`GenConfig::seed`], drawn in a fixed order, so equal configs give
//! byte-identical bundles.
//!
//! Each case is one truck with a unique license plate. Normal cases run
//! arrival, entry check, empty weighing, loading, loaded weighing, exit check
//! and departure. An interrupted case has its cargo temperature rise above
//! 35 °C during loading and leaves 10 to 30 minutes later; the
//! interruption activity itself is never written to the log. Retrofitted
//! trucks carry 1200 to 2500 kg of filler, which shows up as empty-weight
//! deviation from the registered tare. Weight magnitudes are synthetic.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use chrono::{Duration, TimeZone, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plans;
use crate::sensor::{write_stream, GeoPoint, SensorReading, SensorStream, SensorValue, SourceFormat};
use crate::time::{from_millis, Timestamp};
use crate::xes::{write_xes_with, AttributeValue, CaseIdType, Event, Log, Trace, WriteOptions};

pub const ARRIVAL: &str = "arrival of the truck";
pub const ENTRY: &str = "evaluate the truck entry";
pub const WEIGH_EMPTY: &str = "weigh the empty truck";
pub const LOAD: &str = "load in truck";
pub const WEIGH_LOADED: &str = "weigh the loaded truck";
pub const EXIT: &str = "evaluate the truck exit";
pub const LEAVE: &str = "truck leaves the port";

/// Cargo temperature above this interrupts a pick-up.
pub const MAX_SAFE_TEMP: f64 = 35.0;

/// Registered tare per truck category, in kg.
const TARE_KG: [f64; 5] = [9000.0, 10500.0, 12000.0, 13500.0, 15000.0];
const CASES_PER_DAY: usize = 10;
const CONDITION_PERIOD_MIN: i64 = 5;
const RAIN_PERIOD_MIN: i64 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub seed: u64,
    pub n_cases: usize,
    #[serde(default = "default_fraud_rate")]
    pub fraud_rate: f64,
    #[serde(default = "default_interruption_rate")]
    pub interruption_rate: f64,
    #[serde(default = "default_night_fraction")]
    pub night_arrival_fraction: f64,
    #[serde(default = "default_origin")]
    pub time_origin: Timestamp,
}

fn default_fraud_rate() -> f64 {
    0.1
}

fn default_interruption_rate() -> f64 {
    0.2
}

fn default_night_fraction() -> f64 {
    0.3
}

fn default_origin() -> Timestamp {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
}

impl GenConfig {
    pub fn new(seed: u64, n_cases: usize) -> Self {
        Self {
            seed,
            n_cases,
            fraud_rate: default_fraud_rate(),
            interruption_rate: default_interruption_rate(),
            night_arrival_fraction: default_night_fraction(),
            time_origin: default_origin(),
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        for (name, rate) in [
            ("fraud_rate", self.fraud_rate),
            ("interruption_rate", self.interruption_rate),
            ("night_arrival_fraction", self.night_arrival_fraction),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(GenError::InvalidConfig(format!(
                    "{name} must lie in [0, 1], found {rate}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// What the generator injected into one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseTruth {
    pub license_plate: String,
    pub retrofitted: bool,
    /// Whether any rain reading above the threshold falls in the case span.
    pub rain: bool,
    pub arrival: Timestamp,
    pub arrival_hour: u32,
    pub night_arrival: bool,
    pub interrupted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trigger: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthManifest {
    pub config: GenConfig,
    pub interrupted_cases: Vec<String>,
    pub fraud_cases: Vec<String>,
    pub interrupted_night_pickups: usize,
    pub per_case: BTreeMap<String, CaseTruth>,
}

impl GroundTruthManifest {
    /// Recounts the summary fields from `per_case`, listing ids in case
    /// number order.
    pub fn recompute(&self) -> (Vec<String>, Vec<String>, usize) {
        let mut ids: Vec<&String> = self.per_case.keys().collect();
        ids.sort_by_key(|id| id.parse::<u64>().unwrap_or(u64::MAX));
        let pick = |f: fn(&CaseTruth) -> bool| -> Vec<String> {
            ids.iter()
                .filter(|id| f(&self.per_case[**id]))
                .map(|id| (*id).clone())
                .collect()
        };
        let night = self
            .per_case
            .values()
            .filter(|c| c.interrupted && c.night_arrival)
            .count();
        (pick(|c| c.interrupted), pick(|c| c.retrofitted), night)
    }
}

/// Stream layout: source id, sensor type, file format.
pub const SOURCES: [(&str, &str, SourceFormat); 15] = [
    ("rfid", "rfid", SourceFormat::Csv),
    ("driver_rfid", "rfid", SourceFormat::Csv),
    ("driver_credit", "rfid", SourceFormat::Csv),
    ("truck_blacklist", "rfid", SourceFormat::Csv),
    ("truck_category", "rfid", SourceFormat::Csv),
    ("tare_check", "weight", SourceFormat::Csv),
    ("weight", "weight", SourceFormat::Csv),
    ("cargo_scale", "scale", SourceFormat::Csv),
    ("gps", "gps", SourceFormat::Jsonl),
    ("timer", "timer", SourceFormat::Csv),
    ("rain", "rain", SourceFormat::Csv),
    ("cargo_temperature", "cargo_temperature", SourceFormat::Csv),
    ("truck_temperature", "truck_temperature", SourceFormat::Csv),
    ("cargo_humidity", "cargo_humidity", SourceFormat::Csv),
    ("cargo_smoke", "cargo_smoke", SourceFormat::Csv),
];

#[derive(Debug, Clone)]
pub struct Generated {
    pub log: Log,
    /// In [`SOURCES`] order.
    pub streams: Vec<SensorStream>,
    pub manifest: GroundTruthManifest,
}

fn round_to(v: f64, places: i32) -> f64 {
    let f = 10f64.powi(places);
    (v * f).round() / f
}

fn minutes(rng: &mut ChaCha8Rng, lo: i64, hi: i64) -> Duration {
    Duration::seconds(rng.gen_range(lo * 60..=hi * 60))
}

/// Hands out event timestamps, bumping by 1 ms until unused so that
/// readings copied from events identify exactly one event.
struct Clock {
    used: HashSet<i64>,
}

impl Clock {
    fn claim(&mut self, t: Timestamp) -> Timestamp {
        let mut ms = t.timestamp_millis();
        while !self.used.insert(ms) {
            ms += 1;
        }
        from_millis(ms)
    }
}

#[derive(Default)]
struct Streams {
    by_source: BTreeMap<&'static str, Vec<SensorReading>>,
}

impl Streams {
    fn push(
        &mut self,
        source: &'static str,
        sensor: &str,
        t: Timestamp,
        value: SensorValue,
        subject: Option<&str>,
    ) -> &mut SensorReading {
        let list = self.by_source.entry(source).or_default();
        let mut r = SensorReading::new(sensor, t, value);
        r.subject_key = subject.map(str::to_owned);
        list.push(r);
        list.last_mut().expect("just pushed")
    }

    fn finish(mut self) -> Vec<SensorStream> {
        SOURCES
            .iter()
            .map(|(id, kind, _)| SensorStream::new(*id, *kind, self.by_source.remove(id).unwrap_or_default()))
            .collect()
    }
}

fn zone_point(zone: &str) -> GeoPoint {
    let h = zone
        .bytes()
        .fold(17u32, |acc, b| acc.wrapping_mul(31).wrapping_add(b as u32));
    GeoPoint {
        longitude: round_to(4.40 + (h % 1000) as f64 * 1e-5, 5),
        latitude: round_to(51.90 + ((h / 1000) % 1000) as f64 * 1e-5, 5),
    }
}

pub fn generate(config: &GenConfig) -> Result<Generated, GenError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let midnight = config
        .time_origin
        .date_naive()
        .and_hms_opt(0, 0, 0)
        .expect("valid time")
        .and_utc();
    let mut clock = Clock { used: HashSet::new() };
    let mut streams = Streams::default();
    let mut log = Log::new();
    log.metadata.insert(
        "source",
        AttributeValue::String("iotlog synthetic truck pick-up".into()),
    );
    let mut truths = Vec::with_capacity(config.n_cases);
    let mut spans = Vec::with_capacity(config.n_cases);

    for i in 0..config.n_cases {
        let case_id = (i + 1).to_string();
        let plate = format!(
            "{}{}-{:04}",
            rng.gen_range(b'A'..=b'Z') as char,
            rng.gen_range(b'A'..=b'Z') as char,
            i + 1
        );
        let night = rng.gen_bool(config.night_arrival_fraction);
        let retrofitted = rng.gen_bool(config.fraud_rate);
        let interrupted = rng.gen_bool(config.interruption_rate);
        let day = Duration::days((i / CASES_PER_DAY) as i64);
        let second_of_day = if night {
            rng.gen_range(22 * 3600..30 * 3600)
        } else {
            rng.gen_range(6 * 3600..22 * 3600)
        };

        let mut trace = Trace::new(case_id.clone());
        let a = &mut trace.attributes;
        a.insert("customs_supervison", AttributeValue::Boolean(rng.gen_bool(0.3)));
        a.insert("cargo_type", AttributeValue::String(rng.gen_range(0..5).to_string()));
        a.insert(
            "cargo_price",
            AttributeValue::Float(round_to(rng.gen_range(50.0..900.0), 2)),
        );
        a.insert("yard_category", AttributeValue::String(rng.gen_range(0..3).to_string()));
        a.insert(
            "means_of_payment",
            AttributeValue::String(rng.gen_range(0..3).to_string()),
        );
        a.insert(
            "contract_category",
            AttributeValue::String(rng.gen_range(0..3).to_string()),
        );

        let driver_id: i64 = rng.gen_range(100_000..1_000_000);
        let credit = ["0", "1", "2", "2"][rng.gen_range(0..4)];
        let blacklisted = rng.gen_bool(0.05);
        let category = rng.gen_range(0..TARE_KG.len());
        let deviation = if retrofitted {
            rng.gen_range(1200.0..2500.0)
        } else {
            rng.gen_range(-400.0..400.0)
        };
        let deviation = round_to(deviation, 1);
        let empty_weight = TARE_KG[category] + deviation;
        let cargo_kg = round_to(rng.gen_range(8_000.0..30_000.0), 1);
        let filler = if retrofitted { deviation } else { 0.0 };
        let loaded_weight = round_to(empty_weight - filler + cargo_kg, 1);
        let yard = format!("yard-{}{}", rng.gen_range(b'A'..=b'F') as char, rng.gen_range(1..10));

        let arrival = clock.claim(midnight + day + Duration::seconds(second_of_day));
        let entry = clock.claim(arrival + minutes(&mut rng, 2, 8));
        let weigh_empty = clock.claim(entry + minutes(&mut rng, 3, 10));
        let load = clock.claim(weigh_empty + minutes(&mut rng, 3, 10));
        let mut events = vec![
            (ARRIVAL, arrival, "approach"),
            (ENTRY, entry, "gate-in"),
            (WEIGH_EMPTY, weigh_empty, "scale-1"),
            (LOAD, load, yard.as_str()),
        ];
        let mut trigger = None;
        if interrupted {
            // first periodic reading after loading starts, up to 15 min later
            let period = CONDITION_PERIOD_MIN * 60_000;
            let since = (load - arrival).num_milliseconds();
            let k = since / period + 1 + rng.gen_range(0..4);
            let t = arrival + Duration::milliseconds(k * period);
            trigger = Some(t);
            let leave = clock.claim(t + minutes(&mut rng, 10, 30));
            events.push((LEAVE, leave, "exit-road"));
        } else {
            let weigh_loaded = clock.claim(load + minutes(&mut rng, 10, 40));
            let exit = clock.claim(weigh_loaded + minutes(&mut rng, 3, 10));
            let leave = clock.claim(exit + minutes(&mut rng, 2, 8));
            events.push((WEIGH_LOADED, weigh_loaded, "scale-2"));
            events.push((EXIT, exit, "gate-out"));
            events.push((LEAVE, leave, "exit-road"));
        }
        let leave = events.last().expect("nonempty").1;

        for &(activity, t, zone) in &events {
            trace.events.push(Event::new(activity, t));
            let gps = streams.push(
                "gps",
                "gps-tracker",
                t,
                SensorValue::Text(zone.to_owned()),
                Some(&plate),
            );
            gps.location = Some(zone_point(zone));
            let elapsed = (t - arrival).num_milliseconds() as f64 / 1000.0;
            streams
                .push("timer", "timer", t, SensorValue::Decimal(elapsed), Some(&plate))
                .unit = Some("s".into());
        }
        let plate_value = || SensorValue::Text(plate.clone());
        streams.push("rfid", "gate-in", entry, plate_value(), Some(&plate));
        streams.push(
            "driver_rfid",
            "gate-in",
            entry,
            SensorValue::Text(driver_id.to_string()),
            Some(&plate),
        );
        streams.push(
            "driver_credit",
            "gate-in",
            entry,
            SensorValue::Text(credit.into()),
            Some(&plate),
        );
        streams.push(
            "truck_blacklist",
            "gate-in",
            entry,
            SensorValue::Boolean(blacklisted),
            Some(&plate),
        );
        streams.push(
            "truck_category",
            "gate-in",
            entry,
            SensorValue::Text(category.to_string()),
            Some(&plate),
        );
        streams
            .push(
                "tare_check",
                "scale-1",
                weigh_empty,
                SensorValue::Decimal(deviation),
                Some(&plate),
            )
            .unit = Some("kg".into());
        streams
            .push(
                "weight",
                "scale-1",
                weigh_empty,
                SensorValue::Decimal(empty_weight),
                Some(&plate),
            )
            .unit = Some("kg".into());
        streams
            .push(
                "cargo_scale",
                "loader",
                load,
                SensorValue::Decimal(cargo_kg),
                Some(&plate),
            )
            .unit = Some("kg".into());
        if !interrupted {
            let (weigh_loaded, exit) = (events[4].1, events[5].1);
            streams
                .push(
                    "weight",
                    "scale-2",
                    weigh_loaded,
                    SensorValue::Decimal(loaded_weight),
                    Some(&plate),
                )
                .unit = Some("kg".into());
            streams.push("rfid", "gate-out", exit, plate_value(), Some(&plate));
        }

        let hot_truck = rng.gen_bool(0.1);
        let mut t = arrival;
        while t <= leave {
            let hot = trigger.is_some_and(|tr| t >= tr);
            let cargo_temp = if hot {
                rng.gen_range(36.0..45.0)
            } else {
                rng.gen_range(18.0..33.0)
            };
            let truck_temp = if hot_truck {
                rng.gen_range(30.0..40.0)
            } else {
                rng.gen_range(15.0..32.0)
            };
            let humidity = rng.gen_range(40.0..92.0);
            let smoke = if rng.gen_bool(0.02) {
                rng.gen_range(0.1..0.5)
            } else {
                rng.gen_range(0.0..0.05)
            };
            for (source, sensor, value, unit) in [
                ("cargo_temperature", "cargo-probe", round_to(cargo_temp, 1), "Cel"),
                ("truck_temperature", "cab-probe", round_to(truck_temp, 1), "Cel"),
                ("cargo_humidity", "cargo-probe", round_to(humidity, 1), "%"),
                ("cargo_smoke", "cargo-probe", round_to(smoke, 3), "mg/m3"),
            ] {
                streams
                    .push(source, sensor, t, SensorValue::Decimal(value), Some(&plate))
                    .unit = Some(unit.into());
            }
            t += Duration::minutes(CONDITION_PERIOD_MIN);
        }

        let hour = arrival.hour();
        truths.push((
            case_id,
            CaseTruth {
                license_plate: plate,
                retrofitted,
                rain: false,
                arrival,
                arrival_hour: hour,
                night_arrival: !(6..22).contains(&hour),
                interrupted,
                trigger,
            },
        ));
        spans.push((arrival, leave));
        log.traces.push(trace);
    }

    // one shared rain gauge over the whole horizon, as a two-state chain
    if let (Some(start), Some(end)) = (spans.iter().map(|s| s.0).min(), spans.iter().map(|s| s.1).max()) {
        let period = Duration::minutes(RAIN_PERIOD_MIN);
        let first_ms = start.timestamp_millis().div_euclid(period.num_milliseconds()) * period.num_milliseconds();
        let mut t = from_millis(first_ms) - period;
        let mut raining = rng.gen_bool(0.2);
        let mut wet = Vec::new();
        while t <= end + period {
            let level = if raining {
                rng.gen_range(0.6..4.0)
            } else {
                rng.gen_range(0.0..0.2)
            };
            streams
                .push("rain", "rain-gauge", t, SensorValue::Decimal(round_to(level, 1)), None)
                .unit = Some("mm".into());
            if raining {
                wet.push(t);
            }
            raining = if raining { rng.gen_bool(0.8) } else { rng.gen_bool(0.05) };
            t += period;
        }
        for ((_, truth), (a, b)) in truths.iter_mut().zip(&spans) {
            truth.rain = wet.iter().any(|w| a <= w && w <= b);
        }
    }

    let per_case: BTreeMap<String, CaseTruth> = truths.into_iter().collect();
    let mut manifest = GroundTruthManifest {
        config: config.clone(),
        interrupted_cases: Vec::new(),
        fraud_cases: Vec::new(),
        interrupted_night_pickups: 0,
        per_case,
    };
    let (interrupted, fraud, night) = manifest.recompute();
    manifest.interrupted_cases = interrupted;
    manifest.fraud_cases = fraud;
    manifest.interrupted_night_pickups = night;

    Ok(Generated {
        log,
        streams: streams.finish(),
        manifest,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), GenError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| GenError::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    fs::write(path, bytes).map_err(|source| GenError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `log.xes`, `sensors/<source>.<ext>`, `manifest.json` and the two
/// bundled plans under `plans/` into `dir`.
pub fn write_bundle(generated: &Generated, dir: &Path) -> Result<(), GenError> {
    let options = WriteOptions {
        case_id_type: CaseIdType::Int,
    };
    write_file(&dir.join("log.xes"), &write_xes_with(&generated.log, options))?;
    for (stream, (id, _, format)) in generated.streams.iter().zip(SOURCES) {
        let name = format!("{id}.{}", format.extension());
        write_file(&dir.join("sensors").join(name), &write_stream(stream, format))?;
    }
    let mut manifest = serde_json::to_vec_pretty(&generated.manifest).expect("manifest serializes");
    manifest.push(b'\n');
    write_file(&dir.join("manifest.json"), &manifest)?;
    write_file(&dir.join("plans/scenario-1.json"), plans::SCENARIO_1.as_bytes())?;
    write_file(&dir.join("plans/scenario-2.json"), plans::SCENARIO_2.as_bytes())?;
    Ok(())
}
