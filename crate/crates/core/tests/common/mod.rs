#![allow(dead_code)]

//! Shared helpers for integration tests: bundle round-trips, brute-force
//! scan oracles and proptest strategies for small random instances.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use iotlog::enrich::{enrich, load_plan_sources, EnrichmentResult};
use iotlog::gen::{generate, write_bundle, GenConfig, Generated};
use iotlog::model::{Aggregator, CorrelationRule, EnrichmentPlan, Threshold};
use iotlog::sensor::{SensorReading, SensorValue};
use iotlog::xes::{parse_xes, AttributeValue, Event, Log, Trace};
use proptest::prelude::*;

pub fn ts(ms: i64) -> DateTime<Utc> {
    Utc.timestamp_millis_opt(ms).unwrap()
}

/// Generates a bundle on disk, reads it back and enriches it with `plan`,
/// going through the same files the command line would.
pub fn enrich_bundle(dir: &Path, config: &GenConfig, plan: &EnrichmentPlan) -> (Generated, EnrichmentResult) {
    let generated = generate(config).unwrap();
    write_bundle(&generated, dir).unwrap();
    let log = parse_xes(std::fs::read(dir.join("log.xes")).unwrap().as_slice()).unwrap();
    let index = load_plan_sources(plan, &dir.join("sensors")).unwrap();
    let result = enrich(&log, &index, plan).unwrap();
    (generated, result)
}

pub fn case_keys(log: &Log) -> BTreeSet<String> {
    log.schema().case_keys.into_iter().collect()
}

pub fn event_keys(log: &Log) -> BTreeSet<String> {
    log.schema().event_keys.into_iter().collect()
}

pub fn relative_close(a: f64, b: f64, tol: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

// ---------------------------------------------------------------- oracles

/// Stable sort by (timestamp, sensor id): the order every reading list is
/// expected in.
pub fn oracle_sorted(readings: &[SensorReading]) -> Vec<SensorReading> {
    let mut out = readings.to_vec();
    out.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.sensor_id.cmp(&b.sensor_id)));
    out
}

pub fn oracle_range(readings: &[SensorReading], t1: DateTime<Utc>, t2: DateTime<Utc>) -> Vec<SensorReading> {
    oracle_sorted(readings)
        .into_iter()
        .filter(|r| t1 <= r.timestamp && r.timestamp <= t2)
        .collect()
}

fn better(candidate: &SensorReading, best: &SensorReading, key: impl Fn(&SensorReading) -> i64) -> bool {
    match key(candidate).cmp(&key(best)) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => (candidate.timestamp, &candidate.sensor_id) < (best.timestamp, &best.sensor_id),
    }
}

/// Readings linked to an event at `at` in `trace`, by exhaustive scan over
/// `readings` in their original (unsorted) order.
pub fn oracle_correlate(
    at: DateTime<Utc>,
    trace: &Trace,
    readings: &[SensorReading],
    rule: &CorrelationRule,
) -> Option<Vec<SensorReading>> {
    let span = || {
        let first = trace.events.iter().map(|e| e.timestamp).min()?;
        let last = trace.events.iter().map(|e| e.timestamp).max()?;
        Some((first, last))
    };
    Some(match rule {
        CorrelationRule::NearestBefore => {
            let mut best: Option<&SensorReading> = None;
            for r in readings.iter().filter(|r| r.timestamp <= at) {
                // later is better
                if best.is_none_or(|b| better(r, b, |x| -x.timestamp.timestamp_millis())) {
                    best = Some(r);
                }
            }
            best.into_iter().cloned().collect()
        }
        CorrelationRule::NearestWithin { window_ms } => {
            let delta = |r: &SensorReading| (r.timestamp.timestamp_millis() - at.timestamp_millis()).abs();
            let mut best: Option<&SensorReading> = None;
            for r in readings.iter().filter(|r| delta(r) <= *window_ms) {
                if best.is_none_or(|b| better(r, b, delta)) {
                    best = Some(r);
                }
            }
            best.into_iter().cloned().collect()
        }
        CorrelationRule::SpanOverlap => match span() {
            None => Vec::new(),
            Some((a, b)) => oracle_range(readings, a, b),
        },
        CorrelationRule::SubjectKeyEquals { case_attribute } => {
            let subject = trace.attributes.get(case_attribute)?.lexical();
            match span() {
                None => Vec::new(),
                Some((a, b)) => oracle_range(readings, a, b)
                    .into_iter()
                    .filter(|r| r.subject_key.as_deref() == Some(subject.as_str()))
                    .collect(),
            }
        }
    })
}

pub enum OracleValue {
    Number(f64),
    Flag(bool),
    Label(String),
}

/// Straight-line aggregation of decimal readings.
pub fn oracle_aggregate(values: &[f64], aggregator: &Aggregator) -> Option<OracleValue> {
    if values.is_empty() {
        return None;
    }
    let threshold = |t: &Threshold| match t {
        Threshold::Value(v) => *v,
        Threshold::Constant { .. } => panic!("oracle takes literal thresholds"),
    };
    let mut max = values[0];
    let mut min = values[0];
    let mut sum = 0.0;
    for &v in values {
        if v > max {
            max = v;
        }
        if v < min {
            min = v;
        }
        sum += v;
    }
    Some(match aggregator {
        Aggregator::First => OracleValue::Number(values[0]),
        Aggregator::Last => OracleValue::Number(values[values.len() - 1]),
        Aggregator::Min => OracleValue::Number(min),
        Aggregator::Max => OracleValue::Number(max),
        Aggregator::Sum => OracleValue::Number(sum),
        Aggregator::Mean => OracleValue::Number(sum / values.len() as f64),
        Aggregator::AnyAbove { threshold: t } => {
            let t = threshold(t);
            OracleValue::Flag(values.iter().any(|&v| v > t))
        }
        Aggregator::AllBelow { threshold: t } => {
            let t = threshold(t);
            OracleValue::Flag(values.iter().all(|&v| v < t))
        }
        Aggregator::ThresholdBucket { boundaries, labels } => {
            let mut label = labels.last().unwrap().clone();
            for (i, b) in boundaries.iter().enumerate() {
                if max <= threshold(b) {
                    label = labels[i].clone();
                    break;
                }
            }
            OracleValue::Label(label)
        }
    })
}

pub fn oracle_matches(value: &AttributeValue, expected: &OracleValue, tol: f64) -> bool {
    match (value, expected) {
        (AttributeValue::Float(a), OracleValue::Number(b)) => relative_close(*a, *b, tol),
        (AttributeValue::Boolean(a), OracleValue::Flag(b)) => a == b,
        (AttributeValue::String(a), OracleValue::Label(b)) => a == b,
        _ => false,
    }
}

// ------------------------------------------------------- query oracle

#[derive(Debug, Clone)]
pub enum QLit {
    Text(String),
    Int(i64),
    Float(f64),
    Bool(bool),
}

#[derive(Debug, Clone)]
pub enum QFilter {
    Has(String),
    Case(String, &'static str, QLit),
    Event(String, &'static str, QLit),
    On(String, String, &'static str, QLit),
    /// Minutes of day, and zone offset in minutes.
    Hours(u32, u32, i32),
}

#[derive(Debug, Clone)]
pub struct QSpec {
    pub cases: bool,
    pub filters: Vec<QFilter>,
}

fn render_lit(l: &QLit) -> String {
    match l {
        QLit::Text(s) => format!("\"{s}\""),
        QLit::Int(v) => v.to_string(),
        QLit::Float(v) => format!("{v:?}"),
        QLit::Bool(b) => b.to_string(),
    }
}

fn hhmm(minutes: u32) -> String {
    format!("{:02}:{:02}", minutes / 60, minutes % 60)
}

impl QSpec {
    pub fn render(&self) -> String {
        let mut out = String::from(if self.cases { "cases" } else { "count" });
        for (i, f) in self.filters.iter().enumerate() {
            out.push_str(if i == 0 { " where " } else { " and " });
            out.push_str(&match f {
                QFilter::Has(a) => format!("has activity \"{a}\""),
                QFilter::Case(k, op, l) => format!("case.{k} {op} {}", render_lit(l)),
                QFilter::Event(k, op, l) => format!("event.{k} {op} {}", render_lit(l)),
                QFilter::On(a, k, op, l) => format!("on \"{a}\": {k} {op} {}", render_lit(l)),
                QFilter::Hours(from, to, zone) => {
                    let sign = if *zone < 0 { '-' } else { '+' };
                    let z = zone.unsigned_abs();
                    format!(
                        "start_hour in [{}, {}) at {sign}{:02}:{:02}",
                        hhmm(*from),
                        hhmm(*to),
                        z / 60,
                        z % 60
                    )
                }
            });
        }
        out
    }
}

fn apply(op: &str, ord: Option<Ordering>) -> bool {
    match (op, ord) {
        ("!=", None) => true,
        (_, None) => false,
        ("=", Some(o)) => o.is_eq(),
        ("!=", Some(o)) => o.is_ne(),
        ("<", Some(o)) => o.is_lt(),
        ("<=", Some(o)) => o.is_le(),
        (">", Some(o)) => o.is_gt(),
        (">=", Some(o)) => o.is_ge(),
        _ => unreachable!(),
    }
}

/// `None` is a type error.
fn oracle_compare(value: &AttributeValue, op: &str, lit: &QLit) -> Option<bool> {
    let num = |v: &AttributeValue| match v {
        AttributeValue::Int(i) => Some(*i as f64),
        AttributeValue::Float(f) => Some(*f),
        _ => None,
    };
    match (value, lit) {
        (AttributeValue::String(a), QLit::Text(b)) => Some(apply(op, Some(a.as_bytes().cmp(b.as_bytes())))),
        (AttributeValue::Int(a), QLit::Int(b)) => Some(apply(op, Some(a.cmp(b)))),
        (AttributeValue::Float(a), QLit::Int(b)) => Some(apply(op, a.partial_cmp(&(*b as f64)))),
        (AttributeValue::Int(_) | AttributeValue::Float(_), QLit::Float(b)) => {
            Some(apply(op, num(value).unwrap().partial_cmp(b)))
        }
        (AttributeValue::Boolean(a), QLit::Bool(b)) => Some(apply(op, Some(a.cmp(b)))),
        (AttributeValue::Date(a), QLit::Text(b)) => {
            let b = DateTime::parse_from_rfc3339(b).ok()?.with_timezone(&Utc);
            Some(apply(op, Some(a.cmp(&b))))
        }
        _ => None,
    }
}

/// Per trace: matched, plus `(event, key)` coordinates of every type error,
/// in filter then event order.
pub fn oracle_trace(trace: &Trace, spec: &QSpec) -> (bool, Vec<(Option<usize>, String)>) {
    let mut errors = Vec::new();
    let mut all = true;
    let events = |activity: Option<&String>, key: &String, op: &str, lit: &QLit, errors: &mut Vec<_>| {
        let mut any = false;
        for (i, e) in trace.events.iter().enumerate() {
            if activity.is_some_and(|a| *a != e.activity) {
                continue;
            }
            if let Some(v) = e.attributes.get(key) {
                match oracle_compare(v, op, lit) {
                    Some(b) => any |= b,
                    None => errors.push((Some(i), key.clone())),
                }
            }
        }
        any
    };
    for f in &spec.filters {
        let ok = match f {
            QFilter::Has(a) => trace.events.iter().any(|e| e.activity == *a),
            QFilter::Case(k, op, lit) => match trace.attributes.get(k) {
                None => false,
                Some(v) => match oracle_compare(v, op, lit) {
                    Some(b) => b,
                    None => {
                        errors.push((None, k.clone()));
                        false
                    }
                },
            },
            QFilter::Event(k, op, lit) => events(None, k, op, lit, &mut errors),
            QFilter::On(a, k, op, lit) => events(Some(a), k, op, lit, &mut errors),
            QFilter::Hours(from, to, zone) => match trace.events.first() {
                None => false,
                Some(e) => {
                    let day = 86_400_000i64;
                    let x = (e.timestamp.timestamp_millis() + *zone as i64 * 60_000).rem_euclid(day);
                    let (f, t) = (*from as i64 * 60_000, *to as i64 * 60_000);
                    if f < t {
                        f <= x && x < t
                    } else if f > t {
                        x >= f || x < t
                    } else {
                        true
                    }
                }
            },
        };
        all &= ok;
    }
    (all && errors.is_empty(), errors)
}

// ----------------------------------------------------- strategies

pub fn arb_reading(max_ms: i64) -> impl Strategy<Value = SensorReading> {
    (
        0..max_ms,
        prop::sample::select(vec!["s1", "s2", "s3"]),
        -50i32..50,
        prop::option::of(prop::sample::select(vec!["A", "B"])),
    )
        .prop_map(|(ms, sensor, v, subject)| {
            let mut r = SensorReading::new(sensor, ts(ms), SensorValue::Decimal(v as f64 / 4.0));
            r.subject_key = subject.map(str::to_owned);
            r
        })
}

pub fn arb_trace(max_ms: i64) -> impl Strategy<Value = Trace> {
    (
        prop::collection::vec(0..max_ms, 0..5),
        prop::option::of(prop::sample::select(vec!["A", "B", "C"])),
    )
        .prop_map(|(mut times, subject)| {
            times.sort();
            let mut t = Trace::new("c");
            for ms in times {
                t.events.push(Event::new("a", ts(ms)));
            }
            if let Some(s) = subject {
                t.attributes.insert("plate", AttributeValue::String(s.into()));
            }
            t
        })
}

pub fn arb_rule() -> impl Strategy<Value = CorrelationRule> {
    prop_oneof![
        Just(CorrelationRule::NearestBefore),
        (1i64..30).prop_map(|w| CorrelationRule::NearestWithin { window_ms: w }),
        Just(CorrelationRule::SpanOverlap),
        Just(CorrelationRule::SubjectKeyEquals {
            case_attribute: "plate".into()
        }),
    ]
}

pub fn arb_aggregator() -> impl Strategy<Value = Aggregator> {
    let t = || (-60i32..60).prop_map(|v| Threshold::Value(v as f64 / 4.0));
    prop_oneof![
        Just(Aggregator::First),
        Just(Aggregator::Last),
        Just(Aggregator::Min),
        Just(Aggregator::Max),
        Just(Aggregator::Mean),
        Just(Aggregator::Sum),
        t().prop_map(|threshold| Aggregator::AnyAbove { threshold }),
        t().prop_map(|threshold| Aggregator::AllBelow { threshold }),
        prop::collection::btree_set(-60i32..60, 1..4).prop_map(|set| {
            let boundaries: Vec<_> = set.into_iter().map(|v| Threshold::Value(v as f64 / 4.0)).collect();
            let labels = (0..=boundaries.len()).map(|i| format!("b{i}")).collect();
            Aggregator::ThresholdBucket { boundaries, labels }
        }),
    ]
}

fn arb_value() -> impl Strategy<Value = AttributeValue> {
    prop_oneof![
        prop::sample::select(vec!["x", "y", "z"]).prop_map(|s| AttributeValue::String(s.into())),
        (-3i64..4).prop_map(AttributeValue::Int),
        (-6i32..7).prop_map(|v| AttributeValue::Float(v as f64 / 2.0)),
        any::<bool>().prop_map(AttributeValue::Boolean),
        (0i64..4).prop_map(|d| AttributeValue::Date(ts(d * 86_400_000))),
    ]
}

const DAY_MS: i64 = 86_400_000;

pub fn arb_query_log() -> impl Strategy<Value = Log> {
    let event = (
        prop::sample::select(vec!["a", "b", "c"]),
        0..3 * DAY_MS,
        prop::option::of(arb_value()),
    );
    let trace = (
        prop::option::of(arb_value()),
        prop::option::of(arb_value()),
        prop::collection::vec(event, 0..4),
    );
    prop::collection::vec(trace, 0..6).prop_map(|traces| {
        let mut log = Log::new();
        for (i, (k1, k2, events)) in traces.into_iter().enumerate() {
            let mut t = Trace::new(format!("case-{i}"));
            if let Some(v) = k1 {
                t.attributes.insert("k1", v);
            }
            if let Some(v) = k2 {
                t.attributes.insert("k2", v);
            }
            for (activity, ms, attr) in events {
                let mut e = Event::new(activity, ts(ms));
                if let Some(v) = attr {
                    e.attributes.insert("e1", v);
                }
                t.events.push(e);
            }
            t.sort_events();
            log.traces.push(t);
        }
        log
    })
}

fn arb_lit_op() -> impl Strategy<Value = (&'static str, QLit)> {
    let ops = vec!["=", "!=", "<", "<=", ">", ">="];
    prop_oneof![
        (
            prop::sample::select(ops.clone()),
            prop::sample::select(vec!["x", "y", "w"])
        )
            .prop_map(|(op, s)| (op, QLit::Text(s.into()))),
        (prop::sample::select(ops.clone()), -3i64..4).prop_map(|(op, v)| (op, QLit::Int(v))),
        (prop::sample::select(ops.clone()), -6i32..7).prop_map(|(op, v)| (op, QLit::Float(v as f64 / 2.0 + 0.25))),
        (prop::sample::select(vec!["=", "!="]), any::<bool>()).prop_map(|(op, b)| (op, QLit::Bool(b))),
        (prop::sample::select(ops), 0i64..4)
            .prop_map(|(op, d)| (op, QLit::Text(format!("1970-01-0{}T00:00:00Z", d + 1)))),
    ]
}

pub fn arb_query() -> impl Strategy<Value = QSpec> {
    let key = || prop::sample::select(vec!["k1", "k2", "e1"]).prop_map(String::from);
    let activity = || prop::sample::select(vec!["a", "b", "c", "d"]).prop_map(String::from);
    let filter = prop_oneof![
        activity().prop_map(QFilter::Has),
        (key(), arb_lit_op()).prop_map(|(k, (op, l))| QFilter::Case(k, op, l)),
        (key(), arb_lit_op()).prop_map(|(k, (op, l))| QFilter::Event(k, op, l)),
        (activity(), key(), arb_lit_op()).prop_map(|(a, k, (op, l))| QFilter::On(a, k, op, l)),
        (0u32..48, 0u32..48, -24i32..25).prop_map(|(f, t, z)| QFilter::Hours(f * 30, t * 30, z * 30)),
    ];
    (any::<bool>(), prop::collection::vec(filter, 0..4)).prop_map(|(cases, filters)| QSpec { cases, filters })
}

// ------------------------------------------------- equivalence checks

use iotlog::enrich::{correlate, derive_value, CorrelateError};
use iotlog::model::{DerivationRule, OutputType};
use iotlog::query::{parse_query, run_query};
use iotlog::sensor::{build_index, SensorStream};

pub fn check_range(streams: Vec<Vec<SensorReading>>, pick: usize, a: i64, b: i64) -> Result<(), TestCaseError> {
    let source = format!("src{}", pick % streams.len());
    let owned: Vec<SensorStream> = streams
        .iter()
        .enumerate()
        .map(|(i, r)| SensorStream::new(format!("src{i}"), "t", r.clone()))
        .collect();
    let index = build_index(owned).unwrap();
    let got = index.range_query(&source, ts(a), ts(b)).unwrap();
    let want = oracle_range(&streams[pick % streams.len()], ts(a), ts(b));
    prop_assert_eq!(got, want.as_slice());
    Ok(())
}

pub fn check_correlation(
    readings: Vec<SensorReading>,
    trace: Trace,
    rule: CorrelationRule,
    at: i64,
) -> Result<(), TestCaseError> {
    let index = build_index(vec![SensorStream::new("s", "t", readings.clone())]).unwrap();
    let event = Event::new("a", ts(at));
    let got = correlate(&event, &trace, &index, "s", &rule);
    match oracle_correlate(ts(at), &trace, &readings, &rule) {
        None => prop_assert!(matches!(got, Err(CorrelateError::MissingSubjectAttribute(_)))),
        Some(want) => {
            let got: Vec<SensorReading> = got.unwrap().into_iter().cloned().collect();
            prop_assert_eq!(got, want);
        }
    }
    Ok(())
}

pub fn check_derivation(values: Vec<f64>, aggregator: Aggregator) -> Result<(), TestCaseError> {
    let readings: Vec<SensorReading> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| SensorReading::new("s", ts(i as i64), SensorValue::Decimal(v)))
        .collect();
    let refs: Vec<&SensorReading> = readings.iter().collect();
    let output_type = match aggregator {
        Aggregator::AnyAbove { .. } | Aggregator::AllBelow { .. } => OutputType::Boolean,
        Aggregator::ThresholdBucket { .. } => OutputType::String,
        _ => OutputType::Float,
    };
    let rule = DerivationRule {
        aggregator: aggregator.clone(),
        output_type,
        invert: false,
    };
    let got = derive_value(&refs, &rule, &EnrichmentPlan::empty()).unwrap();
    match (got, oracle_aggregate(&values, &aggregator)) {
        (None, None) => {}
        (Some(v), Some(want)) => prop_assert!(oracle_matches(&v, &want, 1e-12), "{:?} vs oracle", v),
        (got, _) => prop_assert!(false, "presence differs: {:?}", got),
    }
    Ok(())
}

pub fn check_query(log: Log, spec: QSpec) -> Result<(), TestCaseError> {
    let text = spec.render();
    let query = parse_query(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
    let result = run_query(&log, &query);
    let mut ids = Vec::new();
    let mut errors = Vec::new();
    for (i, trace) in log.traces.iter().enumerate() {
        let (ok, errs) = oracle_trace(trace, &spec);
        if ok {
            ids.push(trace.case_id.clone());
        }
        errors.extend(errs.into_iter().map(|(e, k)| (i, e, k)));
    }
    prop_assert_eq!(&result.case_ids, &ids, "{}", text);
    prop_assert_eq!(result.count, ids.len());
    let got: Vec<_> = result
        .errors
        .iter()
        .map(|e| (e.trace, e.event, e.key.clone()))
        .collect();
    prop_assert_eq!(got, errors, "{}", text);
    Ok(())
}

pub fn arb_range_case() -> impl Strategy<Value = (Vec<Vec<SensorReading>>, usize, i64, i64)> {
    (
        prop::collection::vec(prop::collection::vec(arb_reading(60), 0..12), 1..4),
        0usize..4,
        -5i64..65,
        -5i64..65,
    )
}

pub fn arb_correlation_case() -> impl Strategy<Value = (Vec<SensorReading>, Trace, CorrelationRule, i64)> {
    (
        prop::collection::vec(arb_reading(60), 0..12),
        arb_trace(60),
        arb_rule(),
        -5i64..65,
    )
}

pub fn arb_derivation_case() -> impl Strategy<Value = (Vec<f64>, Aggregator)> {
    (
        prop::collection::vec(
            prop_oneof![(-200i32..200).prop_map(|v| v as f64 / 8.0), -1e6f64..1e6],
            0..10,
        ),
        arb_aggregator(),
    )
}

// ---------------------------------------------------- arbitrary logs

fn arb_text() -> impl Strategy<Value = String> {
    "[ a-zA-Z0-9&<>\"'\t\n\r_:.-éß中]{0,10}"
}

pub fn arb_attr_value() -> impl Strategy<Value = AttributeValue> {
    prop_oneof![
        arb_text().prop_map(AttributeValue::String),
        any::<i64>().prop_map(AttributeValue::Int),
        prop_oneof![
            any::<f64>().prop_filter("NaN never equals itself", |v| !v.is_nan()),
            Just(f64::INFINITY),
            Just(f64::NEG_INFINITY),
            Just(-0.0),
            Just(1e-300),
        ]
        .prop_map(AttributeValue::Float),
        any::<bool>().prop_map(AttributeValue::Boolean),
        (-62_000_000_000_000i64..200_000_000_000_000).prop_map(|ms| AttributeValue::Date(ts(ms))),
    ]
}

fn arb_attributes() -> impl Strategy<Value = Vec<(String, AttributeValue)>> {
    prop::collection::vec(("[a-z][a-z0-9_:]{0,6}", arb_attr_value()), 0..4)
}

fn fill(set: &mut iotlog::xes::AttributeSet, attributes: Vec<(String, AttributeValue)>) {
    for (k, v) in attributes {
        if !iotlog::xes::RESERVED_KEYS.contains(&k.as_str()) {
            set.insert(k, v);
        }
    }
}

/// Valid logs with every supported attribute type and awkward text.
pub fn arb_log() -> impl Strategy<Value = Log> {
    let event = ("[a-zA-Z &<>]{1,8}", 0i64..4_000_000_000_000, arb_attributes());
    let trace = (arb_attributes(), prop::collection::vec(event, 0..5));
    (arb_attributes(), prop::collection::vec(trace, 0..5)).prop_map(|(meta, traces)| {
        let mut log = Log::new();
        fill(&mut log.metadata, meta);
        for (i, (attributes, events)) in traces.into_iter().enumerate() {
            let mut t = Trace::new(format!("c&<{i}>"));
            fill(&mut t.attributes, attributes);
            for (activity, ms, attributes) in events {
                let mut e = Event::new(activity, ts(ms));
                fill(&mut e.attributes, attributes);
                t.events.push(e);
            }
            t.sort_events();
            log.traces.push(t);
        }
        log
    })
}

// ------------------------------------------------- level restriction

use iotlog::model::{parse_plan, validate_plan, BindingTarget, IoTContextCategory, ProcessContextLevel, ViolationKind};

pub struct LevelRow {
    pub level: ProcessContextLevel,
    pub category: IoTContextCategory,
    pub target: &'static str,
    pub expected: bool,
    pub accepted: bool,
    /// Number of violations that cite the level or target restriction.
    pub level_violations: usize,
}

/// One single-binding plan per (level, category, target kind); every other
/// part of the binding is valid, so only the level rule can reject it.
pub fn level_table() -> Vec<LevelRow> {
    let mut rows = Vec::new();
    for level in ProcessContextLevel::ALL {
        for category in IoTContextCategory::ALL {
            for target in ["event_attribute", "case_attribute", "process_report_entry"] {
                let target_json = match target {
                    "event_attribute" => r#"{"kind": "event_attribute", "attribute_key": "k"}"#,
                    "case_attribute" => r#"{"kind": "case_attribute", "attribute_key": "k"}"#,
                    _ => r#"{"kind": "process_report_entry", "metric_name": "k"}"#,
                };
                let json = format!(
                    r#"{{"plan_version": 1,
  "sources": [{{"source_id": "s", "path": "s.csv", "format": "csv", "sensor_type": "rain",
    "value_type": "decimal", "cell": {{"level": "sensor", "category": "environment"}}}}],
  "bindings": [{{"binding_id": "b", "cell": {{"level": "{level}", "category": "{category}"}}, "source_id": "s",
    "correlation": {{"strategy": "span_overlap"}},
    "derivation": {{"aggregator": {{"kind": "max"}}, "output_type": "float"}},
    "target": {target_json}}}]}}"#
                );
                let plan = parse_plan(json.as_bytes()).unwrap();
                let violations = validate_plan(&plan);
                let expected = matches!(
                    (level, &plan.bindings[0].target),
                    (ProcessContextLevel::Event, BindingTarget::EventAttribute { .. })
                        | (ProcessContextLevel::Instance, BindingTarget::CaseAttribute { .. })
                        | (ProcessContextLevel::Process, BindingTarget::ProcessReportEntry { .. })
                );
                let level_violations = violations
                    .iter()
                    .filter(|v| {
                        matches!(
                            v.kind,
                            ViolationKind::LevelForbidden { .. } | ViolationKind::TargetLevelMismatch { .. }
                        )
                    })
                    .count();
                rows.push(LevelRow {
                    level,
                    category,
                    target,
                    expected,
                    accepted: violations.is_empty(),
                    level_violations,
                });
            }
        }
    }
    rows
}

// ------------------------------------------------------ conservation

/// Every trace, case attribute, event and event attribute of `before`
/// survives unchanged and in order in `after`; additions are allowed.
pub fn additions_only(before: &Log, after: &Log) -> Result<(), String> {
    if before.traces.len() != after.traces.len() {
        return Err(format!(
            "trace count {} became {}",
            before.traces.len(),
            after.traces.len()
        ));
    }
    if before.metadata != after.metadata || before.extensions != after.extensions {
        return Err("log-level content changed".into());
    }
    for (t, (b, a)) in before.traces.iter().zip(&after.traces).enumerate() {
        if b.case_id != a.case_id {
            return Err(format!("trace {t}: case id changed"));
        }
        for attr in b.attributes.iter() {
            if a.attributes.get(&attr.key) != Some(&attr.value) {
                return Err(format!("trace {t}: case attribute {:?} changed", attr.key));
            }
        }
        // original events must appear as a subsequence, attributes intact
        let mut j = 0;
        for (e, event) in b.events.iter().enumerate() {
            loop {
                let Some(candidate) = a.events.get(j) else {
                    return Err(format!("trace {t}: event {e} lost"));
                };
                j += 1;
                let same = candidate.activity == event.activity
                    && candidate.timestamp == event.timestamp
                    && event
                        .attributes
                        .iter()
                        .all(|x| candidate.attributes.get(&x.key) == Some(&x.value));
                if same {
                    break;
                }
                if !candidate.attributes.contains_key(iotlog::enrich::DERIVED_FROM_KEY) {
                    return Err(format!("trace {t}: event {e} altered or reordered"));
                }
            }
        }
        if a.events[j..]
            .iter()
            .any(|x| !x.attributes.contains_key(iotlog::enrich::DERIVED_FROM_KEY))
        {
            return Err(format!("trace {t}: unexpected trailing event"));
        }
    }
    Ok(())
}

// ------------------------------------------- independent report values

/// Reads a sensor CSV with nothing but the csv crate: (timestamp ms,
/// value, subject) per row.
pub fn raw_csv(path: &Path) -> Vec<(i64, f64, String)> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (t, v, s) = (col("timestamp"), col("value"), col("subject_key"));
    reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            let ms = DateTime::parse_from_rfc3339(&r[t]).unwrap().timestamp_millis();
            (ms, r[v].parse().unwrap(), r[s].to_string())
        })
        .collect()
}

/// Per-case fold of the readings whose subject is the case's plate and that
/// fall in the case span, then the mean over cases that have any.
pub fn independent_mean_of(enriched: &Log, rows: &[(i64, f64, String)], per_case: fn(&[f64]) -> f64) -> Option<f64> {
    let mut values = Vec::new();
    for trace in &enriched.traces {
        let Some(AttributeValue::String(plate)) = trace.attributes.get("truck_license_plate_number") else {
            continue;
        };
        let first = trace.events.iter().map(|e| e.timestamp.timestamp_millis()).min();
        let last = trace.events.iter().map(|e| e.timestamp.timestamp_millis()).max();
        let (Some(first), Some(last)) = (first, last) else {
            continue;
        };
        let mine: Vec<f64> = rows
            .iter()
            .filter(|(ms, _, s)| s == plate && first <= *ms && *ms <= last)
            .map(|r| r.1)
            .collect();
        if !mine.is_empty() {
            values.push(per_case(&mine));
        }
    }
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

pub fn all_attribute_keys(log: &Log) -> BTreeSet<String> {
    let mut keys = BTreeSet::new();
    keys.extend(log.metadata.keys().map(String::from));
    for t in &log.traces {
        keys.extend(t.attributes.keys().map(String::from));
        for e in &t.events {
            keys.extend(e.attributes.keys().map(String::from));
        }
    }
    keys
}
