use iotlog::query::{parse_query, run_query};
use iotlog::time::parse_timestamp;
use iotlog::xes::{parse_xes, validate_log, AttributeValue, Log};

const FIXTURE: &[u8] = include_bytes!("../fixtures/ed_visits.xes");

fn fixture() -> Log {
    parse_xes(FIXTURE).unwrap()
}

#[test]
fn shape() {
    let log = fixture();
    assert_eq!(log.traces.len(), 3);
    assert_eq!(log.event_count(), 12);
    let ids: Vec<_> = log.traces.iter().map(|t| t.case_id.as_str()).collect();
    assert_eq!(ids, ["0001", "0002", "0003"]);
    let lens: Vec<_> = log.traces.iter().map(|t| t.events.len()).collect();
    assert_eq!(lens, [5, 4, 3]);
    assert!(validate_log(&log).is_empty());
}

#[test]
fn triage_of_first_visit() {
    let log = fixture();
    let triage = &log.trace("0001").unwrap().events[1];
    assert_eq!(triage.activity, "Triage in the ED");
    assert_eq!(triage.timestamp, parse_timestamp("2110-03-29T18:36:00Z").unwrap());
    let a = &triage.attributes;
    assert_eq!(a.get("temperature"), Some(&AttributeValue::Float(97.0)));
    assert_eq!(a.get("heartrate"), Some(&AttributeValue::Int(68)));
    assert_eq!(a.get("pain"), Some(&AttributeValue::Int(5)));
    assert_eq!(a.get("acuity"), Some(&AttributeValue::Int(3)));
    assert_eq!(
        a.get("chiefcomplaint"),
        Some(&AttributeValue::String("R Inguinal pain".into()))
    );
}

#[test]
fn blank_cells_are_absent() {
    let log = fixture();
    let second = log.trace("0002").unwrap();
    assert!(second.events[0].attributes.is_empty());
    let vitals = &second.events[2];
    assert_eq!(vitals.attributes.get("temperature"), Some(&AttributeValue::Float(99.8)));
    assert!(vitals.attributes.get("acuity").is_none());
    assert!(vitals.attributes.get("chiefcomplaint").is_none());
}

#[test]
fn third_visit_keeps_input_order() {
    let log = fixture();
    let acts: Vec<_> = log
        .trace("0003")
        .unwrap()
        .events
        .iter()
        .map(|e| e.activity.as_str())
        .collect();
    assert_eq!(acts, ["Vital sign check", "Enter the ED", "Triage in the ED"]);
    let triage = &log.trace("0003").unwrap().events[2];
    assert_eq!(triage.attributes.get("acuity"), Some(&AttributeValue::Int(4)));
    assert_eq!(
        triage.attributes.get("chiefcomplaint"),
        Some(&AttributeValue::String("EXPOSURE".into()))
    );
}

#[test]
fn queries_over_fixture() {
    let log = fixture();
    let count = |q: &str| run_query(&log, &parse_query(q).unwrap()).count;
    assert_eq!(count("count"), 3);
    assert_eq!(count(r#"count where has activity "Triage in the ED""#), 3);
    assert_eq!(count(r#"count where on "Triage in the ED": acuity <= 2"#), 1);
    assert_eq!(count("count where event.temperature > 99"), 1);
}
