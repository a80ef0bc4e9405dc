//! Plans for the two truck pick-up analyses, as shipped with the generator.

use crate::model::{parse_plan, EnrichmentPlan};

/// Fraud detection: truck identity, weights, locations and weather.
pub const SCENARIO_1: &str = include_str!("../plans/scenario-1.json");

/// Interrupted pick-ups: cargo and truck condition, weather, and the
/// derived "discontinue the pick-up operation" event.
pub const SCENARIO_2: &str = include_str!("../plans/scenario-2.json");

pub const INTERRUPT_ACTIVITY: &str = "discontinue the pick-up operation";

/// The interruption question over a log enriched with [`SCENARIO_2`].
pub const NIGHT_INTERRUPTIONS_QUERY: &str =
    r#"count where start_hour in [22:00, 06:00) and has activity "discontinue the pick-up operation""#;

pub fn scenario_1() -> EnrichmentPlan {
    parse_plan(SCENARIO_1.as_bytes()).expect("bundled plan parses")
}

pub fn scenario_2() -> EnrichmentPlan {
    parse_plan(SCENARIO_2.as_bytes()).expect("bundled plan parses")
}
