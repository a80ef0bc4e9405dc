//! IoT-enriched event logs.

pub mod enrich;
pub mod gen;
pub mod model;
pub mod plans;
pub mod query;
pub mod sensor;
pub mod time;
pub mod xes;
