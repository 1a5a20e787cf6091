//! Conversational city-trip recommender core.

pub mod agents;
pub mod clock;
pub mod domain;
pub mod eval;
pub mod gateway;
pub mod metrics;
pub mod orchestrator;
pub mod runtime;
pub mod store;
