//! Assurance-case engine for Goal Structuring Notation arguments.
//!
//! The crate holds the typed case model, a rule-based inference engine with
//! an independent reference evaluator, a selector language with a catalogue
//! of competency queries, a versioned snapshot store and automation hooks.

pub mod caseio;
pub mod hooks;
pub mod inference;
pub mod model;
pub mod query;
pub mod store;
pub mod testing;
pub mod typing;
pub mod vocab;
