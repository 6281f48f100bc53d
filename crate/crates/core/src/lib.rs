//! Multi-agent clinical trial outcome reasoning.
//!
//! A planning agent splits an outcome question into enrollment, safety and
//! efficacy subproblems; three tool-calling specialists solve them against
//! local knowledge backends; a reasoning agent turns their reports into a
//! success probability. Everything runs against an OpenAI-compatible chat
//! endpoint or, offline, against recorded cassettes.

pub mod agent;
pub mod error;
pub mod eval;
pub mod gateway;
pub mod knowledge;
pub mod risk;
pub mod tools;
pub mod trial;

pub use error::{GatewayError, MetricsError, RiskError, StoreError, ToolError, TrialError};
pub use trial::{normalize_name, parse_trial_dataset, segment_criteria, IngestMode, Label, Phase, SegmentedCriteria, TrialRecord};
