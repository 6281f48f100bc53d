//! The agent workflow: a planning agent splits the outcome question into
//! three subproblems, one tool-calling specialist solves each, and a
//! reasoning agent turns the specialist reports into a probability.
//!
//! Every agent talks to the model through [`LlmBackend`], so the whole
//! pipeline runs identically against a live endpoint or a replay cassette.

mod pipeline;
mod plan;
mod prompts;
mod react;
mod reason;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{GatewayError, ToolCallRequest, DEFAULT_TEMPERATURE};
use crate::knowledge::{DrugStore, HetioGraph, PathBounds};
use crate::risk::{EnrollmentPredictor, EntityKind, OutcomeTable};
use crate::tools::{
    disease_statistics_tool, drug_statistics_tool, drugbank_tool, enrollment_tool, hetionet_tool, ToolRegistry,
    ToolResult,
};
use crate::trial::TrialRecord;

pub use pipeline::{Engine, EngineSettings, PredictError};
pub use plan::{fallback_plan, parse_plan, plan, route_role};
pub use prompts::{Exemplar, PromptSet, RolePrompt};
pub use react::run_react;
pub use reason::{extract_probability, reason, reasoning_input, Conclusion};

pub const DEFAULT_MAX_ITERATIONS: usize = 8;
pub const DEFAULT_DECISION_THRESHOLD: f64 = 0.5;

/// Ordered as the reports appear to the reasoning agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentRole {
    Planning,
    Enrollment,
    Safety,
    Efficacy,
    Reasoning,
}

impl AgentRole {
    pub const ALL: [AgentRole; 5] =
        [AgentRole::Planning, AgentRole::Enrollment, AgentRole::Safety, AgentRole::Efficacy, AgentRole::Reasoning];
    pub const SPECIALISTS: [AgentRole; 3] = [AgentRole::Enrollment, AgentRole::Safety, AgentRole::Efficacy];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Planning => "planning",
            AgentRole::Enrollment => "enrollment",
            AgentRole::Safety => "safety",
            AgentRole::Efficacy => "efficacy",
            AgentRole::Reasoning => "reasoning",
        }
    }

    /// Display name used in plans and report bundles, e.g. `Safety Agent`.
    pub fn agent_name(self) -> &'static str {
        match self {
            AgentRole::Planning => "Planning Agent",
            AgentRole::Enrollment => "Enrollment Agent",
            AgentRole::Safety => "Safety Agent",
            AgentRole::Efficacy => "Efficacy Agent",
            AgentRole::Reasoning => "Reasoning Agent",
        }
    }

    pub fn is_specialist(self) -> bool {
        Self::SPECIALISTS.contains(&self)
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything one agent needs to talk to the model.
#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub role: AgentRole,
    pub prompt: RolePrompt,
    pub registry: ToolRegistry,
    pub max_iterations: usize,
    pub model: String,
    pub temperature: f64,
}

impl AgentConfig {
    pub fn new(role: AgentRole, prompt: RolePrompt, registry: ToolRegistry) -> Self {
        AgentConfig {
            role,
            prompt,
            registry,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            model: String::new(),
            temperature: DEFAULT_TEMPERATURE,
        }
    }

    /// Specialists need tools and a positive iteration cap; planning and
    /// reasoning must not be offered tools.
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::Config(format!("{} agent: {m}", self.role)));
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        match (self.role.is_specialist(), self.registry.is_empty()) {
            (true, true) => bad("specialists need at least one tool"),
            (false, false) => bad("only specialists may use tools"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subproblem {
    pub role: AgentRole,
    pub statement: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub subproblems: Vec<Subproblem>,
    /// The model's reply could not be parsed into the three-role cover and
    /// the canonical plan was substituted.
    pub fallback: bool,
    pub raw_reply: String,
}

impl Plan {
    pub fn statement(&self, role: AgentRole) -> Option<&str> {
        self.subproblems.iter().find(|s| s.role == role).map(|s| s.statement.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TranscriptStep {
    Thought { text: String },
    ToolCall { call: ToolCallRequest, result: ToolResult },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReactTranscript {
    pub role: AgentRole,
    pub subproblem: String,
    pub steps: Vec<TranscriptStep>,
    pub final_report: String,
    pub iteration_count: usize,
}

impl ReactTranscript {
    pub fn tool_calls(&self) -> impl Iterator<Item = (&ToolCallRequest, &ToolResult)> {
        self.steps.iter().filter_map(|s| match s {
            TranscriptStep::ToolCall { call, result } => Some((call, result)),
            TranscriptStep::Thought { .. } => None,
        })
    }

    /// All text in the transcript: thoughts, call arguments, observations and the report.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for step in &self.steps {
            match step {
                TranscriptStep::Thought { text } => out.push_str(text),
                TranscriptStep::ToolCall { call, result } => {
                    out.push_str(&format!("{}({})\n{}", call.name, call.arguments, result.content))
                }
            }
            out.push('\n');
        }
        out.push_str(&self.final_report);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub trial_id: String,
    pub probability: f64,
    pub decision: u8,
    pub reports: BTreeMap<AgentRole, String>,
    pub transcripts: BTreeMap<AgentRole, ReactTranscript>,
    pub plan: Plan,
    pub reasoning_text: String,
}

impl PredictionResult {
    pub fn to_json(&self, pretty: bool) -> String {
        let text = if pretty { serde_json::to_string_pretty(self) } else { serde_json::to_string(self) };
        text.expect("prediction results always serialize")
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("{role} agent: backend failure: {source}")]
    Backend {
        role: AgentRole,
        #[source]
        source: GatewayError,
    },
    #[error("{} agent stopped after {} iterations without a final report", .transcript.role, .transcript.iteration_count)]
    LoopExhausted { transcript: Box<ReactTranscript> },
    #[error("{} agent returned an empty reply", .transcript.role)]
    EmptyReport { transcript: Box<ReactTranscript> },
    #[error("could not extract a probability ({reason}) from reasoning text: {raw:?}")]
    Extraction { reason: String, raw: String },
    #[error("agent configuration: {0}")]
    Config(String),
    #[error("prompt assets: {0}")]
    Prompt(String),
}

impl AgentError {
    /// The partial transcript carried by loop failures.
    pub fn transcript(&self) -> Option<&ReactTranscript> {
        match self {
            AgentError::LoopExhausted { transcript } | AgentError::EmptyReport { transcript } => Some(transcript),
            _ => None,
        }
    }
}

/// Immutable stores shared by every specialist and every trial.
#[derive(Clone)]
pub struct Resources {
    pub drugbank: Arc<DrugStore>,
    pub hetionet: Arc<HetioGraph>,
    pub drug_outcomes: Arc<OutcomeTable>,
    pub disease_outcomes: Arc<OutcomeTable>,
    pub enrollment: Option<Arc<dyn EnrollmentPredictor>>,
    pub path_bounds: PathBounds,
}

impl Default for Resources {
    fn default() -> Self {
        Resources {
            drugbank: Arc::default(),
            hetionet: Arc::default(),
            drug_outcomes: Arc::new(OutcomeTable::empty(EntityKind::Drug)),
            disease_outcomes: Arc::new(OutcomeTable::empty(EntityKind::Disease)),
            enrollment: None,
            path_bounds: PathBounds::default(),
        }
    }
}

impl fmt::Debug for Resources {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Resources")
            .field("drugbank", &self.drugbank.len())
            .field("hetionet_nodes", &self.hetionet.node_count())
            .field("drug_outcomes", &self.drug_outcomes.len())
            .field("disease_outcomes", &self.disease_outcomes.len())
            .field("enrollment", &self.enrollment.is_some())
            .field("path_bounds", &self.path_bounds)
            .finish()
    }
}

impl Resources {
    /// The tools a role may call; empty for planning and reasoning. The
    /// enrollment tool is bound to `record`.
    pub fn registry_for(&self, role: AgentRole, record: &TrialRecord) -> ToolRegistry {
        let tools = match role {
            AgentRole::Enrollment => vec![enrollment_tool(self.enrollment.clone(), record.clone())],
            AgentRole::Safety => vec![
                drug_statistics_tool(self.drug_outcomes.clone()),
                disease_statistics_tool(self.disease_outcomes.clone()),
            ],
            AgentRole::Efficacy => {
                vec![hetionet_tool(self.hetionet.clone(), self.path_bounds), drugbank_tool(self.drugbank.clone())]
            }
            AgentRole::Planning | AgentRole::Reasoning => Vec::new(),
        };
        let mut registry = ToolRegistry::new();
        for tool in tools {
            registry.register(tool).expect("built-in tools are valid and uniquely named");
        }
        registry
    }
}

/// The trial as every agent sees it.
pub fn render_trial(record: &TrialRecord) -> String {
    let criteria = record.segmented_criteria();
    let list = |items: &[String]| {
        if items.is_empty() {
            "\n- (none stated)".to_string()
        } else {
            items.iter().map(|c| format!("\n- {c}")).collect()
        }
    };
    format!(
        "Trial: {}\nPhase: {}\nDrugs: {}\nDiseases: {}\nInclusion criteria:{}\nExclusion criteria:{}",
        record.trial_id,
        record.phase.as_str(),
        record.drugs.join("; "),
        record.diseases.join("; "),
        list(&criteria.inclusion),
        list(&criteria.exclusion),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trial::Phase;

    fn record() -> TrialRecord {
        TrialRecord::new(
            "NCT1",
            Phase::Three,
            vec!["Aggrenox capsule".into()],
            vec!["cerebrovascular accident".into()],
            "Inclusion Criteria:\n- age >= 45\nExclusion Criteria:\n- bleeding disorder",
        )
        .unwrap()
    }

    #[test]
    fn roles_sort_canonically() {
        let mut roles = vec![AgentRole::Efficacy, AgentRole::Enrollment, AgentRole::Safety];
        roles.sort();
        assert_eq!(roles, AgentRole::SPECIALISTS);
    }

    #[test]
    fn registries_follow_roles() {
        let resources = Resources::default();
        let names = |role| resources.registry_for(role, &record()).names().iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(names(AgentRole::Enrollment), ["enrollment_prediction_model"]);
        assert_eq!(names(AgentRole::Safety), ["drug_historical_statistics", "disease_historical_statistics"]);
        assert_eq!(names(AgentRole::Efficacy), ["retrieval_hetionet", "retrieval_drugbank"]);
        assert!(names(AgentRole::Planning).is_empty() && names(AgentRole::Reasoning).is_empty());
    }

    #[test]
    fn config_validation() {
        let resources = Resources::default();
        let prompt = PromptSet::builtin().get(AgentRole::Safety).clone();
        let ok = AgentConfig::new(AgentRole::Safety, prompt.clone(), resources.registry_for(AgentRole::Safety, &record()));
        assert!(ok.validate().is_ok());
        assert!(AgentConfig::new(AgentRole::Safety, prompt.clone(), ToolRegistry::new()).validate().is_err());
        let planner =
            AgentConfig::new(AgentRole::Planning, prompt.clone(), resources.registry_for(AgentRole::Safety, &record()));
        assert!(planner.validate().is_err());
        let mut zero = ok.clone();
        zero.max_iterations = 0;
        assert!(zero.validate().is_err());
    }

    #[test]
    fn trial_rendering() {
        let text = render_trial(&record());
        assert_eq!(
            text,
            "Trial: NCT1\nPhase: phase 3\nDrugs: Aggrenox capsule\nDiseases: cerebrovascular accident\n\
Inclusion criteria:\n- age >= 45\nExclusion criteria:\n- bleeding disorder"
        );
    }

    #[test]
    fn result_keys_serialize_lowercase_in_canonical_order() {
        let reports: BTreeMap<AgentRole, String> =
            [(AgentRole::Efficacy, "c"), (AgentRole::Enrollment, "a"), (AgentRole::Safety, "b")]
                .into_iter()
                .map(|(r, s)| (r, s.to_string()))
                .collect();
        assert_eq!(serde_json::to_string(&reports).unwrap(), r#"{"enrollment":"a","safety":"b","efficacy":"c"}"#);
    }
}
