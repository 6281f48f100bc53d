use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use std::thread;

use serde::Serialize;

use super::{
    plan, reason, run_react, AgentConfig, AgentError, AgentRole, Plan, PredictionResult, PromptSet, ReactTranscript,
    Resources, DEFAULT_DECISION_THRESHOLD, DEFAULT_MAX_ITERATIONS,
};
use crate::gateway::{LlmBackend, DEFAULT_TEMPERATURE};
use crate::trial::TrialRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct EngineSettings {
    pub model: String,
    pub max_iterations: usize,
    pub temperature: f64,
    pub threshold: f64,
    /// Run the three specialists on separate threads.
    pub concurrent_specialists: bool,
}

impl Default for EngineSettings {
    fn default() -> Self {
        EngineSettings {
            model: "gpt-4".to_string(),
            max_iterations: DEFAULT_MAX_ITERATIONS,
            temperature: DEFAULT_TEMPERATURE,
            threshold: DEFAULT_DECISION_THRESHOLD,
            concurrent_specialists: true,
        }
    }
}

/// A failed prediction together with whatever the pipeline produced before the failure.
#[derive(Debug, Serialize)]
pub struct PredictError {
    pub trial_id: String,
    #[serde(serialize_with = "as_display")]
    pub error: AgentError,
    pub plan: Option<Plan>,
    pub transcripts: BTreeMap<AgentRole, ReactTranscript>,
}

fn as_display<S: serde::Serializer>(error: &AgentError, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(error)
}

impl fmt::Display for PredictError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "trial {}: {}", self.trial_id, self.error)
    }
}

impl std::error::Error for PredictError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Wires prompts, stores and a backend into the full workflow.
pub struct Engine {
    backend: Arc<dyn LlmBackend>,
    resources: Resources,
    prompts: PromptSet,
    settings: EngineSettings,
}

impl Engine {
    pub fn new(backend: Arc<dyn LlmBackend>, resources: Resources) -> Self {
        Engine { backend, resources, prompts: PromptSet::builtin(), settings: EngineSettings::default() }
    }

    pub fn with_prompts(mut self, prompts: PromptSet) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn with_settings(mut self, settings: EngineSettings) -> Self {
        self.settings = settings;
        self
    }

    /// Same stores and prompts, different backend (e.g. one cassette per trial).
    pub fn with_backend(&self, backend: Arc<dyn LlmBackend>) -> Engine {
        Engine { backend, resources: self.resources.clone(), prompts: self.prompts.clone(), settings: self.settings.clone() }
    }

    pub fn settings(&self) -> &EngineSettings {
        &self.settings
    }

    pub fn resources(&self) -> &Resources {
        &self.resources
    }

    pub fn config(&self, role: AgentRole, record: &TrialRecord) -> AgentConfig {
        AgentConfig {
            role,
            prompt: self.prompts.get(role).clone(),
            registry: self.resources.registry_for(role, record),
            max_iterations: self.settings.max_iterations,
            model: self.settings.model.clone(),
            temperature: self.settings.temperature,
        }
    }

    /// plan → three specialists → reasoning.
    #[allow(clippy::result_large_err)] // the error carries the partial transcripts by design
    pub fn predict(&self, record: &TrialRecord) -> Result<PredictionResult, PredictError> {
        let backend: &dyn LlmBackend = self.backend.as_ref();
        let fail = |error, plan, transcripts| PredictError { trial_id: record.trial_id.clone(), error, plan, transcripts };

        let plan = plan(&self.config(AgentRole::Planning, record), record, backend)
            .map_err(|e| fail(e, None, BTreeMap::new()))?;

        let jobs: Vec<(AgentConfig, &str)> = plan
            .subproblems
            .iter()
            .map(|s| (self.config(s.role, record), s.statement.as_str()))
            .collect();
        let outcomes: Vec<Result<ReactTranscript, AgentError>> = if self.settings.concurrent_specialists {
            thread::scope(|scope| {
                let handles: Vec<_> = jobs
                    .iter()
                    .map(|(config, statement)| scope.spawn(move || run_react(config, statement, record, backend)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("specialist thread panicked")).collect()
            })
        } else {
            jobs.iter().map(|(config, statement)| run_react(config, statement, record, backend)).collect()
        };

        let mut transcripts = BTreeMap::new();
        let mut first_error = None;
        for outcome in outcomes {
            match outcome {
                Ok(t) => {
                    transcripts.insert(t.role, t);
                }
                Err(e) => {
                    if let Some(t) = e.transcript() {
                        transcripts.insert(t.role, t.clone());
                    }
                    // keep the error of the earliest role for a deterministic report
                    first_error.get_or_insert(e);
                }
            }
        }
        if let Some(error) = first_error {
            return Err(fail(error, Some(plan), transcripts));
        }

        let reports: BTreeMap<AgentRole, String> =
            transcripts.iter().map(|(role, t)| (*role, t.final_report.clone())).collect();
        let conclusion =
            match reason(&self.config(AgentRole::Reasoning, record), &reports, record, backend, self.settings.threshold)
            {
                Ok(c) => c,
                Err(e) => return Err(fail(e, Some(plan), transcripts)),
            };
        Ok(PredictionResult {
            trial_id: record.trial_id.clone(),
            probability: conclusion.probability,
            decision: conclusion.decision,
            reports,
            transcripts,
            plan,
            reasoning_text: conclusion.reasoning_text,
        })
    }
}
