use super::{render_trial, AgentConfig, AgentError, ReactTranscript, TranscriptStep};
use crate::gateway::{complete, ChatMessage, CompletionRequest, LlmBackend};
use crate::trial::TrialRecord;

/// Runs one specialist on its subproblem. Each turn offers the role's tools;
/// requested calls are dispatched and their results appended as tool
/// messages. The first reply without tool calls is the final report.
///
/// Tool failures are observations, not errors. Hitting `max_iterations`
/// without a report yields [`AgentError::LoopExhausted`] with the transcript.
pub fn run_react(
    config: &AgentConfig,
    subproblem: &str,
    record: &TrialRecord,
    backend: &dyn LlmBackend,
) -> Result<ReactTranscript, AgentError> {
    if !config.role.is_specialist() {
        return Err(AgentError::Config(format!("run_react() needs a specialist, got {}", config.role)));
    }
    config.validate()?;

    let mut transcript = ReactTranscript {
        role: config.role,
        subproblem: subproblem.to_string(),
        steps: Vec::new(),
        final_report: String::new(),
        iteration_count: 0,
    };
    let mut messages = vec![
        ChatMessage::system(config.prompt.render()),
        ChatMessage::user(format!("{}\n\nSubproblem: {subproblem}", render_trial(record))),
    ];
    let tools = config.registry.schema_payload();

    while transcript.iteration_count < config.max_iterations {
        let mut request = CompletionRequest::new(config.model.clone(), messages.clone()).with_tools(tools.clone());
        request.temperature = config.temperature;
        let reply = complete(backend, &request).map_err(|source| AgentError::Backend { role: config.role, source })?;
        transcript.iteration_count += 1;

        if reply.tool_calls.is_empty() {
            let report = reply.content.trim();
            if report.is_empty() {
                return Err(AgentError::EmptyReport { transcript: Box::new(transcript) });
            }
            transcript.final_report = report.to_string();
            return Ok(transcript);
        }

        if !reply.content.trim().is_empty() {
            transcript.steps.push(TranscriptStep::Thought { text: reply.content.trim().to_string() });
        }
        let calls = reply.tool_calls.clone();
        messages.push(reply);
        for call in calls {
            let result = config.registry.dispatch(&call);
            if result.is_error {
                log::debug!("{} agent: tool {} failed: {}", config.role, call.name, result.content);
            }
            messages.push(ChatMessage::tool(call.id.clone(), result.content.clone()));
            transcript.steps.push(TranscriptStep::ToolCall { call, result });
        }
    }
    Err(AgentError::LoopExhausted { transcript: Box::new(transcript) })
}
