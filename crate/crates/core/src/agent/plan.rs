use std::sync::OnceLock;

use regex::Regex;

use super::{render_trial, AgentConfig, AgentError, AgentRole, Plan, Subproblem};
use crate::gateway::{complete, ChatMessage, CompletionRequest, LlmBackend};
use crate::trial::TrialRecord;

/// Keyword prefixes per role. An item goes to the role whose keyword occurs
/// earliest in it.
const ROUTES: [(&str, AgentRole); 11] = [
    ("enroll", AgentRole::Enrollment),
    ("recruit", AgentRole::Enrollment),
    ("safety", AgentRole::Safety),
    ("safe", AgentRole::Safety),
    ("risk", AgentRole::Safety),
    ("adverse", AgentRole::Safety),
    ("toxic", AgentRole::Safety),
    ("efficacy", AgentRole::Efficacy),
    ("effective", AgentRole::Efficacy),
    ("effect", AgentRole::Efficacy),
    ("treat", AgentRole::Efficacy),
];

pub fn route_role(item: &str) -> Option<AgentRole> {
    let lower = item.to_lowercase();
    ROUTES
        .iter()
        .filter_map(|&(keyword, role)| lower.find(keyword).map(|at| (at, role)))
        .min_by_key(|&(at, _)| at)
        .map(|(_, role)| role)
}

fn item_start() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?ix)^\s*[*_]*\s*
              (?: subproblem \s* \d+ \s* (?P<label>\([^)]*\))? \s* [*_]* \s* [:.)\-]
                | \d+ \s* [.)] )
              \s*[*_]*\s* (?P<body>.*)$",
        )
        .expect("valid item regex")
    })
}

/// Numbered items of a planner reply, continuation lines folded into the
/// item above. Each entry is `(routing text, statement)`: the routing text
/// also includes a `(Role Agent)` label when one is present.
fn numbered_items(reply: &str) -> Vec<(String, String)> {
    let mut items: Vec<(String, String)> = Vec::new();
    for line in reply.lines() {
        if let Some(caps) = item_start().captures(line) {
            let body = caps["body"].trim().trim_end_matches(['*', '_']).trim().to_string();
            let label = caps.name("label").map(|m| m.as_str()).unwrap_or("");
            items.push((format!("{label} {body}"), body));
        } else if let Some((routing, statement)) = items.last_mut() {
            let extra = line.trim();
            if !extra.is_empty() {
                for text in [routing, statement] {
                    text.push(' ');
                    text.push_str(extra);
                }
            }
        }
    }
    items
}

/// Parses a planner reply into exactly one subproblem per specialist, in
/// canonical role order. `None` unless the reply has exactly three items
/// that route to three distinct roles.
pub fn parse_plan(reply: &str) -> Option<Vec<Subproblem>> {
    let items = numbered_items(reply);
    if items.len() != 3 {
        return None;
    }
    let mut subproblems = Vec::with_capacity(3);
    for (routing, statement) in items {
        let role = route_role(&routing)?;
        if statement.is_empty() || subproblems.iter().any(|s: &Subproblem| s.role == role) {
            return None;
        }
        subproblems.push(Subproblem { role, statement });
    }
    subproblems.sort_by_key(|s| s.role);
    Some(subproblems)
}

fn quoted_list(names: &[String]) -> String {
    names.iter().map(|n| format!("\"{n}\"")).collect::<Vec<_>>().join(" and ")
}

/// The canonical three subproblems, parameterized by the trial's drugs and diseases.
pub fn fallback_plan(record: &TrialRecord) -> Vec<Subproblem> {
    let (drugs, diseases) = (quoted_list(&record.drugs), quoted_list(&record.diseases));
    let noun = |names: &[String], one: &str, many: &str| if names.len() == 1 { one.to_string() } else { many.to_string() };
    let drug_noun = noun(&record.drugs, "drug", "drugs");
    vec![
        Subproblem {
            role: AgentRole::Enrollment,
            statement: "Determine the level of enrollment feasibility based on inclusion and exclusion criteria.".into(),
        },
        Subproblem { role: AgentRole::Safety, statement: format!("Evaluate the safety of the {drug_noun} {drugs}") },
        Subproblem {
            role: AgentRole::Efficacy,
            statement: format!(
                "Assess the efficacy of the {drug_noun} {drugs} on the {} {diseases}",
                noun(&record.diseases, "disease", "diseases")
            ),
        },
    ]
}

/// Asks the planning agent for the decomposition. Replies that do not
/// yield the exact three-role cover are replaced by the canonical plan
/// with `fallback` set.
pub fn plan(config: &AgentConfig, record: &TrialRecord, backend: &dyn LlmBackend) -> Result<Plan, AgentError> {
    if config.role != AgentRole::Planning {
        return Err(AgentError::Config(format!("plan() needs the planning agent, got {}", config.role)));
    }
    config.validate()?;
    let messages = vec![
        ChatMessage::system(config.prompt.render()),
        ChatMessage::user(format!(
            "Predict whether the following clinical trial will succeed. Split the task into subproblems for the \
enrollment, safety and efficacy agents.\n\n{}",
            render_trial(record)
        )),
    ];
    let mut request = CompletionRequest::new(config.model.clone(), messages);
    request.temperature = config.temperature;
    let reply = complete(backend, &request).map_err(|source| AgentError::Backend { role: config.role, source })?;
    let raw_reply = reply.content;
    Ok(match parse_plan(&raw_reply) {
        Some(subproblems) => Plan { subproblems, fallback: false, raw_reply },
        None => {
            log::warn!("trial {}: planner reply did not yield three routed subproblems; using the canonical plan", record.trial_id);
            Plan { subproblems: fallback_plan(record), fallback: true, raw_reply }
        }
    })
}
