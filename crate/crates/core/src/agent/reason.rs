use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{render_trial, AgentConfig, AgentError, AgentRole};
use crate::gateway::{complete, ChatMessage, CompletionRequest, LlmBackend};
use crate::trial::TrialRecord;

fn prediction_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)prediction[*_]*\s*:\s*[*_`]*\s*([+-]?(?:\d+(?:\.\d*)?|\.\d+))").expect("valid regex")
    })
}

fn number_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[+-]?(?:\d+(?:\.\d+)?|\.\d+)").expect("valid regex"))
}

/// Numbers in `line` not glued to letters, digits or other numbers
/// (so `0.0.` yields `0.0`, but `v2`, `3rd` and `1.2.3` yield nothing).
fn standalone_numbers(line: &str) -> Vec<f64> {
    let bytes = line.as_bytes();
    let glued = |b: u8| b.is_ascii_alphanumeric() || b == b'_';
    number_pattern()
        .find_iter(line)
        .filter(|m| {
            let before_ok = m.start() == 0 || {
                let b = bytes[m.start() - 1];
                !glued(b) && b != b'.'
            };
            let after_ok = match bytes.get(m.end()) {
                None => true,
                Some(&b'.') => !bytes.get(m.end() + 1).is_some_and(u8::is_ascii_digit),
                Some(&b) => !glued(b),
            };
            before_ok && after_ok
        })
        .filter_map(|m| m.as_str().parse().ok())
        .collect()
}

/// Reads the success probability from reasoning text: the number after the
/// last `Prediction:`; failing that, the last number in `[0, 1]` on the final
/// non-empty line. Out-of-range values are rejected, never clamped.
pub fn extract_probability(text: &str) -> Result<f64, String> {
    if let Some(caps) = prediction_pattern().captures_iter(text).last() {
        let value: f64 = caps[1].parse().map_err(|_| format!("unparsable prediction {:?}", &caps[1]))?;
        return if (0.0..=1.0).contains(&value) {
            Ok(value)
        } else {
            Err(format!("prediction {value} outside [0, 1]"))
        };
    }
    let last_line = text.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
    standalone_numbers(last_line)
        .into_iter()
        .rev()
        .find(|v| (0.0..=1.0).contains(v))
        .ok_or_else(|| "no `Prediction:` line and no probability on the final line".to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conclusion {
    pub probability: f64,
    pub decision: u8,
    pub reasoning_text: String,
}

/// The reasoning agent's user message: the trial, then the specialist
/// reports in canonical order, then the output-format instruction.
pub fn reasoning_input(record: &TrialRecord, reports: &BTreeMap<AgentRole, String>) -> String {
    let mut out = format!("{}\n\nReports:", render_trial(record));
    for (i, role) in AgentRole::SPECIALISTS.iter().enumerate() {
        let heading = match role {
            AgentRole::Enrollment => "Enrollment",
            AgentRole::Safety => "Safety",
            _ => "Efficacy",
        };
        let report = reports.get(role).map(String::as_str).unwrap_or("");
        out.push_str(&format!("\n\n{}. {heading} ({}):\n{}", i + 1, role.agent_name(), report.trim()));
    }
    out.push_str(
        "\n\nWeigh these reports and conclude. End with a final line of the form \
`Prediction: <number between 0 and 1>` giving the probability that the trial succeeds.",
    );
    out
}

/// Asks the reasoning agent for a conclusion; `decision` is 1 iff the
/// probability is at least `threshold`.
pub fn reason(
    config: &AgentConfig,
    reports: &BTreeMap<AgentRole, String>,
    record: &TrialRecord,
    backend: &dyn LlmBackend,
    threshold: f64,
) -> Result<Conclusion, AgentError> {
    if config.role != AgentRole::Reasoning {
        return Err(AgentError::Config(format!("reason() needs the reasoning agent, got {}", config.role)));
    }
    config.validate()?;
    if let Some(missing) = AgentRole::SPECIALISTS.iter().find(|r| !reports.contains_key(r)) {
        return Err(AgentError::Config(format!("missing {missing} report")));
    }
    let messages = vec![ChatMessage::system(config.prompt.render()), ChatMessage::user(reasoning_input(record, reports))];
    let mut request = CompletionRequest::new(config.model.clone(), messages);
    request.temperature = config.temperature;
    let reply = complete(backend, &request).map_err(|source| AgentError::Backend { role: config.role, source })?;
    let text = reply.content;
    let probability =
        extract_probability(&text).map_err(|reason| AgentError::Extraction { reason, raw: text.clone() })?;
    Ok(Conclusion { probability, decision: u8::from(probability >= threshold), reasoning_text: text })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::PromptSet;
    use crate::gateway::StaticBackend;
    use crate::tools::ToolRegistry;
    use crate::trial::Phase;
    use proptest::prelude::*;

    #[test]
    fn extraction_examples() {
        assert_eq!(extract_probability("the outlook is poor, at 0.0.\nPrediction: 0.0"), Ok(0.0));
        assert_eq!(extract_probability("Prediction: 1"), Ok(1.0));
        assert!(extract_probability("Prediction: 1.7").is_err());
        assert!(extract_probability("Prediction: -0.2").is_err());
        assert_eq!(extract_probability("Prediction: 0.2\nrevised\nPrediction: 0.35"), Ok(0.35));
        assert_eq!(extract_probability("**Prediction:** 0.6"), Ok(0.6));
        assert_eq!(extract_probability("prediction: .5"), Ok(0.5));
    }

    #[test]
    fn fallback_uses_final_line() {
        assert_eq!(extract_probability("Overall the chance of success is 0.3."), Ok(0.3));
        assert_eq!(extract_probability("Rate 0.9 here\nbut finally 0.25 and 7 trials\n\n"), Ok(0.25));
        assert!(extract_probability("success is likely 0.7\nno number here").is_err());
        assert!(extract_probability("version v0.5 of 1.2.3").is_err());
        assert!(extract_probability("I cannot decide").is_err());
        assert!(extract_probability("").is_err());
    }

    fn reasoner() -> AgentConfig {
        AgentConfig::new(AgentRole::Reasoning, PromptSet::builtin().get(AgentRole::Reasoning).clone(), ToolRegistry::new())
    }

    fn reports() -> BTreeMap<AgentRole, String> {
        AgentRole::SPECIALISTS.iter().map(|&r| (r, format!("{r} report"))).collect()
    }

    fn record() -> TrialRecord {
        TrialRecord::new("T", Phase::Two, vec!["x".into()], vec!["y".into()], "").unwrap()
    }

    #[test]
    fn reason_thresholds() {
        let c = reason(&reasoner(), &reports(), &record(), &StaticBackend::new("ok\nPrediction: 0.85"), 0.5).unwrap();
        assert_eq!((c.probability, c.decision), (0.85, 1));
        let c = reason(&reasoner(), &reports(), &record(), &StaticBackend::new("Prediction: 0.5"), 0.5).unwrap();
        assert_eq!(c.decision, 1);
        let c = reason(&reasoner(), &reports(), &record(), &StaticBackend::new("Prediction: 0.0"), 0.5).unwrap();
        assert_eq!(c.decision, 0);
    }

    #[test]
    fn unparsable_reasoning_keeps_raw_text() {
        match reason(&reasoner(), &reports(), &record(), &StaticBackend::new("no idea"), 0.5) {
            Err(AgentError::Extraction { raw, .. }) => assert_eq!(raw, "no idea"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reports_in_canonical_order() {
        let text = reasoning_input(&record(), &reports());
        let at = |s: &str| text.find(s).unwrap();
        assert!(at("enrollment report") < at("safety report") && at("safety report") < at("efficacy report"));
        assert!(text.contains("1. Enrollment (Enrollment Agent):\nenrollment report"));
        let mut partial = reports();
        partial.remove(&AgentRole::Safety);
        assert!(reason(&reasoner(), &partial, &record(), &StaticBackend::new("Prediction: 1"), 0.5).is_err());
    }

    proptest! {
        #[test]
        fn decision_matches_threshold(thousandths in 0u32..=1000) {
            let p = f64::from(thousandths) / 1000.0;
            let text = format!("Prediction: {p}");
            prop_assert_eq!(extract_probability(&text), Ok(p));
            let c = reason(&reasoner(), &reports(), &record(), &StaticBackend::new(text), 0.5).unwrap();
            prop_assert_eq!(c.decision == 1, p >= 0.5);
        }
    }
}
