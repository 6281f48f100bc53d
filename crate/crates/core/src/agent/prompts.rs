use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AgentError, AgentRole};

/// One worked example shown to an agent ahead of the real input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RolePrompt {
    pub system: String,
    pub exemplars: Vec<Exemplar>,
}

impl RolePrompt {
    /// System prompt followed by the exemplars, if any.
    pub fn render(&self) -> String {
        let mut out = self.system.trim_end().to_string();
        if !self.exemplars.is_empty() {
            out.push_str("\n\nExamples:");
            for (i, example) in self.exemplars.iter().enumerate() {
                out.push_str(&format!(
                    "\n\nExample {} input:\n{}\n\nExample {} output:\n{}",
                    i + 1,
                    example.input.trim_end(),
                    i + 1,
                    example.output.trim_end()
                ));
            }
        }
        out
    }
}

/// Prompt text for every role. Built-in defaults ship with the crate; a
/// directory with `<role>.md` and optional `<role>_exemplars.json` files
/// overrides them file by file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    roles: BTreeMap<AgentRole, RolePrompt>,
}

const BUILTIN: [(AgentRole, &str, &str); 5] = [
    (AgentRole::Planning, include_str!("../../prompts/planning.md"), include_str!("../../prompts/planning_exemplars.json")),
    (AgentRole::Enrollment, include_str!("../../prompts/enrollment.md"), "[]"),
    (AgentRole::Safety, include_str!("../../prompts/safety.md"), "[]"),
    (AgentRole::Efficacy, include_str!("../../prompts/efficacy.md"), "[]"),
    (AgentRole::Reasoning, include_str!("../../prompts/reasoning.md"), include_str!("../../prompts/reasoning_exemplars.json")),
];

fn parse_exemplars(source: &str, text: &str) -> Result<Vec<Exemplar>, AgentError> {
    serde_json::from_str(text).map_err(|e| AgentError::Prompt(format!("{source}: {e}")))
}

impl PromptSet {
    pub fn builtin() -> Self {
        let roles = BUILTIN
            .iter()
            .map(|&(role, system, exemplars)| {
                let exemplars = parse_exemplars(role.as_str(), exemplars).expect("built-in exemplars are valid JSON");
                (role, RolePrompt { system: system.to_string(), exemplars })
            })
            .collect();
        PromptSet { roles }
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, AgentError> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(AgentError::Prompt(format!("{} is not a directory", dir.display())));
        }
        let mut set = PromptSet::builtin();
        for role in AgentRole::ALL {
            let prompt = set.roles.get_mut(&role).expect("all roles present");
            let system_path = dir.join(format!("{}.md", role.as_str()));
            if system_path.is_file() {
                prompt.system = std::fs::read_to_string(&system_path)
                    .map_err(|e| AgentError::Prompt(format!("{}: {e}", system_path.display())))?;
            }
            let exemplar_path = dir.join(format!("{}_exemplars.json", role.as_str()));
            if exemplar_path.is_file() {
                let text = std::fs::read_to_string(&exemplar_path)
                    .map_err(|e| AgentError::Prompt(format!("{}: {e}", exemplar_path.display())))?;
                prompt.exemplars = parse_exemplars(&exemplar_path.display().to_string(), &text)?;
            }
        }
        Ok(set)
    }

    pub fn get(&self, role: AgentRole) -> &RolePrompt {
        &self.roles[&role]
    }

    pub fn set(&mut self, role: AgentRole, prompt: RolePrompt) {
        self.roles.insert(role, prompt);
    }
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::builtin()
    }
}
