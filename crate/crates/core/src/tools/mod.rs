//! Tool definitions exposed to the model as JSON schemas, argument
//! validation, and dispatch to local handlers.

mod builtin;

use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

pub use crate::error::ToolError;
use crate::gateway::ToolCallRequest;
pub use builtin::{
    disease_statistics_tool, drug_statistics_tool, drugbank_tool, enrollment_tool, format_rate, hetionet_tool,
    DISEASE_STATISTICS, DRUGBANK_RETRIEVAL, DRUG_STATISTICS, ENROLLMENT_MODEL, HETIONET_RETRIEVAL,
};

pub type Arguments = Map<String, Value>;

/// Handler output: rendered text, or an error message the agent will observe.
pub type Handler = Arc<dyn Fn(&Arguments) -> Result<String, String> + Send + Sync>;

#[derive(Clone)]
pub struct ToolDefinition {
    pub name: String,
    pub description: String,
    pub parameters: Value,
    pub handler: Handler,
}

impl fmt::Debug for ToolDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ToolDefinition").field("name", &self.name).field("parameters", &self.parameters).finish()
    }
}

impl ToolDefinition {
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        parameters: Value,
        handler: impl Fn(&Arguments) -> Result<String, String> + Send + Sync + 'static,
    ) -> Self {
        ToolDefinition { name: name.into(), description: description.into(), parameters, handler: Arc::new(handler) }
    }

    /// The `{"type": "function", "function": {...}}` entry offered to the model.
    pub fn schema(&self) -> Value {
        json!({
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": self.parameters,
            }
        })
    }

    fn properties(&self) -> Option<&Map<String, Value>> {
        self.parameters.get("properties").and_then(Value::as_object)
    }

    fn required(&self) -> impl Iterator<Item = &str> {
        self.parameters.get("required").and_then(Value::as_array).into_iter().flatten().filter_map(Value::as_str)
    }

    fn check_schema(&self) -> Result<(), ToolError> {
        let bad = |reason: &str| ToolError::BadSchema { name: self.name.clone(), reason: reason.to_string() };
        if self.parameters.get("type").and_then(Value::as_str) != Some("object") {
            return Err(bad("type must be \"object\""));
        }
        let properties = self.properties().ok_or_else(|| bad("properties must be an object"))?;
        for parameter in self.required() {
            if !properties.contains_key(parameter) {
                return Err(ToolError::UndeclaredRequired { name: self.name.clone(), parameter: parameter.to_string() });
            }
        }
        Ok(())
    }

    /// Required-field and type checks against the declared schema.
    pub fn validate(&self, arguments: &Arguments) -> Result<(), String> {
        for parameter in self.required() {
            if !arguments.contains_key(parameter) {
                return Err(format!("missing required argument \"{parameter}\""));
            }
        }
        let Some(properties) = self.properties() else { return Ok(()) };
        for (key, value) in arguments {
            let Some(expected) = properties.get(key).and_then(|p| p.get("type")).and_then(Value::as_str) else {
                continue;
            };
            let ok = match expected {
                "string" => value.is_string(),
                "number" => value.is_number(),
                "integer" => value.is_i64() || value.is_u64(),
                "boolean" => value.is_boolean(),
                "object" => value.is_object(),
                "array" => value.is_array(),
                "null" => value.is_null(),
                _ => true,
            };
            if !ok {
                return Err(format!("argument \"{key}\" must be of type {expected}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolResult {
    pub tool_call_id: String,
    pub content: String,
    pub is_error: bool,
}

impl ToolResult {
    fn ok(id: &str, content: String) -> Self {
        let content = if content.trim().is_empty() { "(no output)".to_string() } else { content };
        ToolResult { tool_call_id: id.to_string(), content, is_error: false }
    }

    fn error(id: &str, message: impl Into<String>) -> Self {
        let message = message.into();
        let content = if message.trim().is_empty() { "tool failed".to_string() } else { message };
        ToolResult { tool_call_id: id.to_string(), content, is_error: true }
    }
}

/// Ordered set of uniquely named tools. Immutable after construction.
#[derive(Debug, Clone, Default)]
pub struct ToolRegistry {
    tools: Vec<ToolDefinition>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, tool: ToolDefinition) -> Result<(), ToolError> {
        if self.get(&tool.name).is_some() {
            return Err(ToolError::Duplicate(tool.name));
        }
        tool.check_schema()?;
        self.tools.push(tool);
        Ok(())
    }

    pub fn with(mut self, tool: ToolDefinition) -> Result<Self, ToolError> {
        self.register(tool)?;
        Ok(self)
    }

    pub fn get(&self, name: &str) -> Option<&ToolDefinition> {
        self.tools.iter().find(|t| t.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.tools.iter().map(|t| t.name.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    /// Tool schemas in registration order, ready for a completion request.
    pub fn schema_payload(&self) -> Vec<Value> {
        self.tools.iter().map(ToolDefinition::schema).collect()
    }

    /// Runs a model-requested call. Every failure, including a panicking
    /// handler, comes back as an `is_error` result.
    pub fn dispatch(&self, call: &ToolCallRequest) -> ToolResult {
        let Some(tool) = self.get(&call.name) else {
            return ToolResult::error(&call.id, format!("unknown tool {}", call.name));
        };
        let arguments = match serde_json::from_str::<Value>(&call.arguments) {
            Ok(Value::Object(map)) => map,
            Ok(_) => return ToolResult::error(&call.id, "arguments must be a JSON object"),
            Err(e) => return ToolResult::error(&call.id, format!("arguments are not valid JSON: {e}")),
        };
        if let Err(message) = tool.validate(&arguments) {
            return ToolResult::error(&call.id, format!("invalid arguments for {}: {message}", tool.name));
        }
        match catch_unwind(AssertUnwindSafe(|| (tool.handler)(&arguments))) {
            Ok(Ok(text)) => ToolResult::ok(&call.id, text),
            Ok(Err(message)) => ToolResult::error(&call.id, message),
            Err(panic) => {
                let detail = panic
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| panic.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "handler panicked".to_string());
                ToolResult::error(&call.id, format!("tool {} failed: {detail}", tool.name))
            }
        }
    }
}

/// Sorted-key, whitespace-free JSON text.
pub fn canonical_json(value: &Value) -> String {
    fn sort(value: &Value) -> Value {
        match value {
            Value::Object(map) => {
                let mut entries: Vec<(&String, &Value)> = map.iter().collect();
                entries.sort_by(|a, b| a.0.cmp(b.0));
                Value::Object(entries.into_iter().map(|(k, v)| (k.clone(), sort(v))).collect())
            }
            Value::Array(items) => Value::Array(items.iter().map(sort).collect()),
            other => other.clone(),
        }
    }
    sort(value).to_string()
}
