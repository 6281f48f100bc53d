//! Chat-completion wire types, request fingerprinting and the backend trait.
//!
//! Backends speak the OpenAI-compatible chat-completions dialect. Three
//! implementations ship here: [`HttpBackend`] for live endpoints,
//! [`ReplayBackend`] for deterministic offline runs from a cassette, and
//! [`RecordingBackend`] which wraps another backend and captures a cassette.

mod cassette;
mod http;

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub use crate::error::GatewayError;
pub use cassette::{Cassette, CassetteEntry, RecordingBackend, ReplayBackend, ReplayOrder};
pub use http::{HttpBackend, HttpConfig, RetryPolicy, ENV_API_BASE, ENV_API_KEY, ENV_MODEL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        }
    }
}

/// A function call requested by the model. `arguments` is JSON text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "WireToolCall", from = "WireToolCall")]
pub struct ToolCallRequest {
    pub id: String,
    pub name: String,
    pub arguments: String,
}

impl ToolCallRequest {
    pub fn new(id: impl Into<String>, name: impl Into<String>, arguments: impl Into<String>) -> Self {
        ToolCallRequest { id: id.into(), name: name.into(), arguments: arguments.into() }
    }

    pub fn arguments_object(&self) -> Option<serde_json::Map<String, Value>> {
        match serde_json::from_str(&self.arguments) {
            Ok(Value::Object(map)) => Some(map),
            _ => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct WireToolCall {
    id: String,
    #[serde(rename = "type", default = "function_type")]
    kind: String,
    function: WireFunction,
}

#[derive(Serialize, Deserialize)]
struct WireFunction {
    name: String,
    #[serde(default)]
    arguments: String,
}

fn function_type() -> String {
    "function".to_string()
}

impl From<ToolCallRequest> for WireToolCall {
    fn from(call: ToolCallRequest) -> Self {
        WireToolCall {
            id: call.id,
            kind: function_type(),
            function: WireFunction { name: call.name, arguments: call.arguments },
        }
    }
}

impl From<WireToolCall> for ToolCallRequest {
    fn from(wire: WireToolCall) -> Self {
        ToolCallRequest { id: wire.id, name: wire.function.name, arguments: wire.function.arguments }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "WireMessage", try_from = "WireMessage")]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    pub tool_calls: Vec<ToolCallRequest>,
    pub tool_call_id: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct WireMessage {
    role: Role,
    #[serde(default)]
    content: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    tool_calls: Vec<ToolCallRequest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tool_call_id: Option<String>,
}

impl From<ChatMessage> for WireMessage {
    fn from(msg: ChatMessage) -> Self {
        let content = if msg.content.is_empty() && !msg.tool_calls.is_empty() { None } else { Some(msg.content) };
        WireMessage { role: msg.role, content, tool_calls: msg.tool_calls, tool_call_id: msg.tool_call_id }
    }
}

impl TryFrom<WireMessage> for ChatMessage {
    type Error = GatewayError;

    fn try_from(wire: WireMessage) -> Result<Self, Self::Error> {
        let msg = ChatMessage {
            role: wire.role,
            content: wire.content.unwrap_or_default(),
            tool_calls: wire.tool_calls,
            tool_call_id: wire.tool_call_id,
        };
        msg.validate()?;
        Ok(msg)
    }
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::plain(Role::Assistant, content)
    }

    pub fn assistant_with_calls(content: impl Into<String>, tool_calls: Vec<ToolCallRequest>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into(), tool_calls, tool_call_id: None }
    }

    pub fn tool(tool_call_id: impl Into<String>, content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Tool, content: content.into(), tool_calls: Vec::new(), tool_call_id: Some(tool_call_id.into()) }
    }

    fn plain(role: Role, content: impl Into<String>) -> Self {
        ChatMessage { role, content: content.into(), tool_calls: Vec::new(), tool_call_id: None }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        match (self.role, &self.tool_call_id) {
            (Role::Tool, None) => return Err(GatewayError::InvalidRequest("tool message without tool_call_id".into())),
            (Role::Tool, Some(_)) => {}
            (role, Some(_)) => {
                return Err(GatewayError::InvalidRequest(format!("{} message carries a tool_call_id", role.as_str())))
            }
            (_, None) => {}
        }
        if !self.tool_calls.is_empty() && self.role != Role::Assistant {
            return Err(GatewayError::InvalidRequest(format!("{} message carries tool calls", self.role.as_str())));
        }
        Ok(())
    }
}

/// Default sampling temperature for every agent.
pub const DEFAULT_TEMPERATURE: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tools: Option<Vec<Value>>,
    #[serde(default)]
    pub temperature: f64,
}

impl CompletionRequest {
    pub fn new(model: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        CompletionRequest { model: model.into(), messages, tools: None, temperature: DEFAULT_TEMPERATURE }
    }

    pub fn with_tools(mut self, tools: Vec<Value>) -> Self {
        self.tools = if tools.is_empty() { None } else { Some(tools) };
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let first = self
            .messages
            .first()
            .ok_or_else(|| GatewayError::InvalidRequest("messages must not be empty".into()))?;
        if !matches!(first.role, Role::System | Role::User) {
            return Err(GatewayError::InvalidRequest("first message must be system or user".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        self.messages.iter().try_for_each(ChatMessage::validate)
    }

    /// Names of the tools offered to the model, in offer order.
    pub fn tool_names(&self) -> Vec<&str> {
        self.tools
            .iter()
            .flatten()
            .filter_map(|tool| tool.pointer("/function/name").and_then(Value::as_str))
            .collect()
    }
}

/// SHA-256 digest (hex) over model, message roles and contents (including
/// any tool calls the assistant made) and offered tool names. Endpoint and
/// credentials never enter a request, so they cannot affect it.
pub fn fingerprint(request: &CompletionRequest) -> String {
    fn field(hasher: &mut Sha256, tag: u8, bytes: &[u8]) {
        hasher.update([tag]);
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(bytes);
    }

    let mut hasher = Sha256::new();
    field(&mut hasher, b'M', request.model.as_bytes());
    for message in &request.messages {
        field(&mut hasher, b'R', message.role.as_str().as_bytes());
        field(&mut hasher, b'C', message.content.as_bytes());
        for call in &message.tool_calls {
            field(&mut hasher, b'F', call.name.as_bytes());
            field(&mut hasher, b'A', call.arguments.as_bytes());
        }
    }
    for name in request.tool_names() {
        field(&mut hasher, b'T', name.as_bytes());
    }
    hex::encode(hasher.finalize())
}

/// One raw request/response exchange as seen on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawExchange {
    pub request: String,
    pub response: String,
}

/// Append-only log of raw exchanges, shareable across threads. Each
/// exchange is pushed under a single lock acquisition.
#[derive(Debug, Clone, Default)]
pub struct ExchangeLog(Arc<Mutex<Vec<RawExchange>>>);

impl ExchangeLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, request: String, response: String) {
        self.0.lock().unwrap_or_else(|p| p.into_inner()).push(RawExchange { request, response });
    }

    pub fn entries(&self) -> Vec<RawExchange> {
        self.0.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn len(&self) -> usize {
        self.0.lock().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub trait LlmBackend: Send + Sync {
    /// Returns the assistant reply for `request`.
    fn complete(&self, request: &CompletionRequest) -> Result<ChatMessage, GatewayError>;
}

impl<B: LlmBackend + ?Sized> LlmBackend for Arc<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<ChatMessage, GatewayError> {
        (**self).complete(request)
    }
}

impl<B: LlmBackend + ?Sized> LlmBackend for &B {
    fn complete(&self, request: &CompletionRequest) -> Result<ChatMessage, GatewayError> {
        (**self).complete(request)
    }
}

/// Validates the request, sends it, and checks the reply is a well-formed assistant message.
pub fn complete(backend: &dyn LlmBackend, request: &CompletionRequest) -> Result<ChatMessage, GatewayError> {
    request.validate()?;
    let reply = backend.complete(request)?;
    if reply.role != Role::Assistant {
        return Err(GatewayError::MalformedResponse(format!("expected assistant reply, got {}", reply.role.as_str())));
    }
    reply.validate()?;
    for call in &reply.tool_calls {
        if call.arguments_object().is_none() {
            log::warn!("tool call {} ({}) arguments are not a JSON object", call.id, call.name);
        }
    }
    Ok(reply)
}

/// Backend driven by a closure; handy for scripted tests.
pub struct FnBackend<F>(pub F);

impl<F> LlmBackend for FnBackend<F>
where
    F: Fn(&CompletionRequest) -> Result<ChatMessage, GatewayError> + Send + Sync,
{
    fn complete(&self, request: &CompletionRequest) -> Result<ChatMessage, GatewayError> {
        (self.0)(request)
    }
}

/// Answers every request with the same assistant text.
#[derive(Debug, Clone)]
pub struct StaticBackend {
    pub reply: String,
}

impl StaticBackend {
    pub fn new(reply: impl Into<String>) -> Self {
        StaticBackend { reply: reply.into() }
    }
}

impl LlmBackend for StaticBackend {
    fn complete(&self, _request: &CompletionRequest) -> Result<ChatMessage, GatewayError> {
        Ok(ChatMessage::assistant(self.reply.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn request(text: &str) -> CompletionRequest {
        CompletionRequest::new("gpt-test", vec![ChatMessage::system("sys"), ChatMessage::user(text)])
    }

    #[test]
    fn tool_call_wire_shape() {
        let msg = ChatMessage::assistant_with_calls(
            "",
            vec![ToolCallRequest::new("call_1", "retrieval_drugbank", r#"{"drug_name":"Aggrenox capsule"}"#)],
        );
        let wire = serde_json::to_value(&msg).unwrap();
        assert_eq!(
            wire,
            json!({
                "role": "assistant",
                "content": null,
                "tool_calls": [{
                    "id": "call_1",
                    "type": "function",
                    "function": {"name": "retrieval_drugbank", "arguments": "{\"drug_name\":\"Aggrenox capsule\"}"}
                }]
            })
        );
        let back: ChatMessage = serde_json::from_value(wire).unwrap();
        assert_eq!(back, msg);
        assert_eq!(back.tool_calls[0].arguments_object().unwrap()["drug_name"], "Aggrenox capsule");
    }

    #[test]
    fn message_invariants() {
        assert!(ChatMessage::tool("id", "x").validate().is_ok());
        let mut bad = ChatMessage::user("x");
        bad.tool_call_id = Some("id".into());
        assert!(bad.validate().is_err());
        let mut bad = ChatMessage::tool("id", "x");
        bad.tool_call_id = None;
        assert!(bad.validate().is_err());
        let mut bad = ChatMessage::user("x");
        bad.tool_calls.push(ToolCallRequest::new("a", "b", "{}"));
        assert!(bad.validate().is_err());
        let wire = json!({"role": "tool", "content": "x"});
        assert!(serde_json::from_value::<ChatMessage>(wire).is_err());
    }

    #[test]
    fn request_invariants() {
        let empty = CompletionRequest::new("m", vec![]);
        assert!(empty.validate().is_err());
        let starts_with_assistant = CompletionRequest::new("m", vec![ChatMessage::assistant("hi")]);
        assert!(starts_with_assistant.validate().is_err());
        let mut hot = request("x");
        hot.temperature = 2.5;
        assert!(hot.validate().is_err());
        assert!(request("x").validate().is_ok());
    }

    #[test]
    fn fingerprint_determinism_and_sensitivity() {
        assert_eq!(fingerprint(&request("hello")), fingerprint(&request("hello")));
        assert_ne!(fingerprint(&request("hello")), fingerprint(&request("hellp")));
        let mut other_model = request("hello");
        other_model.model = "other".into();
        assert_ne!(fingerprint(&request("hello")), fingerprint(&other_model));
        let with_tool = request("hello").with_tools(vec![json!({"type":"function","function":{"name":"t"}})]);
        assert_ne!(fingerprint(&request("hello")), fingerprint(&with_tool));
        // role boundaries are framed, so moving text between messages changes the digest
        let a = CompletionRequest::new("m", vec![ChatMessage::system("ab"), ChatMessage::user("c")]);
        let b = CompletionRequest::new("m", vec![ChatMessage::system("a"), ChatMessage::user("bc")]);
        assert_ne!(fingerprint(&a), fingerprint(&b));
    }

    #[test]
    fn fingerprint_ignores_credentials() {
        // credentials live in HttpConfig, never in the request, so two
        // differently configured backends record the same digest
        let req = request("same");
        let rec_a = RecordingBackend::new(StaticBackend::new("a"));
        let rec_b = RecordingBackend::new(StaticBackend::new("b"));
        complete(&rec_a, &req).unwrap();
        complete(&rec_b, &req).unwrap();
        assert_eq!(rec_a.cassette().entries[0].fingerprint, rec_b.cassette().entries[0].fingerprint);
    }

    #[test]
    fn complete_does_not_mutate_request() {
        let backend = StaticBackend::new("ok");
        let req = request("x");
        let before = req.clone();
        let reply = complete(&backend, &req).unwrap();
        assert_eq!(reply.content, "ok");
        assert_eq!(req, before);
    }

    #[test]
    fn complete_rejects_non_assistant_reply() {
        let backend = FnBackend(|_: &CompletionRequest| Ok(ChatMessage::user("nope")));
        assert!(matches!(complete(&backend, &request("x")), Err(GatewayError::MalformedResponse(_))));
    }
}
