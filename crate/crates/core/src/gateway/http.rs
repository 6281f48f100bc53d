use std::time::Duration;

use serde::Deserialize;

use super::{ChatMessage, CompletionRequest, ExchangeLog, GatewayError, LlmBackend};

pub const ENV_API_KEY: &str = "CA_API_KEY";
pub const ENV_API_BASE: &str = "CA_API_BASE";
pub const ENV_MODEL: &str = "CA_MODEL";

/// Exponential backoff for transport failures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, base_delay: Duration::from_secs(1), factor: 2 }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based).
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay * self.factor.saturating_pow(retry.saturating_sub(1))
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub api_base: String,
    pub api_key: Option<String>,
    pub path: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl HttpConfig {
    pub fn new(api_base: impl Into<String>, api_key: Option<String>) -> Self {
        HttpConfig {
            api_base: api_base.into().trim_end_matches('/').to_string(),
            api_key,
            path: "/chat/completions".to_string(),
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
        }
    }

    /// Reads `CA_API_BASE` and `CA_API_KEY`.
    pub fn from_env() -> Result<Self, GatewayError> {
        let base = std::env::var(ENV_API_BASE)
            .map_err(|_| GatewayError::Config(format!("{ENV_API_BASE} is not set")))?;
        Ok(HttpConfig::new(base, std::env::var(ENV_API_KEY).ok()))
    }

    pub fn endpoint(&self) -> String {
        format!("{}{}", self.api_base, self.path)
    }
}

/// Live OpenAI-compatible chat-completions client.
pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    log: ExchangeLog,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

enum AttemptError {
    Retryable(String),
    Fatal(GatewayError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .unwrap_or_else(|_| reqwest::blocking::Client::new());
        HttpBackend { config, client, log: ExchangeLog::new() }
    }

    pub fn with_log(mut self, log: ExchangeLog) -> Self {
        self.log = log;
        self
    }

    pub fn log(&self) -> &ExchangeLog {
        &self.log
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn attempt(&self, body: &str) -> Result<(String, ChatMessage), AttemptError> {
        let mut builder = self
            .client
            .post(self.config.endpoint())
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_string());
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| AttemptError::Retryable(e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| AttemptError::Retryable(e.to_string()))?;
        if status.is_client_error() {
            return Err(AttemptError::Fatal(GatewayError::Rejected {
                status: status.as_u16(),
                message: provider_message(&text),
            }));
        }
        if !status.is_success() {
            return Err(AttemptError::Retryable(format!("HTTP {}: {}", status.as_u16(), provider_message(&text))));
        }
        let parsed: CompletionResponse = serde_json::from_str(&text)
            .map_err(|e| AttemptError::Fatal(GatewayError::MalformedResponse(e.to_string())))?;
        let message = parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message)
            .ok_or_else(|| AttemptError::Fatal(GatewayError::MalformedResponse("no choices in response".into())))?;
        Ok((text, message))
    }
}

fn provider_message(body: &str) -> String {
    serde_json::from_str::<serde_json::Value>(body)
        .ok()
        .and_then(|v| v.pointer("/error/message").and_then(|m| m.as_str()).map(str::to_string))
        .unwrap_or_else(|| body.trim().to_string())
}

impl LlmBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<ChatMessage, GatewayError> {
        let body = serde_json::to_string(request)?;
        let policy = self.config.retry;
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body) {
                Ok((raw, message)) => {
                    self.log.push(body, raw);
                    return Ok(message);
                }
                Err(AttemptError::Fatal(err)) => return Err(err),
                Err(AttemptError::Retryable(message)) => {
                    if attempts >= policy.max_attempts {
                        return Err(GatewayError::Transport { attempts, message });
                    }
                    log::warn!("chat completion attempt {attempts} failed: {message}; retrying");
                    std::thread::sleep(policy.delay(attempts));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_backoff_schedule() {
        let policy = RetryPolicy::default();
        assert_eq!(policy.max_attempts, 3);
        assert_eq!(policy.delay(1), Duration::from_secs(1));
        assert_eq!(policy.delay(2), Duration::from_secs(2));
        assert_eq!(policy.delay(3), Duration::from_secs(4));
    }

    #[test]
    fn provider_message_extraction() {
        assert_eq!(provider_message(r#"{"error":{"message":"bad key"}}"#), "bad key");
        assert_eq!(provider_message("plain text "), "plain text");
    }

    #[test]
    fn endpoint_joins_path() {
        let cfg = HttpConfig::new("http://localhost:8080/v1/", None);
        assert_eq!(cfg.endpoint(), "http://localhost:8080/v1/chat/completions");
    }
}
