use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{fingerprint, ChatMessage, CompletionRequest, ExchangeLog, GatewayError, LlmBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub request: CompletionRequest,
    pub response: ChatMessage,
}

/// Ordered request/response pairs. On disk: a JSON array of entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cassette {
    pub entries: Vec<CassetteEntry>,
}

impl Cassette {
    pub fn from_json(text: &str) -> Result<Self, GatewayError> {
        Ok(Cassette { entries: serde_json::from_str(text)? })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String, GatewayError> {
        let mut text = serde_json::to_string_pretty(&self.entries)?;
        text.push('\n');
        Ok(text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GatewayError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// How replay pairs incoming requests with cassette entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReplayOrder {
    /// The next unconsumed entry must match the request.
    Sequential,
    /// The earliest unconsumed entry with the request's fingerprint is used.
    /// Requests with the same digest still replay in recorded order, but
    /// independent conversations may interleave freely.
    #[default]
    PerFingerprint,
}

#[derive(Debug)]
pub struct ReplayBackend {
    entries: Vec<CassetteEntry>,
    consumed: Mutex<Vec<bool>>,
    order: ReplayOrder,
    log: ExchangeLog,
}

impl ReplayBackend {
    pub fn new(cassette: Cassette) -> Self {
        let consumed = vec![false; cassette.entries.len()];
        ReplayBackend { entries: cassette.entries, consumed: Mutex::new(consumed), order: ReplayOrder::default(), log: ExchangeLog::new() }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        Ok(Self::new(Cassette::load(path)?))
    }

    pub fn with_order(mut self, order: ReplayOrder) -> Self {
        self.order = order;
        self
    }

    pub fn with_log(mut self, log: ExchangeLog) -> Self {
        self.log = log;
        self
    }

    pub fn remaining(&self) -> usize {
        self.consumed.lock().unwrap_or_else(|p| p.into_inner()).iter().filter(|c| !**c).count()
    }
}

impl LlmBackend for ReplayBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<ChatMessage, GatewayError> {
        let actual = fingerprint(request);
        let mut consumed = self.consumed.lock().unwrap_or_else(|p| p.into_inner());
        let Some(next) = consumed.iter().position(|c| !c) else {
            return Err(GatewayError::ReplayExhausted { position: consumed.len(), actual });
        };
        let chosen = match self.order {
            ReplayOrder::Sequential => (self.entries[next].fingerprint == actual).then_some(next),
            ReplayOrder::PerFingerprint => {
                (next..self.entries.len()).find(|&i| !consumed[i] && self.entries[i].fingerprint == actual)
            }
        };
        let Some(index) = chosen else {
            return Err(GatewayError::ReplayMismatch {
                position: next,
                expected: self.entries[next].fingerprint.clone(),
                actual,
            });
        };
        consumed[index] = true;
        let entry = &self.entries[index];
        self.log.push(serde_json::to_string(request)?, serde_json::to_string(&entry.response)?);
        Ok(entry.response.clone())
    }
}

/// Forwards to `inner` and appends every successful exchange to a cassette.
pub struct RecordingBackend<B> {
    inner: B,
    entries: Mutex<Vec<CassetteEntry>>,
}

impl<B: LlmBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend { inner, entries: Mutex::new(Vec::new()) }
    }

    pub fn cassette(&self) -> Cassette {
        Cassette { entries: self.entries.lock().unwrap_or_else(|p| p.into_inner()).clone() }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GatewayError> {
        self.cassette().save(path)
    }
}

impl<B: LlmBackend> LlmBackend for RecordingBackend<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<ChatMessage, GatewayError> {
        let response = self.inner.complete(request)?;
        let entry = CassetteEntry { fingerprint: fingerprint(request), request: request.clone(), response: response.clone() };
        self.entries.lock().unwrap_or_else(|p| p.into_inner()).push(entry);
        Ok(response)
    }
}
