//! Language model backends. Every backend is total: failures come back as
//! empty text, which sends the controller down the rule path.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::session::{sha256_hex, ChatMessage};

pub trait LlmBackend: Send + Sync {
    fn complete(&self, prompt: &str, history: &[ChatMessage]) -> String;

    /// True for the backend that never answers.
    fn is_null(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NullLlm;

impl LlmBackend for NullLlm {
    fn complete(&self, _: &str, _: &[ChatMessage]) -> String {
        String::new()
    }

    fn is_null(&self) -> bool {
        true
    }
}

/// Canned completions keyed by the SHA-256 hex digest of the prompt.
#[derive(Debug, Clone, Default)]
pub struct ScriptedLlm {
    pub completions: HashMap<String, String>,
}

impl ScriptedLlm {
    pub fn from_file(path: &Path) -> Result<Self, String> {
        let raw = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let completions = serde_json::from_slice(&raw).map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(Self { completions })
    }

    pub fn key(prompt: &str) -> String {
        sha256_hex(prompt.as_bytes())
    }

    pub fn with(mut self, prompt: &str, completion: &str) -> Self {
        self.completions.insert(Self::key(prompt), completion.to_string());
        self
    }
}

impl LlmBackend for ScriptedLlm {
    fn complete(&self, prompt: &str, _: &[ChatMessage]) -> String {
        self.completions.get(&Self::key(prompt)).cloned().unwrap_or_default()
    }
}

/// OpenAI-style chat completion endpoint.
#[derive(Debug, Clone)]
pub struct HttpLlm {
    pub url: String,
    pub model: String,
    pub token: Option<String>,
    pub timeout: Duration,
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

impl HttpLlm {
    fn try_complete(&self, prompt: &str, history: &[ChatMessage]) -> Result<String, reqwest::Error> {
        let mut messages: Vec<ChatMessage> = history.to_vec();
        messages.push(ChatMessage::new("user", prompt));
        let client = reqwest::blocking::Client::builder().timeout(self.timeout).build()?;
        let mut req = client.post(&self.url).json(&json!({ "model": self.model, "messages": messages }));
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let body: Completion = req.send()?.error_for_status()?.json()?;
        Ok(body.choices.into_iter().next().map(|c| c.message.content).unwrap_or_default())
    }
}

impl LlmBackend for HttpLlm {
    fn complete(&self, prompt: &str, history: &[ChatMessage]) -> String {
        self.try_complete(prompt, history).unwrap_or_default()
    }
}

/// Builds a backend from `null`, `scripted:<path>` or `http:<url>`.
/// Relative scripted paths resolve against `base_dir`.
pub fn backend_from_spec(
    spec: &str,
    base_dir: &Path,
    model: &str,
    token: Option<String>,
    timeout: Duration,
) -> Result<Arc<dyn LlmBackend>, String> {
    let spec = spec.trim();
    if spec.is_empty() || spec == "null" {
        return Ok(Arc::new(NullLlm));
    }
    if let Some(path) = spec.strip_prefix("scripted:") {
        return Ok(Arc::new(ScriptedLlm::from_file(&base_dir.join(path))?));
    }
    if let Some(url) = spec.strip_prefix("http:") {
        let url = if url.starts_with("//") { format!("http:{url}") } else { url.to_string() };
        return Ok(Arc::new(HttpLlm { url, model: model.to_string(), token, timeout }));
    }
    Err(format!("unknown llm backend `{spec}`; expected null, scripted:<path> or http:<url>"))
}
