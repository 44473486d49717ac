//! Minimal chat-completion client used by the optional LLM splitter and
//! label extractor.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use thiserror::Error;

use crate::config::LlmConfig;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("environment variable {0} with the API key is not set")]
    MissingKey(String),
    #[error("no LLM endpoint configured")]
    NoEndpoint,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unexpected response shape: {0}")]
    BadResponse(String),
}

pub trait ChatClient: Send + Sync {
    /// Model identifier, part of the extraction cache key.
    fn model_id(&self) -> &str;
    fn complete(&self, prompt: &str) -> Result<String, LlmError>;
}

/// OpenAI-compatible `chat/completions` client with deterministic sampling.
pub struct HttpChatClient {
    endpoint: String,
    model_id: String,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpChatClient {
    pub fn from_config(cfg: &LlmConfig) -> Result<Self, LlmError> {
        if cfg.endpoint.is_empty() {
            return Err(LlmError::NoEndpoint);
        }
        let api_key = std::env::var(&cfg.api_key_env)
            .map_err(|_| LlmError::MissingKey(cfg.api_key_env.clone()))?;
        Ok(HttpChatClient {
            endpoint: cfg.endpoint.clone(),
            model_id: cfg.model_id.clone(),
            api_key,
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(120)).build(),
        })
    }
}

impl ChatClient for HttpChatClient {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let body = serde_json::json!({
            "model": self.model_id,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        });
        let resp: serde_json::Value = self
            .agent
            .post(&self.endpoint)
            .set("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body)
            .map_err(|e| LlmError::Transport(e.to_string()))?
            .into_json()
            .map_err(|e| LlmError::BadResponse(e.to_string()))?;
        resp["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::BadResponse(resp.to_string()))
    }
}

/// Replays canned replies in order; for tests and offline dry runs.
pub struct ScriptedClient {
    replies: Mutex<VecDeque<Result<String, LlmError>>>,
    calls: Mutex<Vec<String>>,
}

impl ScriptedClient {
    pub fn new(replies: Vec<Result<String, LlmError>>) -> Self {
        ScriptedClient {
            replies: Mutex::new(replies.into()),
            calls: Mutex::new(Vec::new()),
        }
    }

    /// Prompts received so far.
    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().unwrap().clone()
    }
}

impl ChatClient for ScriptedClient {
    fn model_id(&self) -> &str {
        "scripted"
    }

    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        self.calls.lock().unwrap().push(prompt.to_string());
        self.replies
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(LlmError::Transport("script exhausted".into())))
    }
}
