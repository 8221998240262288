//! Completion backends and prompt construction.

mod http;
mod prompt;
mod scripted;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpBackend, HttpConfig, API_KEY_ENV, BASE_URL_ENV, MODEL_ENV};
pub use prompt::{
    build_prompt, catalog_listing, race_notes, summary_request, PromptError, PromptTemplate, DEFAULT_MAX_TOKENS,
    DEFAULT_TEMPERATURE,
};
pub use scripted::{condense, drop_zero_counts, ScriptedBackend, ScriptedStyle, UNCHANGED_LINE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

/// One chat-completions call. The first message is always the system prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Per-attempt timeout in seconds.
    pub timeout_secs: u64,
    /// Extra attempts after the first.
    pub retries: u32,
}

impl ChatRequest {
    pub fn system(&self) -> &str {
        self.messages.iter().find(|m| m.role == Role::System).map(|m| m.content.as_str()).unwrap_or("")
    }

    pub fn user(&self) -> &str {
        self.messages.iter().rev().find(|m| m.role == Role::User).map(|m| m.content.as_str()).unwrap_or("")
    }

    /// The JSON body sent over the wire.
    pub fn wire_body(&self) -> serde_json::Value {
        serde_json::json!({
            "model": self.model,
            "messages": self.messages,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum InferenceError {
    #[error("request failed after {attempts} attempts (last status {status:?}): {message}")]
    Http { status: Option<u16>, attempts: u32, message: String },
    #[error("malformed completion response: {0}")]
    Parse(String),
    #[error("backend unavailable: {0}")]
    Unavailable(String),
}

/// Anything able to answer a chat request with completion text.
pub trait Backend: Send {
    fn complete(&mut self, req: &ChatRequest) -> Result<String, InferenceError>;

    /// Short description for record headers.
    fn describe(&self) -> String;
}

impl Backend for Box<dyn Backend> {
    fn complete(&mut self, req: &ChatRequest) -> Result<String, InferenceError> {
        (**self).complete(req)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}
