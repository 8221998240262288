//! Chat-completions HTTP client with retry and backoff.

use std::fmt;
use std::time::Duration;

use sha2::{Digest, Sha256};

use super::{Backend, ChatRequest, InferenceError};

pub const API_KEY_ENV: &str = "TEXTCRAFT_API_KEY";
pub const BASE_URL_ENV: &str = "TEXTCRAFT_BASE_URL";
pub const MODEL_ENV: &str = "TEXTCRAFT_MODEL";

#[derive(Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    /// First retry delay; each later retry doubles it.
    pub backoff_base: Duration,
}

impl fmt::Debug for HttpConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpConfig")
            .field("base_url", &self.base_url)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("backoff_base", &self.backoff_base)
            .finish()
    }
}

impl HttpConfig {
    /// Reads the endpoint from the environment; explicit values take precedence.
    pub fn from_env(base_url: Option<String>, model: Option<String>) -> Result<HttpConfig, InferenceError> {
        let base_url = base_url
            .or_else(|| std::env::var(BASE_URL_ENV).ok())
            .ok_or_else(|| InferenceError::Unavailable(format!("no endpoint: set {BASE_URL_ENV}")))?;
        let model = model.or_else(|| std::env::var(MODEL_ENV).ok()).unwrap_or_else(|| "default".into());
        Ok(HttpConfig {
            base_url,
            model,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            backoff_base: Duration::from_secs(1),
        })
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

enum Attempt {
    Done(String),
    Retry(Option<u16>, String),
    Fatal(InferenceError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<HttpBackend, InferenceError> {
        let client =
            reqwest::blocking::Client::builder().build().map_err(|e| InferenceError::Unavailable(e.to_string()))?;
        Ok(HttpBackend { config, client })
    }

    pub fn endpoint(&self) -> String {
        format!("{}/v1/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, req: &ChatRequest, body: &[u8]) -> Attempt {
        let mut builder = self
            .client
            .post(self.endpoint())
            .timeout(Duration::from_secs(req.timeout_secs.max(1)))
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_vec());
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let resp = match builder.send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() || e.is_connect() || e.is_request() => return Attempt::Retry(None, e.to_string()),
            Err(e) => return Attempt::Fatal(InferenceError::Unavailable(e.to_string())),
        };
        let status = resp.status();
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(Some(status.as_u16()), e.to_string()),
        };
        tracing::debug!(status = status.as_u16(), response = %digest(text.as_bytes()), "completion response");
        if status.as_u16() == 429 || status.is_server_error() {
            return Attempt::Retry(Some(status.as_u16()), format!("status {status}"));
        }
        if !status.is_success() {
            return Attempt::Fatal(InferenceError::Http {
                status: Some(status.as_u16()),
                attempts: 0,
                message: format!("status {status}"),
            });
        }
        match parse_completion(&text) {
            Ok(content) => Attempt::Done(content),
            Err(e) => Attempt::Fatal(e),
        }
    }
}

/// Pulls the first choice's message content out of a chat-completions response body.
pub fn parse_completion(body: &str) -> Result<String, InferenceError> {
    let v: serde_json::Value = serde_json::from_str(body).map_err(|e| InferenceError::Parse(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| InferenceError::Parse("missing choices[0].message.content".into()))
}

impl Backend for HttpBackend {
    fn complete(&mut self, req: &ChatRequest) -> Result<String, InferenceError> {
        let mut wire = req.wire_body();
        if req.model.is_empty() {
            wire["model"] = serde_json::Value::String(self.config.model.clone());
        }
        let body = serde_json::to_vec(&wire).map_err(|e| InferenceError::Parse(e.to_string()))?;
        tracing::debug!(request = %digest(&body), endpoint = %self.endpoint(), "completion request");
        let budget = req.retries + 1;
        let mut last = (None, String::new());
        for attempt in 1..=budget {
            match self.attempt(req, &body) {
                Attempt::Done(content) => return Ok(content),
                Attempt::Fatal(InferenceError::Http { status, message, .. }) => {
                    return Err(InferenceError::Http { status, attempts: attempt, message })
                }
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(status, message) => {
                    tracing::warn!(attempt, ?status, "completion attempt failed");
                    last = (status, message);
                    if attempt < budget {
                        std::thread::sleep(self.config.backoff_base * 2u32.pow(attempt - 1));
                    }
                }
            }
        }
        Err(InferenceError::Http { status: last.0, attempts: budget, message: last.1 })
    }

    fn describe(&self) -> String {
        format!("http:{}", self.config.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_first_choice() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"hi"}},{"message":{"content":"no"}}]}"#;
        assert_eq!(parse_completion(body).unwrap(), "hi");
        assert!(matches!(parse_completion("{}"), Err(InferenceError::Parse(_))));
        assert!(matches!(parse_completion("not json"), Err(InferenceError::Parse(_))));
    }

    #[test]
    fn debug_never_shows_key() {
        let cfg = HttpConfig {
            base_url: "http://x".into(),
            model: "m".into(),
            api_key: Some("sk-secret-value".into()),
            backoff_base: Duration::from_millis(1),
        };
        assert!(!format!("{cfg:?}").contains("sk-secret-value"));
    }
}
