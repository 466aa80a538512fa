//! OpenAI-compatible HTTP backend (`/chat/completions`, `/embeddings`).

use std::time::Duration;

use reqwest::blocking::Client;
use serde::Deserialize;
use serde_json::json;
use tracing::{debug, warn};

use super::{Backend, CompletionRequest, EmbeddingRequest, GatewayError};

pub const API_KEY_ENV: &str = "SCORE_API_KEY";

/// Exponential backoff: `initial * factor^attempt` between attempts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub factor: u32,
}

impl RetryPolicy {
    pub fn new(max_retries: u32) -> Self {
        RetryPolicy {
            max_retries,
            initial_backoff: Duration::from_millis(500),
            factor: 2,
        }
    }

    pub fn delay(&self, attempt: u32) -> Duration {
        self.initial_backoff * self.factor.saturating_pow(attempt)
    }
}

pub struct RemoteBackend {
    base_url: String,
    client: Client,
    retry: RetryPolicy,
    api_key: Option<String>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

impl RemoteBackend {
    pub fn new(base_url: &str, timeout: Duration, retry: RetryPolicy) -> Result<Self, GatewayError> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(RemoteBackend {
            base_url: base_url.trim_end_matches('/').to_string(),
            client,
            retry,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        })
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    fn post(&self, path: &str, body: &serde_json::Value) -> Result<String, GatewayError> {
        let url = format!("{}{path}", self.base_url);
        let mut attempt = 0;
        loop {
            let mut req = self.client.post(&url).json(body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let retryable_error = match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp.text().map_err(|e| GatewayError::Transport {
                        attempts: attempt + 1,
                        message: e.to_string(),
                    })?;
                    if status.is_success() {
                        return Ok(text);
                    }
                    if status.as_u16() != 429 && !status.is_server_error() {
                        return Err(GatewayError::Http {
                            status: status.as_u16(),
                            body: text,
                        });
                    }
                    format!("HTTP {status}: {text}")
                }
                Err(e) => e.to_string(),
            };
            if attempt >= self.retry.max_retries {
                return Err(GatewayError::Transport {
                    attempts: attempt + 1,
                    message: retryable_error,
                });
            }
            let delay = self.retry.delay(attempt);
            warn!(%url, attempt, ?delay, error = %retryable_error, "retrying request");
            std::thread::sleep(delay);
            attempt += 1;
        }
    }
}

impl Backend for RemoteBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        let body = json!({
            "model": request.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        debug!(task = request.task.as_str(), "chat completion");
        let text = self.post("/chat/completions", &body)?;
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| GatewayError::Protocol(format!("{e}: {text}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| GatewayError::Protocol("response has no message content".into()))
    }

    fn embed(&self, request: &EmbeddingRequest) -> Result<Vec<Vec<f64>>, GatewayError> {
        let body = json!({ "model": request.model, "input": request.texts });
        let text = self.post("/embeddings", &body)?;
        let parsed: EmbeddingResponse =
            serde_json::from_str(&text).map_err(|e| GatewayError::Protocol(format!("{e}: {text}")))?;
        let mut data = parsed.data;
        if data.iter().all(|d| d.index.is_some()) {
            data.sort_by_key(|d| d.index);
        }
        Ok(data.into_iter().map(|d| d.embedding).collect())
    }
}
