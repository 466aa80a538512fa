//! Uniform access to completion, embedding and sentiment capabilities.
//!
//! Two backends exist: an OpenAI-compatible HTTP client and a deterministic
//! offline mock. Either can be wrapped by a content-addressed response cache
//! that records replies and later replays them without touching the backend.

mod cache;
mod limiter;
pub mod mock;
mod prompts;
pub mod remote;

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tracing::warn;

use crate::index::Embedding;

pub use cache::ResponseCache;
pub use limiter::{Limiter, Permit};
pub use mock::MockBackend;
pub use prompts::PromptSet;
pub use remote::{RemoteBackend, RetryPolicy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("upstream returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("uncached request {key} (replay mode performs no network calls)")]
    UncachedRequest { key: String },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("malformed upstream response: {0}")]
    Protocol(String),
    #[error("sentiment reply could not be parsed: {raw:?}")]
    Sentiment { raw: String },
    #[error("{task} reply invalid after repair: {message}")]
    Structured { task: String, message: String, raw: String },
    #[error("response cache: {0}")]
    Cache(String),
    #[error("prompt template: {0}")]
    Template(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Remote,
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    Off,
    Record,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub backend: BackendKind,
    pub base_url: String,
    pub model_name: String,
    /// Model used for embeddings; falls back to `model_name`.
    pub embed_model: Option<String>,
    /// Model used for sentiment scoring; falls back to `model_name`.
    pub sentiment_model: Option<String>,
    pub embed_dim: usize,
    pub embed_batch: usize,
    pub max_parallel: usize,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub cache_mode: CacheMode,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            backend: BackendKind::Mock,
            base_url: "http://localhost:8000/v1".into(),
            model_name: "mock-1".into(),
            embed_model: None,
            sentiment_model: None,
            embed_dim: 256,
            embed_batch: 64,
            max_parallel: 4,
            timeout_ms: 60_000,
            max_retries: 3,
            cache_mode: CacheMode::Off,
        }
    }
}

impl GatewayConfig {
    pub fn mock() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.embed_dim == 0 {
            return Err(GatewayError::Contract("embed_dim must be positive".into()));
        }
        if self.max_parallel == 0 {
            return Err(GatewayError::Contract("max_parallel must be positive".into()));
        }
        if self.embed_batch == 0 {
            return Err(GatewayError::Contract("embed_batch must be positive".into()));
        }
        Ok(())
    }

    fn embed_model(&self) -> &str {
        self.embed_model.as_deref().unwrap_or(&self.model_name)
    }

    fn sentiment_model(&self) -> &str {
        self.sentiment_model.as_deref().unwrap_or(&self.model_name)
    }
}

/// Emotional tone in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SentimentScore(f64);

impl SentimentScore {
    pub const NEUTRAL: SentimentScore = SentimentScore(0.5);

    pub fn new(value: f64) -> Option<Self> {
        (0.0..=1.0).contains(&value).then_some(SentimentScore(value))
    }

    /// Clamps into range; NaN is rejected.
    pub fn clamped(value: f64) -> Option<Self> {
        (!value.is_nan()).then(|| SentimentScore(value.clamp(0.0, 1.0)))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for SentimentScore {
    type Error = String;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        SentimentScore::new(v).ok_or_else(|| format!("sentiment {v} outside [0, 1]"))
    }
}

impl From<SentimentScore> for f64 {
    fn from(s: SentimentScore) -> f64 {
        s.0
    }
}

/// Kind of completion request. The remote backend only reads the prompt;
/// the mock backend dispatches on the task and its structured payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Freeform,
    Sentiment,
    ExtractStates,
    Summarize,
    Evaluate,
    Answer,
    Repair,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Freeform => "freeform",
            Task::Sentiment => "sentiment",
            Task::ExtractStates => "extract_states",
            Task::Summarize => "summarize",
            Task::Evaluate => "evaluate",
            Task::Answer => "answer",
            Task::Repair => "repair",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for CompletionParams {
    fn default() -> Self {
        CompletionParams {
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub task: Task,
    pub prompt: String,
    pub payload: Value,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRequest {
    pub model: String,
    pub dim: usize,
    pub texts: Vec<String>,
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError>;
    fn embed(&self, request: &EmbeddingRequest) -> Result<Vec<Vec<f64>>, GatewayError>;
}

pub struct LlmGateway {
    config: GatewayConfig,
    backend: Arc<dyn Backend>,
    cache: Option<ResponseCache>,
    limiter: Limiter,
    prompts: PromptSet,
}

impl LlmGateway {
    /// Builds the configured backend. `cache_dir` is required unless the
    /// cache mode is `off`.
    pub fn new(config: GatewayConfig, cache_dir: Option<&Path>) -> Result<Self, GatewayError> {
        let backend: Arc<dyn Backend> = match config.backend {
            BackendKind::Mock => Arc::new(MockBackend::new()),
            BackendKind::Remote => Arc::new(RemoteBackend::new(
                &config.base_url,
                Duration::from_millis(config.timeout_ms),
                RetryPolicy::new(config.max_retries),
            )?),
        };
        Self::with_backend(config, backend, cache_dir)
    }

    pub fn mock() -> Self {
        Self::new(GatewayConfig::mock(), None).expect("mock gateway")
    }

    pub fn with_backend(
        config: GatewayConfig,
        backend: Arc<dyn Backend>,
        cache_dir: Option<&Path>,
    ) -> Result<Self, GatewayError> {
        config.validate()?;
        let cache = match config.cache_mode {
            CacheMode::Off => None,
            CacheMode::Record | CacheMode::Replay => {
                let dir =
                    cache_dir.ok_or_else(|| GatewayError::Contract("cache mode requires a cache directory".into()))?;
                Some(ResponseCache::new(dir))
            }
        };
        Ok(LlmGateway {
            limiter: Limiter::new(config.max_parallel),
            config,
            backend,
            cache,
            prompts: PromptSet::default(),
        })
    }

    pub fn with_prompts(mut self, prompts: PromptSet) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn prompts(&self) -> &PromptSet {
        &self.prompts
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    /// Peak number of concurrent backend calls observed so far.
    pub fn peak_in_flight(&self) -> usize {
        self.limiter.peak()
    }

    /// Number of calls that reached the backend (cache hits excluded).
    pub fn upstream_calls(&self) -> usize {
        self.limiter.total()
    }

    /// Free-form completion.
    pub fn complete(&self, prompt: &str, params: CompletionParams) -> Result<String, GatewayError> {
        self.request(Task::Freeform, prompt, Value::Null, params)
    }

    /// Sends one completion request through the cache and limiter.
    pub fn request(
        &self,
        task: Task,
        prompt: &str,
        payload: Value,
        params: CompletionParams,
    ) -> Result<String, GatewayError> {
        if prompt.trim().is_empty() {
            return Err(GatewayError::Contract("prompt must not be empty".into()));
        }
        let model = match task {
            Task::Sentiment => self.config.sentiment_model(),
            _ => &self.config.model_name,
        };
        let request = CompletionRequest {
            model: model.to_string(),
            task,
            prompt: prompt.to_string(),
            payload,
            temperature: params.temperature,
            max_tokens: params.max_tokens,
        };
        let value = self.cached("complete", model, &request, || {
            let _permit = self.limiter.acquire();
            self.backend.complete(&request).map(Value::String)
        })?;
        match value {
            Value::String(s) => Ok(s),
            other => Err(GatewayError::Cache(format!(
                "cached completion is not a string: {other}"
            ))),
        }
    }

    /// Embeds one batch; the batch must not exceed `embed_batch`.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, GatewayError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        if texts.len() > self.config.embed_batch {
            return Err(GatewayError::Contract(format!(
                "embedding batch of {} exceeds limit {}",
                texts.len(),
                self.config.embed_batch
            )));
        }
        if let Some(pos) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(GatewayError::Contract(format!("embedding input {pos} is empty")));
        }
        let model = self.config.embed_model();
        let request = EmbeddingRequest {
            model: model.to_string(),
            dim: self.config.embed_dim,
            texts: texts.to_vec(),
        };
        let value = self.cached("embed", model, &request, || {
            let _permit = self.limiter.acquire();
            let vectors = self.backend.embed(&request)?;
            Ok(serde_json::to_value(vectors).expect("vectors encode"))
        })?;
        let vectors: Vec<Vec<f64>> = serde_json::from_value(value)
            .map_err(|e| GatewayError::Cache(format!("cached embeddings unreadable: {e}")))?;
        if vectors.len() != texts.len() {
            return Err(GatewayError::Protocol(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                vectors.len()
            )));
        }
        vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.config.embed_dim {
                    return Err(GatewayError::Protocol(format!(
                        "embedding dimension {} does not match configured {}",
                        v.len(),
                        self.config.embed_dim
                    )));
                }
                Embedding::new(v).map_err(|e| GatewayError::Protocol(e.to_string()))
            })
            .collect()
    }

    /// Embeds any number of texts in configured batch sizes.
    pub fn embed_all(&self, texts: &[String]) -> Result<Vec<Embedding>, GatewayError> {
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.config.embed_batch) {
            out.extend(self.embed(batch)?);
        }
        Ok(out)
    }

    pub fn score_sentiment(&self, text: &str) -> Result<SentimentScore, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::Contract("sentiment input is empty".into()));
        }
        let payload = serde_json::json!({ "text": text });
        let prompt = self.prompts.render("sentiment", &[("text", text)])?;
        let params = CompletionParams {
            temperature: 0.0,
            max_tokens: 8,
        };
        let reply = self.request(Task::Sentiment, &prompt, payload.clone(), params)?;
        if let Some(score) = parse_sentiment(&reply) {
            return Ok(score);
        }
        let retry = self
            .prompts
            .render("sentiment_retry", &[("text", text), ("reply", &reply)])?;
        let second = self.request(Task::Sentiment, &retry, payload, params)?;
        parse_sentiment(&second).ok_or(GatewayError::Sentiment { raw: second })
    }

    /// Renders `template`, requests a JSON reply, and parses it into `T`.
    /// An invalid reply triggers one repair reprompt before failing.
    pub fn structured<T, F>(
        &self,
        task: Task,
        template: &str,
        vars: &[(&str, &str)],
        payload: Value,
        validate: F,
    ) -> Result<T, GatewayError>
    where
        T: DeserializeOwned,
        F: Fn(&T) -> Result<(), String>,
    {
        let prompt = self.prompts.render(template, vars)?;
        let params = CompletionParams::default();
        let reply = self.request(task, &prompt, payload.clone(), params)?;
        let first_err = match parse_structured(&reply, &validate) {
            Ok(v) => return Ok(v),
            Err(e) => e,
        };
        warn!(task = task.as_str(), error = %first_err, "invalid structured reply, reprompting");
        let repair_prompt = self.prompts.render(
            "repair",
            &[("error", &first_err), ("reply", &reply), ("original", &prompt)],
        )?;
        let repair_payload = serde_json::json!({ "task": task.as_str(), "raw": reply, "original": payload });
        let second = self.request(Task::Repair, &repair_prompt, repair_payload, params)?;
        parse_structured(&second, &validate).map_err(|message| GatewayError::Structured {
            task: task.as_str().to_string(),
            message,
            raw: second,
        })
    }

    fn cached<R: Serialize>(
        &self,
        operation: &str,
        model: &str,
        request: &R,
        call: impl FnOnce() -> Result<Value, GatewayError>,
    ) -> Result<Value, GatewayError> {
        let Some(cache) = &self.cache else {
            return call();
        };
        let key = ResponseCache::key(operation, model, request);
        if let Some(hit) = cache.get(&key)? {
            return Ok(hit);
        }
        if self.config.cache_mode == CacheMode::Replay {
            return Err(GatewayError::UncachedRequest { key });
        }
        let value = call()?;
        cache.put(&key, operation, model, request, &value)?;
        Ok(value)
    }
}

/// Parses a single decimal, clamping out-of-range values with a warning.
pub fn parse_sentiment(reply: &str) -> Option<SentimentScore> {
    let trimmed = reply.trim();
    let value = trimmed.parse::<f64>().ok().or_else(|| first_number(trimmed))?;
    if !value.is_finite() {
        return None;
    }
    if !(0.0..=1.0).contains(&value) {
        warn!(value, "sentiment reply out of range, clamping");
    }
    SentimentScore::clamped(value)
}

fn first_number(s: &str) -> Option<f64> {
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let starts =
            c.is_ascii_digit() || ((c == b'-' || c == b'.') && bytes.get(i + 1).is_some_and(u8::is_ascii_digit));
        if starts {
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j].is_ascii_digit() || bytes[j] == b'.') {
                j += 1;
            }
            return s[i..j].parse().ok();
        }
        i += 1;
    }
    None
}

fn parse_structured<T, F>(reply: &str, validate: &F) -> Result<T, String>
where
    T: DeserializeOwned,
    F: Fn(&T) -> Result<(), String>,
{
    let body = json_body(reply).ok_or_else(|| "reply contains no JSON object".to_string())?;
    let value: T = serde_json::from_str(body).map_err(|e| e.to_string())?;
    validate(&value)?;
    Ok(value)
}

/// Strips code fences and surrounding prose from a JSON object reply.
pub fn json_body(reply: &str) -> Option<&str> {
    let start = reply.find('{')?;
    let end = reply.rfind('}')?;
    (end > start).then(|| &reply[start..=end])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    #[test]
    fn sentiment_parsing() {
        assert_eq!(parse_sentiment("0.73").unwrap().value(), 0.73);
        assert_eq!(parse_sentiment(" Score: 0.25\n").unwrap().value(), 0.25);
        assert_eq!(parse_sentiment("1.4").unwrap().value(), 1.0);
        assert_eq!(parse_sentiment("-0.2").unwrap().value(), 0.0);
        assert!(parse_sentiment("positive").is_none());
        assert!(parse_sentiment("NaN").is_none());
    }

    #[test]
    fn json_body_strips_fences() {
        assert_eq!(json_body("```json\n{\"a\": 1}\n```"), Some("{\"a\": 1}"));
        assert_eq!(json_body("nothing"), None);
    }

    #[test]
    fn mock_completion_is_deterministic() {
        let gw = LlmGateway::mock();
        let a = gw.complete("tell me a story", CompletionParams::default()).unwrap();
        let b = gw.complete("tell me a story", CompletionParams::default()).unwrap();
        let c = gw.complete("tell me another", CompletionParams::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(gw.complete("  ", CompletionParams::default()).is_err());
    }

    #[test]
    fn replay_with_empty_cache_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let counting = Arc::new(Counting::new(vec!["x".into()]));
        let config = GatewayConfig {
            cache_mode: CacheMode::Replay,
            ..GatewayConfig::mock()
        };
        let gw = LlmGateway::with_backend(config, counting.clone(), Some(dir.path())).unwrap();
        let err = gw.complete("hello", CompletionParams::default()).unwrap_err();
        assert!(matches!(err, GatewayError::UncachedRequest { .. }));
        assert_eq!(counting.calls.load(Ordering::SeqCst), 0);
        assert!(gw.embed(&["abc".to_string()]).is_err());
        assert_eq!(counting.calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn record_mode_calls_upstream_once() {
        let dir = tempfile::tempdir().unwrap();
        let counting = Arc::new(Counting::new(vec!["first".into(), "second".into()]));
        let config = GatewayConfig {
            cache_mode: CacheMode::Record,
            ..GatewayConfig::mock()
        };
        let gw = LlmGateway::with_backend(config.clone(), counting.clone(), Some(dir.path())).unwrap();
        let a = gw.complete("same prompt", CompletionParams::default()).unwrap();
        let b = gw.complete("same prompt", CompletionParams::default()).unwrap();
        assert_eq!(a, "first");
        assert_eq!(a, b);
        assert_eq!(counting.calls.load(Ordering::SeqCst), 1);

        // replay serves the recorded value without the backend
        let replay = GatewayConfig {
            cache_mode: CacheMode::Replay,
            ..config
        };
        let gw = LlmGateway::with_backend(replay, counting.clone(), Some(dir.path())).unwrap();
        assert_eq!(
            gw.complete("same prompt", CompletionParams::default()).unwrap(),
            "first"
        );
        assert_eq!(counting.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn embed_contract() {
        let gw = LlmGateway::mock();
        let a = gw.embed(&["abc".to_string()]).unwrap();
        let b = gw.embed(&["abc".to_string()]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].dim(), 256);
        assert!(matches!(gw.embed(&["".to_string()]), Err(GatewayError::Contract(_))));
        let many: Vec<String> = (0..65).map(|i| format!("text {i}")).collect();
        assert!(gw.embed(&many).is_err());
        assert_eq!(gw.embed_all(&many).unwrap().len(), 65);
    }

    #[test]
    fn sentiment_reprompts_once_then_fails() {
        let counting = Arc::new(Counting::new(vec!["great".into(), "still words".into()]));
        let gw = LlmGateway::with_backend(GatewayConfig::mock(), counting.clone(), None).unwrap();
        let err = gw.score_sentiment("some text").unwrap_err();
        assert!(matches!(err, GatewayError::Sentiment { .. }));
        assert_eq!(counting.calls.load(Ordering::SeqCst), 2);

        let counting = Arc::new(Counting::new(vec!["hmm".into(), "0.9".into()]));
        let gw = LlmGateway::with_backend(GatewayConfig::mock(), counting, None).unwrap();
        assert_eq!(gw.score_sentiment("some text").unwrap().value(), 0.9);
    }

    #[test]
    fn structured_reply_gets_one_repair() {
        #[derive(Debug, Deserialize)]
        struct Reply {
            value: u32,
        }
        let counting = Arc::new(Counting::new(vec![
            "oops".into(),
            "```json\n{\"value\": 3}\n```".into(),
        ]));
        let gw = LlmGateway::with_backend(GatewayConfig::mock(), counting.clone(), None).unwrap();
        let r: Reply = gw
            .structured(
                Task::Summarize,
                "repair",
                &[("error", "e"), ("reply", "r"), ("original", "o")],
                Value::Null,
                |_| Ok(()),
            )
            .unwrap();
        assert_eq!(r.value, 3);

        let counting = Arc::new(Counting::new(vec!["oops".into(), "again".into()]));
        let gw = LlmGateway::with_backend(GatewayConfig::mock(), counting, None).unwrap();
        let err = gw
            .structured::<Reply, _>(
                Task::Summarize,
                "repair",
                &[("error", "e"), ("reply", "r"), ("original", "o")],
                Value::Null,
                |_| Ok(()),
            )
            .unwrap_err();
        match err {
            GatewayError::Structured { raw, .. } => assert_eq!(raw, "again"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parallelism_is_bounded() {
        use rayon::prelude::*;
        let slow = Arc::new(Slow::default());
        let config = GatewayConfig {
            max_parallel: 3,
            ..GatewayConfig::mock()
        };
        let gw = LlmGateway::with_backend(config, slow.clone(), None).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(12).build().unwrap();
        pool.install(|| {
            (0..48).into_par_iter().for_each(|i| {
                gw.complete(&format!("p{i}"), CompletionParams::default()).unwrap();
            })
        });
        assert!(gw.peak_in_flight() <= 3);
        assert!(slow.peak.load(Ordering::SeqCst) <= 3);
        assert_eq!(gw.upstream_calls(), 48);
    }

    /// Returns scripted replies in order and counts calls.
    struct Counting {
        replies: Mutex<Vec<String>>,
        calls: AtomicUsize,
    }

    impl Counting {
        fn new(mut replies: Vec<String>) -> Self {
            replies.reverse();
            Counting {
                replies: Mutex::new(replies),
                calls: AtomicUsize::new(0),
            }
        }
    }

    impl Backend for Counting {
        fn complete(&self, _request: &CompletionRequest) -> Result<String, GatewayError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(self.replies.lock().unwrap().pop().unwrap_or_default())
        }

        fn embed(&self, request: &EmbeddingRequest) -> Result<Vec<Vec<f64>>, GatewayError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(request.texts.iter().map(|_| vec![1.0; request.dim]).collect())
        }
    }

    #[derive(Default)]
    struct Slow {
        current: AtomicUsize,
        peak: AtomicUsize,
    }

    impl Backend for Slow {
        fn complete(&self, _request: &CompletionRequest) -> Result<String, GatewayError> {
            let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(5));
            self.current.fetch_sub(1, Ordering::SeqCst);
            Ok("ok".into())
        }

        fn embed(&self, _request: &EmbeddingRequest) -> Result<Vec<Vec<f64>>, GatewayError> {
            unreachable!()
        }
    }
}
