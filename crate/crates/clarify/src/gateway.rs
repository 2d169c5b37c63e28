//! Chat-completion gateway: request digests, a scripted backend for replay,
//! an OpenAI-compatible remote backend, and a front door that adds caching,
//! retry with exponential backoff and token-bucket rate limiting.

use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use clarify_core::count_tokens;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub messages: Vec<Message>,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Free-form experiment label. Not part of the digest.
    #[serde(default)]
    pub tag: String,
}

impl CompletionRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("no messages".into()));
        }
        if let Some(i) = self.messages.iter().position(|m| m.content.is_empty()) {
            return Err(GatewayError::InvalidRequest(format!("message {i} is empty")));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::InvalidRequest(format!("temperature {}", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// All message contents joined by newlines, the text fixture patterns
    /// are matched against.
    pub fn prompt_text(&self) -> String {
        self.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n")
    }
}

/// SHA-256 hex over the canonical JSON of messages, model, temperature and
/// max_tokens. The tag is excluded.
pub fn request_digest(request: &CompletionRequest) -> String {
    #[derive(Serialize)]
    struct Canonical<'a> {
        messages: &'a [Message],
        model: &'a str,
        temperature: f64,
        max_tokens: u32,
    }
    let canon = Canonical {
        messages: &request.messages,
        model: &request.model,
        temperature: request.temperature,
        max_tokens: request.max_tokens,
    };
    let bytes = serde_json::to_vec(&canon).expect("request serializes");
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
    pub cached: bool,
    pub latency: Duration,
    pub digest: String,
}

/// What a backend returns before the gateway fills in bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendReply {
    pub text: String,
    pub usage: Option<Usage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    /// Worth retrying: 429, 5xx, timeouts, dropped connections.
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("backend rejected the request: {0}")]
    Fatal(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("no script entry matches request {digest}")]
    ScriptMiss { digest: String },
}

pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &CompletionRequest) -> Result<BackendReply, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend exhausted after {attempts} attempts: {last}")]
    BackendExhausted { attempts: u32, last: String },
    #[error("no script entry matches request {digest}")]
    ScriptMiss { digest: String },
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error("backend rejected the request: {0}")]
    Rejected(String),
    #[error("cache failure: {0}")]
    Cache(String),
}

impl GatewayError {
    /// Whether the same call may succeed later.
    pub fn retriable(&self) -> bool {
        matches!(self, Self::BackendExhausted { .. } | Self::Cache(_))
    }
}

// ---------------------------------------------------------------- scripted

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptMatch {
    Digest(String),
    Contains(String),
}

impl ScriptMatch {
    fn matches(&self, digest: &str, prompt: &str) -> bool {
        match self {
            Self::Digest(d) => d == digest,
            Self::Contains(p) => prompt.contains(p.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(rename = "match")]
    pub matcher: ScriptMatch,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScriptFixture {
    #[serde(default)]
    pub strict: bool,
    pub entries: Vec<ScriptEntry>,
}

impl ScriptFixture {
    pub fn from_path(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn contains(mut self, pattern: &str, response: &str) -> Self {
        self.entries.push(ScriptEntry {
            matcher: ScriptMatch::Contains(pattern.into()),
            response: response.into(),
        });
        self
    }
}

/// Replays a [`ScriptFixture`]. Each request takes the first unconsumed
/// matching entry. Once every match is consumed, a strict script misses and
/// a lenient one replays the last matching entry.
pub struct ScriptedBackend {
    fixture: ScriptFixture,
    state: Mutex<ScriptState>,
}

#[derive(Default)]
struct ScriptState {
    consumed: Vec<bool>,
    calls: usize,
    log: Vec<String>,
}

impl ScriptedBackend {
    pub fn new(fixture: ScriptFixture) -> Self {
        let consumed = vec![false; fixture.entries.len()];
        Self { fixture, state: Mutex::new(ScriptState { consumed, ..Default::default() }) }
    }

    /// Completions served so far, misses excluded.
    pub fn calls(&self) -> usize {
        self.state.lock().expect("script lock").calls
    }

    /// Digests of every request received, in arrival order.
    pub fn request_log(&self) -> Vec<String> {
        self.state.lock().expect("script lock").log.clone()
    }

    /// Entries never consumed.
    pub fn unused(&self) -> Vec<&ScriptEntry> {
        let st = self.state.lock().expect("script lock");
        self.fixture.entries.iter().zip(&st.consumed).filter(|(_, c)| !**c).map(|(e, _)| e).collect()
    }
}

impl ChatBackend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<BackendReply, BackendError> {
        let digest = request_digest(request);
        let prompt = request.prompt_text();
        let mut st = self.state.lock().expect("script lock");
        st.log.push(digest.clone());
        let mut last_match = None;
        let mut chosen = None;
        for (i, entry) in self.fixture.entries.iter().enumerate() {
            if entry.matcher.matches(&digest, &prompt) {
                if !st.consumed[i] {
                    chosen = Some(i);
                    break;
                }
                last_match = Some(i);
            }
        }
        let idx = match (chosen, last_match) {
            (Some(i), _) => {
                st.consumed[i] = true;
                i
            }
            (None, Some(i)) if !self.fixture.strict => i,
            _ => return Err(BackendError::ScriptMiss { digest }),
        };
        st.calls += 1;
        Ok(BackendReply { text: self.fixture.entries[idx].response.clone(), usage: None })
    }
}

// ------------------------------------------------------------------ remote

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteConfig {
    /// Base URL up to and including the version segment, e.g.
    /// `https://api.openai.com/v1`.
    pub api_base: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl RemoteConfig {
    /// Reads `CLARIFY_API_BASE` and `CLARIFY_API_KEY` (falling back to
    /// `OPENAI_API_KEY`).
    pub fn from_env() -> Self {
        let key = std::env::var("CLARIFY_API_KEY").or_else(|_| std::env::var("OPENAI_API_KEY")).ok();
        Self {
            api_base: std::env::var("CLARIFY_API_BASE")
                .unwrap_or_else(|_| "https://api.openai.com/v1".into()),
            api_key: key.filter(|k| !k.is_empty()),
            timeout: Duration::from_secs(120),
        }
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.api_base.trim_end_matches('/'))
    }
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: usize,
    completion_tokens: usize,
}

fn classify_status(status: u16, body: &str) -> BackendError {
    let msg = format!("HTTP {status}: {}", body.chars().take(300).collect::<String>());
    match status {
        401 | 403 => BackendError::Auth(msg),
        429 | 500..=599 => BackendError::Transient(msg),
        _ => BackendError::Fatal(msg),
    }
}

impl ChatBackend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<BackendReply, BackendError> {
        let body = serde_json::json!({
            "model": request.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let mut req = self.agent.post(self.url()).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| match e {
            ureq::Error::Timeout(_)
            | ureq::Error::Io(_)
            | ureq::Error::ConnectionFailed
            | ureq::Error::HostNotFound
            | ureq::Error::BodyStalled => BackendError::Transient(e.to_string()),
            other => BackendError::Fatal(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transient(format!("reading body: {e}")))?;
        if !(200..300).contains(&status) {
            return Err(classify_status(status, &text));
        }
        let wire: WireResponse = serde_json::from_str(&text)
            .map_err(|e| BackendError::Fatal(format!("unexpected response shape: {e}")))?;
        let choice = wire
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Fatal("response has no choices".into()))?;
        Ok(BackendReply {
            text: choice.message.content.unwrap_or_default(),
            usage: wire.usage.map(|u| Usage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            }),
        })
    }
}

// ------------------------------------------------------------ rate limiter

/// Token bucket refilled continuously at `per_minute / 60` tokens a second.
pub struct TokenBucket {
    capacity: f64,
    refill_per_sec: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn per_minute(per_minute: u32, burst: u32) -> Self {
        let capacity = f64::from(burst.max(1));
        Self {
            capacity,
            refill_per_sec: f64::from(per_minute.max(1)) / 60.0,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    /// Takes a token at `now`, or reports how long until one is available.
    pub fn try_acquire(&self, now: Instant) -> Result<(), Duration> {
        let mut st = self.state.lock().expect("bucket lock");
        let elapsed = now.saturating_duration_since(st.1).as_secs_f64();
        st.0 = (st.0 + elapsed * self.refill_per_sec).min(self.capacity);
        st.1 = st.1.max(now);
        if st.0 >= 1.0 {
            st.0 -= 1.0;
            Ok(())
        } else {
            Err(Duration::from_secs_f64((1.0 - st.0) / self.refill_per_sec))
        }
    }

    pub fn acquire(&self) {
        while let Err(wait) = self.try_acquire(Instant::now()) {
            std::thread::sleep(wait);
        }
    }
}

// ----------------------------------------------------------------- gateway

/// Storage for replies keyed by request digest.
pub trait ResponseCache: Send + Sync {
    fn get(&self, digest: &str) -> Result<Option<String>, String>;
    fn put(&self, digest: &str, reply: &str, model: &str) -> Result<(), String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 4, base_delay: Duration::from_millis(500), max_delay: Duration::from_secs(30) }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_retries: u32) -> Self {
        Self { max_retries, base_delay: Duration::ZERO, max_delay: Duration::ZERO }
    }

    /// Delay before retry number `retry` (0-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 2u32.saturating_pow(retry.min(16));
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// `None` disables rate limiting.
    pub requests_per_minute: Option<u32>,
    pub max_retries: u32,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            model: std::env::var("CLARIFY_MODEL").unwrap_or_else(|_| "gpt-4".into()),
            temperature: 0.0,
            max_tokens: 512,
            requests_per_minute: None,
            max_retries: RetryPolicy::default().max_retries,
        }
    }
}

pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    cache: Option<Arc<dyn ResponseCache>>,
    limiter: Option<TokenBucket>,
    retry: RetryPolicy,
    config: GatewayConfig,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, config: GatewayConfig) -> Self {
        let retry = RetryPolicy { max_retries: config.max_retries, ..RetryPolicy::default() };
        Self {
            backend,
            cache: None,
            limiter: config.requests_per_minute.map(|rpm| TokenBucket::per_minute(rpm, 1)),
            retry,
            config,
        }
    }

    pub fn with_cache(mut self, cache: Arc<dyn ResponseCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    /// A single-user-message request with the configured decoding settings.
    pub fn request(&self, prompt: impl Into<String>, tag: &str) -> CompletionRequest {
        CompletionRequest {
            messages: vec![Message::user(prompt)],
            model: self.config.model.clone(),
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
            tag: tag.into(),
        }
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<Completion, GatewayError> {
        request.validate()?;
        let digest = request_digest(request);
        let prompt_tokens = request.messages.iter().map(|m| count_tokens(&m.content)).sum();
        if let Some(cache) = &self.cache {
            if let Some(text) = cache.get(&digest).map_err(GatewayError::Cache)? {
                let usage = Usage { prompt_tokens, completion_tokens: count_tokens(&text) };
                return Ok(Completion { text, usage, cached: true, latency: Duration::ZERO, digest });
            }
        }
        let mut attempt = 0;
        loop {
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            let started = Instant::now();
            match self.backend.complete(request) {
                Ok(reply) => {
                    let latency = started.elapsed();
                    if let Some(cache) = &self.cache {
                        cache.put(&digest, &reply.text, &request.model).map_err(GatewayError::Cache)?;
                    }
                    let usage = reply.usage.unwrap_or(Usage {
                        prompt_tokens,
                        completion_tokens: count_tokens(&reply.text),
                    });
                    return Ok(Completion { text: reply.text, usage, cached: false, latency, digest });
                }
                Err(BackendError::Transient(msg)) => {
                    if attempt >= self.retry.max_retries {
                        return Err(GatewayError::BackendExhausted { attempts: attempt + 1, last: msg });
                    }
                    tracing::warn!(attempt, %msg, "transient backend failure, retrying");
                    std::thread::sleep(self.retry.delay(attempt));
                    attempt += 1;
                }
                Err(BackendError::Fatal(msg)) => return Err(GatewayError::Rejected(msg)),
                Err(BackendError::Auth(msg)) => return Err(GatewayError::AuthFailure(msg)),
                Err(BackendError::ScriptMiss { digest }) => return Err(GatewayError::ScriptMiss { digest }),
            }
        }
    }
}

/// In-process cache, mostly for tests and the HTTP server.
#[derive(Default)]
pub struct MemoryCache {
    map: Mutex<std::collections::HashMap<String, String>>,
}

impl ResponseCache for MemoryCache {
    fn get(&self, digest: &str) -> Result<Option<String>, String> {
        Ok(self.map.lock().expect("cache lock").get(digest).cloned())
    }

    fn put(&self, digest: &str, reply: &str, _model: &str) -> Result<(), String> {
        self.map.lock().expect("cache lock").insert(digest.into(), reply.into());
        Ok(())
    }
}
