//! Chat-completion access shared by every pipeline stage.
//!
//! A [`Gateway`] wraps one [`ChatBackend`] (HTTP or mock) and is the only
//! place that talks to it. It enforces the per-backend in-flight bound,
//! the per-request timeout and the retry policy; callers may issue requests
//! from any number of tasks.

mod http;
mod mock;
mod parse;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;
use tracing::{debug, warn};

pub use http::HttpBackend;
pub use mock::{mock_resolve, Fixtures, MockBackend, MockStats, MOCK_FALLBACK};
pub use parse::{parse_answer, ParsedAnswer, ANSWER_CONTRACT};

pub const DEFAULT_MAX_INFLIGHT: usize = 3;

const SCREENING_SYSTEM: &str =
    "You assist with clinical trial pre-screening. Base every statement on the admission note provided and nothing else.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub speaker: Speaker,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { speaker: Speaker::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { speaker: Speaker::User, content: content.into() }
    }
}

/// One chat completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Provenance label (note|question|role, ...). Mock fixtures are keyed on it.
    pub tag: String,
}

impl ChatRequest {
    pub const DEFAULT_MAX_TOKENS: u32 = 1024;

    /// Request with temperature 0 and the default token budget.
    pub fn new(messages: Vec<ChatMessage>, tag: impl Into<String>) -> Self {
        Self { messages, temperature: 0.0, max_tokens: Self::DEFAULT_MAX_TOKENS, tag: tag.into() }
    }

    /// Answering request: screening system message plus `body` followed by
    /// the verdict/evidence format contract.
    pub fn answering(body: &str, tag: impl Into<String>) -> Self {
        Self::new(
            vec![
                ChatMessage::system(SCREENING_SYSTEM),
                ChatMessage::user(format!("{}\n\n{}", body.trim_end(), ANSWER_CONTRACT)),
            ],
            tag,
        )
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let invalid = |reason: &str| GatewayError::InvalidRequest { tag: self.tag.clone(), reason: reason.into() };
        if self.messages.is_empty() {
            return Err(invalid("no messages"));
        }
        if self.messages.iter().any(|m| m.content.trim().is_empty()) {
            return Err(invalid("empty message content"));
        }
        if !(self.temperature >= 0.0) {
            return Err(invalid("temperature must be >= 0"));
        }
        if self.max_tokens == 0 {
            return Err(invalid("max_tokens must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Mock,
}

fn default_timeout_ms() -> u64 {
    60_000
}
fn default_retry_limit() -> u32 {
    2
}
fn default_max_inflight() -> usize {
    DEFAULT_MAX_INFLIGHT
}
fn default_backoff_ms() -> u64 {
    250
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default)]
    pub model_name: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
    #[serde(default = "default_max_inflight")]
    pub max_inflight: usize,
    /// Initial retry delay; doubles on every further attempt.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    /// Environment variable holding a bearer token (http only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    /// Fixture file (mock only). `{seed}` is replaced by the run's seed label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixtures: Option<PathBuf>,
}

impl BackendConfig {
    pub fn mock() -> Self {
        Self {
            kind: BackendKind::Mock,
            label: None,
            base_url: None,
            model_name: "mock".into(),
            timeout_ms: default_timeout_ms(),
            retry_limit: default_retry_limit(),
            max_inflight: DEFAULT_MAX_INFLIGHT,
            backoff_ms: default_backoff_ms(),
            api_key_env: None,
            fixtures: None,
        }
    }

    pub fn http(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self { kind: BackendKind::Http, base_url: Some(base_url.into()), model_name: model_name.into(), ..Self::mock() }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |reason: &str| Err(GatewayError::Config(reason.into()));
        if self.max_inflight < 1 {
            return bad("max_inflight must be >= 1");
        }
        if self.timeout_ms == 0 {
            return bad("timeout_ms must be > 0");
        }
        if self.kind == BackendKind::Http && self.base_url.as_deref().is_none_or(|u| u.trim().is_empty()) {
            return bad("http backend requires base_url");
        }
        Ok(())
    }

    /// Human-readable backend identity for manifests and logs.
    pub fn identity(&self) -> String {
        match self.kind {
            BackendKind::Http => format!("http:{}@{}", self.model_name, self.base_url.as_deref().unwrap_or("")),
            BackendKind::Mock => {
                format!("mock:{}", self.fixtures.as_ref().map(|p| p.display().to_string()).unwrap_or_default())
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("[{tag}] request timed out after {timeout_ms} ms")]
    Timeout { tag: String, timeout_ms: u64 },
    #[error("[{tag}] transport error: {message}")]
    Transport { tag: String, message: String },
    #[error("[{tag}] backend returned status {status}: {excerpt}")]
    Backend { tag: String, status: u16, excerpt: String },
    #[error("[{tag}] giving up after {attempts} attempts: {last}")]
    ExhaustedRetries { tag: String, attempts: u32, last: Box<GatewayError> },
    #[error("[{tag}] invalid request: {reason}")]
    InvalidRequest { tag: String, reason: String },
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("fixtures {}: {message}", path.display())]
    Fixtures { path: PathBuf, message: String },
}

impl GatewayError {
    /// Whether a retry may succeed.
    pub fn is_transient(&self) -> bool {
        match self {
            GatewayError::Timeout { .. } | GatewayError::Transport { .. } => true,
            GatewayError::Backend { status, .. } => *status == 429 || (500..600).contains(status),
            _ => false,
        }
    }
}

/// Something that can answer a chat request once.
#[async_trait]
pub trait ChatBackend: Send + Sync {
    async fn send(&self, req: &ChatRequest) -> Result<String, GatewayError>;

    fn identity(&self) -> String;
}

#[derive(Debug, Default)]
struct Counters {
    requests: AtomicU64,
    attempts: AtomicU64,
}

/// Counters of a gateway since construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GatewayStats {
    /// Logical `complete` calls.
    pub requests: u64,
    /// Backend sends, including retries.
    pub attempts: u64,
}

/// Bounded, retrying access to one backend. Cheap to clone; clones share
/// the in-flight bound.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    permits: Arc<Semaphore>,
    timeout: Duration,
    retry_limit: u32,
    backoff: Duration,
    counters: Arc<Counters>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.identity())
            .field("timeout", &self.timeout)
            .field("retry_limit", &self.retry_limit)
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, cfg: &BackendConfig) -> Result<Self, GatewayError> {
        cfg.validate()?;
        Ok(Self {
            backend,
            permits: Arc::new(Semaphore::new(cfg.max_inflight)),
            timeout: Duration::from_millis(cfg.timeout_ms),
            retry_limit: cfg.retry_limit,
            backoff: Duration::from_millis(cfg.backoff_ms),
            counters: Arc::default(),
        })
    }

    /// Builds the backend a config describes. Relative fixture paths resolve
    /// against `base_dir`; `seed` fills a `{seed}` placeholder in them.
    pub fn from_config(cfg: &BackendConfig, base_dir: &Path, seed: Option<&str>) -> Result<Self, GatewayError> {
        cfg.validate()?;
        let backend: Arc<dyn ChatBackend> = match cfg.kind {
            BackendKind::Http => Arc::new(HttpBackend::new(cfg)?),
            BackendKind::Mock => {
                match &cfg.fixtures {
                    Some(p) => {
                        let path = base_dir.join(p.to_string_lossy().replace("{seed}", seed.unwrap_or("")));
                        Arc::new(MockBackend::new(Fixtures::load(&path)?).with_source(path))
                    }
                    None => Arc::new(MockBackend::new(Fixtures::default())),
                }
            }
        };
        Self::new(backend, cfg)
    }

    pub fn identity(&self) -> String {
        self.backend.identity()
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            requests: self.counters.requests.load(Ordering::Relaxed),
            attempts: self.counters.attempts.load(Ordering::Relaxed),
        }
    }

    /// Sends `req`, retrying transient failures with exponential backoff.
    /// At most `max_inflight` sends are outstanding at any time; the permit
    /// is released while waiting between attempts.
    pub async fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        req.validate()?;
        self.counters.requests.fetch_add(1, Ordering::Relaxed);
        let mut attempt: u32 = 0;
        loop {
            attempt += 1;
            let result = {
                let _permit = self.permits.acquire().await.expect("gateway semaphore is never closed");
                self.counters.attempts.fetch_add(1, Ordering::Relaxed);
                match tokio::time::timeout(self.timeout, self.backend.send(req)).await {
                    Ok(r) => r,
                    Err(_) => Err(GatewayError::Timeout { tag: req.tag.clone(), timeout_ms: self.timeout.as_millis() as u64 }),
                }
            };
            match result {
                Ok(text) => {
                    debug!(tag = %req.tag, attempt, "completion ok");
                    return Ok(text);
                }
                Err(err) if err.is_transient() && attempt <= self.retry_limit => {
                    let delay = self.backoff.saturating_mul(1 << (attempt - 1).min(16));
                    warn!(tag = %req.tag, attempt, ?delay, error = %err, "transient failure, retrying");
                    tokio::time::sleep(delay).await;
                }
                Err(err) if err.is_transient() && self.retry_limit > 0 => {
                    return Err(GatewayError::ExhaustedRetries { tag: req.tag.clone(), attempts: attempt, last: Box::new(err) })
                }
                Err(err) => return Err(err),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    /// Fails with the queued errors, then succeeds.
    struct Scripted {
        failures: Mutex<Vec<GatewayError>>,
    }

    #[async_trait]
    impl ChatBackend for Scripted {
        async fn send(&self, req: &ChatRequest) -> Result<String, GatewayError> {
            let next = self.failures.lock().unwrap().pop();
            match next {
                Some(e) => Err(e),
                None => Ok(format!("ok:{}", req.tag)),
            }
        }
        fn identity(&self) -> String {
            "scripted".into()
        }
    }

    fn status(code: u16) -> GatewayError {
        GatewayError::Backend { tag: "t".into(), status: code, excerpt: String::new() }
    }

    fn gateway(failures: Vec<GatewayError>, retry_limit: u32) -> Gateway {
        let cfg = BackendConfig { retry_limit, backoff_ms: 1, ..BackendConfig::mock() };
        Gateway::new(Arc::new(Scripted { failures: Mutex::new(failures) }), &cfg).unwrap()
    }

    fn req() -> ChatRequest {
        ChatRequest::new(vec![ChatMessage::user("hi")], "t")
    }

    #[tokio::test]
    async fn retries_transient_then_succeeds() {
        let gw = gateway(vec![status(500), status(503)], 3);
        assert_eq!(gw.complete(&req()).await.unwrap(), "ok:t");
        assert_eq!(gw.stats(), GatewayStats { requests: 1, attempts: 3 });
    }

    #[tokio::test]
    async fn exhausts_retries() {
        let gw = gateway(vec![status(500), status(500), status(500)], 2);
        match gw.complete(&req()).await {
            Err(GatewayError::ExhaustedRetries { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(gw.stats().attempts, 3);
    }

    #[tokio::test]
    async fn client_errors_are_not_retried() {
        let gw = gateway(vec![status(400)], 3);
        assert!(matches!(gw.complete(&req()).await, Err(GatewayError::Backend { status: 400, .. })));
        assert_eq!(gw.stats().attempts, 1);
    }

    #[tokio::test]
    async fn zero_retry_limit_returns_raw_error() {
        let gw = gateway(vec![status(502)], 0);
        assert!(matches!(gw.complete(&req()).await, Err(GatewayError::Backend { status: 502, .. })));
    }

    #[tokio::test]
    async fn timeouts_are_enforced() {
        struct Slow;
        #[async_trait]
        impl ChatBackend for Slow {
            async fn send(&self, _: &ChatRequest) -> Result<String, GatewayError> {
                tokio::time::sleep(Duration::from_secs(5)).await;
                Ok(String::new())
            }
            fn identity(&self) -> String {
                "slow".into()
            }
        }
        let cfg = BackendConfig { timeout_ms: 10, retry_limit: 1, backoff_ms: 1, ..BackendConfig::mock() };
        let gw = Gateway::new(Arc::new(Slow), &cfg).unwrap();
        match gw.complete(&req()).await {
            Err(GatewayError::ExhaustedRetries { last, attempts: 2, .. }) => {
                assert!(matches!(*last, GatewayError::Timeout { .. }))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[tokio::test]
    async fn invalid_requests_are_rejected() {
        let gw = gateway(vec![], 0);
        let empty = ChatRequest::new(vec![], "t");
        assert!(matches!(gw.complete(&empty).await, Err(GatewayError::InvalidRequest { .. })));
        let blank = ChatRequest::new(vec![ChatMessage::user("  ")], "t");
        assert!(matches!(gw.complete(&blank).await, Err(GatewayError::InvalidRequest { .. })));
    }

    #[test]
    fn config_validation() {
        assert!(BackendConfig { max_inflight: 0, ..BackendConfig::mock() }.validate().is_err());
        assert!(BackendConfig { timeout_ms: 0, ..BackendConfig::mock() }.validate().is_err());
        assert!(BackendConfig { base_url: None, ..BackendConfig::http("x", "m") }.validate().is_err());
        let cfg: BackendConfig = serde_json::from_str(r#"{"kind":"mock"}"#).unwrap();
        assert_eq!(cfg.max_inflight, 3);
        assert!(serde_json::from_str::<BackendConfig>(r#"{"kind":"mock","bogus":1}"#).is_err());
    }
}
