//! Deterministic fixture-backed backend.
//!
//! Responses are looked up by the exact request tag. Unknown tags get a
//! fixed fallback reply, so identical request streams always produce
//! identical response streams. The backend also records call counts and
//! peak concurrency for tests.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatRequest, GatewayError};

/// Reply for tags without a fixture.
pub const MOCK_FALLBACK: &str = "\"Unable to determine\". No fixture.";

/// Canned replies keyed by request tag (`fixtures.json`).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fixtures {
    pub fixtures: BTreeMap<String, String>,
}

impl Fixtures {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let err = |message: String| GatewayError::Fixtures { path: path.to_path_buf(), message };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("fixtures serialize");
        std::fs::write(path, text + "\n")
    }

    pub fn insert(&mut self, tag: impl Into<String>, reply: impl Into<String>) -> &mut Self {
        self.fixtures.insert(tag.into(), reply.into());
        self
    }

    pub fn get(&self, tag: &str) -> Option<&str> {
        self.fixtures.get(tag).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.fixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for Fixtures {
    fn from_iter<T: IntoIterator<Item = (K, V)>>(iter: T) -> Self {
        Self { fixtures: iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect() }
    }
}

/// Fixture lookup with the deterministic fallback.
pub fn mock_resolve(req: &ChatRequest, fixtures: &Fixtures) -> String {
    fixtures.get(&req.tag).unwrap_or(MOCK_FALLBACK).to_string()
}

/// Observations recorded by a [`MockBackend`].
#[derive(Debug, Default)]
pub struct MockStats {
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    calls: AtomicUsize,
    log: Mutex<Vec<String>>,
}

impl MockStats {
    /// Highest number of simultaneously outstanding sends.
    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Tags in the order requests arrived.
    pub fn tags(&self) -> Vec<String> {
        self.log.lock().expect("mock log poisoned").clone()
    }

    pub fn calls_for(&self, tag: &str) -> usize {
        self.log.lock().expect("mock log poisoned").iter().filter(|t| *t == tag).count()
    }
}

#[derive(Debug, Default)]
struct FailurePlan {
    /// tag -> remaining transient (HTTP 503) failures
    transient: BTreeMap<String, usize>,
    /// tags that always fail with HTTP 400
    permanent: BTreeSet<String>,
}

/// Fixture-backed [`ChatBackend`].
#[derive(Debug)]
pub struct MockBackend {
    fixtures: Fixtures,
    latency: Duration,
    failures: Mutex<FailurePlan>,
    stats: Arc<MockStats>,
    source: Option<PathBuf>,
}

impl MockBackend {
    pub fn new(fixtures: Fixtures) -> Self {
        Self {
            fixtures,
            latency: Duration::ZERO,
            failures: Mutex::default(),
            stats: Arc::default(),
            source: None,
        }
    }

    /// Records where the fixtures came from, for the identity string.
    pub fn with_source(mut self, path: impl Into<PathBuf>) -> Self {
        self.source = Some(path.into());
        self
    }

    /// Simulated service time per send.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    /// First `n` sends for `tag` fail with a retryable 503.
    pub fn fail_first(self, tag: impl Into<String>, n: usize) -> Self {
        self.failures.lock().expect("plan poisoned").transient.insert(tag.into(), n);
        self
    }

    /// Every send for `tag` fails with a non-retryable 400.
    pub fn fail_always(self, tag: impl Into<String>) -> Self {
        self.failures.lock().expect("plan poisoned").permanent.insert(tag.into());
        self
    }

    pub fn stats(&self) -> Arc<MockStats> {
        Arc::clone(&self.stats)
    }

    fn planned_failure(&self, tag: &str) -> Option<GatewayError> {
        let mut plan = self.failures.lock().expect("plan poisoned");
        if plan.permanent.contains(tag) {
            return Some(GatewayError::Backend { tag: tag.into(), status: 400, excerpt: "mock: permanent failure".into() });
        }
        match plan.transient.get_mut(tag) {
            Some(n) if *n > 0 => {
                *n -= 1;
                Some(GatewayError::Backend { tag: tag.into(), status: 503, excerpt: "mock: transient failure".into() })
            }
            _ => None,
        }
    }
}

/// Keeps the in-flight counter right even when a send is cancelled.
struct InFlight<'a>(&'a MockStats);

impl<'a> InFlight<'a> {
    fn enter(stats: &'a MockStats) -> Self {
        let now = stats.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        stats.peak.fetch_max(now, Ordering::SeqCst);
        InFlight(stats)
    }
}

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

#[async_trait]
impl ChatBackend for MockBackend {
    async fn send(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let _guard = InFlight::enter(&self.stats);
        self.stats.calls.fetch_add(1, Ordering::SeqCst);
        self.stats.log.lock().expect("mock log poisoned").push(req.tag.clone());

        if !self.latency.is_zero() {
            tokio::time::sleep(self.latency).await;
        }
        match self.planned_failure(&req.tag) {
            Some(err) => Err(err),
            None => Ok(mock_resolve(req, &self.fixtures)),
        }
    }

    fn identity(&self) -> String {
        match &self.source {
            Some(p) => format!("mock:{}", p.display()),
            None => format!("mock:{} fixtures", self.fixtures.len()),
        }
    }
}
