//! Dispatch of prompt bundles to an inference endpoint over a
//! chat-completions JSON contract, with content-addressed caching, bounded
//! retries, and a deterministic mock transport for tests and demos.

mod cache;
mod http;
mod mock;

pub use cache::{CacheKey, CompletionCache};
pub use http::HttpTransport;
pub use mock::{MockScript, MockTransport};

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::promptkit::PromptBundle;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("cache error: {0}")]
    Cache(String),
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
}

/// Decoding parameters for one stage. `sampling_enabled == false` requests
/// deterministic decoding regardless of the temperature value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub model_id: String,
    pub temperature: f64,
    pub max_new_tokens: u32,
    pub sampling_enabled: bool,
}

impl GenerationConfig {
    /// Translation stage defaults: temperature 0.3, 2048 new tokens.
    pub fn translation_default(model_id: &str) -> Self {
        GenerationConfig {
            model_id: model_id.to_string(),
            temperature: 0.3,
            max_new_tokens: 2048,
            sampling_enabled: true,
        }
    }

    /// Extraction stage defaults: greedy decoding, 512 new tokens.
    pub fn extraction_default(model_id: &str) -> Self {
        GenerationConfig {
            model_id: model_id.to_string(),
            temperature: 0.0,
            max_new_tokens: 512,
            sampling_enabled: false,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.temperature < 0.0 {
            return Err(BackendError::InvalidConfig(format!(
                "temperature must be non-negative, got {}",
                self.temperature
            )));
        }
        if !(1..=32768).contains(&self.max_new_tokens) {
            return Err(BackendError::InvalidConfig(format!(
                "max_new_tokens must be in [1, 32768], got {}",
                self.max_new_tokens
            )));
        }
        Ok(())
    }

    /// Digest over every field; any change invalidates cache entries.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        crate::corpus::hex_sha256(json.as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendStatus {
    Ok,
    FailedAfterRetries,
}

/// One completion result. `attempt_count` counts network attempts; it is 0
/// when the result came from the cache.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOutput {
    pub transcript_id: String,
    pub raw_text: String,
    pub latency_ms: u64,
    pub backend_status: BackendStatus,
    pub attempt_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ModelOutput {
    pub fn is_ok(&self) -> bool {
        self.backend_status == BackendStatus::Ok
    }
}

/// A transport failure is retryable (connection trouble, HTTP 5xx) or fatal
/// (malformed response, HTTP 4xx).
#[derive(Debug)]
pub enum TransportFailure {
    Retryable(String),
    Fatal(String),
}

/// One way of turning a prompt bundle into completion text.
pub trait Transport: Send + Sync {
    fn send(&self, bundle: &PromptBundle, config: &GenerationConfig)
        -> Result<String, TransportFailure>;
}

/// Retry on transport errors and HTTP 5xx only, with exponential backoff.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    fn backoff_for(&self, completed_attempts: u32) -> Duration {
        self.initial_backoff * 2u32.saturating_pow(completed_attempts.saturating_sub(1))
    }
}

/// Caching, retrying frontend over a transport.
pub struct BackendClient {
    transport: Box<dyn Transport>,
    cache: Option<Mutex<CompletionCache>>,
    retry: RetryPolicy,
    network_attempts: AtomicU64,
}

impl BackendClient {
    pub fn new(transport: Box<dyn Transport>) -> Self {
        BackendClient {
            transport,
            cache: None,
            retry: RetryPolicy::default(),
            network_attempts: AtomicU64::new(0),
        }
    }

    pub fn with_cache(mut self, cache: CompletionCache) -> Self {
        self.cache = Some(Mutex::new(cache));
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Total network attempts issued since construction. Cache hits do not
    /// count.
    pub fn network_attempt_count(&self) -> u64 {
        self.network_attempts.load(Ordering::SeqCst)
    }

    /// Completes one bundle: cache hit returns the stored text without
    /// network traffic; on miss, issues up to `max_attempts` requests, then
    /// persists the completion. Retry exhaustion is reported in-band via
    /// `backend_status`; only protocol violations surface as errors.
    pub fn complete(
        &self,
        transcript_id: &str,
        bundle: &PromptBundle,
        config: &GenerationConfig,
    ) -> Result<ModelOutput, BackendError> {
        config.validate()?;
        let key = CacheKey {
            fingerprint: bundle.fingerprint.clone(),
            model_id: config.model_id.clone(),
            config_digest: config.digest(),
        };

        if let Some(cache) = &self.cache {
            let cached = cache.lock().expect("cache lock").get(&key);
            if let Some(text) = cached {
                return Ok(ModelOutput {
                    transcript_id: transcript_id.to_string(),
                    raw_text: text,
                    latency_ms: 0,
                    backend_status: BackendStatus::Ok,
                    attempt_count: 0,
                    error: None,
                });
            }
        }

        let started = Instant::now();
        let mut last_error = String::new();
        for attempt in 1..=self.retry.max_attempts {
            self.network_attempts.fetch_add(1, Ordering::SeqCst);
            match self.transport.send(bundle, config) {
                Ok(text) => {
                    if let Some(cache) = &self.cache {
                        cache
                            .lock()
                            .expect("cache lock")
                            .insert(&key, &text)
                            .map_err(|e| BackendError::Cache(e.to_string()))?;
                    }
                    return Ok(ModelOutput {
                        transcript_id: transcript_id.to_string(),
                        raw_text: text,
                        latency_ms: started.elapsed().as_millis() as u64,
                        backend_status: BackendStatus::Ok,
                        attempt_count: attempt,
                        error: None,
                    });
                }
                Err(TransportFailure::Fatal(msg)) => {
                    return Err(BackendError::Protocol(msg));
                }
                Err(TransportFailure::Retryable(msg)) => {
                    last_error = msg;
                    if attempt < self.retry.max_attempts {
                        std::thread::sleep(self.retry.backoff_for(attempt));
                    }
                }
            }
        }
        Ok(ModelOutput {
            transcript_id: transcript_id.to_string(),
            raw_text: String::new(),
            latency_ms: started.elapsed().as_millis() as u64,
            backend_status: BackendStatus::FailedAfterRetries,
            attempt_count: self.retry.max_attempts,
            error: Some(last_error),
        })
    }

    /// Completes a batch with at most `parallelism` requests in flight.
    /// Output order matches input order regardless of completion order, and
    /// a failing item never aborts the rest: protocol errors are folded into
    /// failed outputs.
    pub fn batch_complete(
        &self,
        items: &[(String, PromptBundle)],
        config: &GenerationConfig,
        parallelism: usize,
    ) -> Vec<ModelOutput> {
        assert!(parallelism >= 1, "parallelism must be at least 1");
        if items.is_empty() {
            return Vec::new();
        }
        let results: Vec<Mutex<Option<ModelOutput>>> =
            items.iter().map(|_| Mutex::new(None)).collect();
        let cursor = AtomicU64::new(0);
        let workers = parallelism.min(items.len());

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let idx = cursor.fetch_add(1, Ordering::SeqCst) as usize;
                    if idx >= items.len() {
                        break;
                    }
                    let (transcript_id, bundle) = &items[idx];
                    let output = match self.complete(transcript_id, bundle, config) {
                        Ok(output) => output,
                        Err(e) => ModelOutput {
                            transcript_id: transcript_id.clone(),
                            raw_text: String::new(),
                            latency_ms: 0,
                            backend_status: BackendStatus::FailedAfterRetries,
                            attempt_count: self.retry.max_attempts,
                            error: Some(e.to_string()),
                        },
                    };
                    *results[idx].lock().expect("result slot") = Some(output);
                });
            }
        });

        results
            .into_iter()
            .map(|slot| slot.into_inner().expect("result slot").expect("slot filled"))
            .collect()
    }
}
