//! Completion gateway: one blocking `complete` call over pluggable backends,
//! with retries, exponential backoff, a shared rate limiter and bounded
//! batch fan-out.

mod http;
mod mock;
mod rate_limit;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::HttpBackend;
pub use mock::{MockBackend, PromptKind};
pub use rate_limit::RateLimiter;

pub const API_KEY_ENV: &str = "SELFQA_API_KEY";
pub const MAX_RETRIES_LIMIT: u32 = 10;
pub const DEFAULT_TEMPERATURE: f64 = 1.0;
pub const DEFAULT_MAX_TOKENS: u32 = 1024;
const MAX_BACKOFF: Duration = Duration::from_secs(60);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("invalid backend config: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("credential rejected (status {status:?}): {message}")]
    Credential { status: Option<u16>, message: String },
    #[error("transport failed after {attempts} attempt(s) (last status {last_status:?}): {message}")]
    Transport {
        attempts: u32,
        last_status: Option<u16>,
        message: String,
    },
    #[error("backend returned status {status}: {excerpt}")]
    Status { status: u16, excerpt: String },
    #[error("unexpected response shape ({message}): {excerpt}")]
    Protocol { message: String, excerpt: String },
}

/// Outcome of a single backend attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttemptError {
    /// Timeout, connection failure, 408/429 or 5xx: no usable response arrived.
    Retryable { status: Option<u16>, message: String },
    Fatal(GatewayError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<Vec<String>>,
    pub request_tag: String,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            model_id: model_id.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            stop: None,
            request_tag: String::new(),
        }
    }

    pub fn tagged(mut self, tag: impl Into<String>) -> Self {
        self.request_tag = tag.into();
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.prompt.is_empty() {
            return Err(GatewayError::InvalidRequest("prompt is empty".into()));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be at least 1".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} must be finite and non-negative",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency: Duration,
    /// Attempts beyond the first that this call needed.
    pub retries: u32,
}

impl GenerationResponse {
    pub fn truncated(&self) -> bool {
        self.finish_reason == FinishReason::Length
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Mock,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "http" => Ok(BackendKind::Http),
            "mock" => Ok(BackendKind::Mock),
            other => Err(format!("unknown backend {other:?} (expected http or mock)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub max_retries: u32,
    pub backoff_base: Duration,
    /// Requests per second across all callers; `inf` disables limiting.
    pub rate_limit: f64,
    pub timeout: Duration,
    pub seed: u64,
    /// Mock only: probability that a generated item is deliberately malformed.
    pub corruption_rate: f64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self::mock(0)
    }
}

impl BackendConfig {
    pub fn mock(seed: u64) -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint: None,
            api_key_env: API_KEY_ENV.into(),
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
            rate_limit: f64::INFINITY,
            timeout: Duration::from_secs(120),
            seed,
            corruption_rate: 0.0,
        }
    }

    pub fn http(endpoint: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Http,
            endpoint: Some(endpoint.into()),
            rate_limit: 10.0,
            ..Self::mock(0)
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.rate_limit.is_nan() || self.rate_limit <= 0.0 {
            return Err(GatewayError::Config(format!(
                "rate_limit {} must be positive",
                self.rate_limit
            )));
        }
        if self.max_retries > MAX_RETRIES_LIMIT {
            return Err(GatewayError::Config(format!(
                "max_retries {} exceeds {MAX_RETRIES_LIMIT}",
                self.max_retries
            )));
        }
        if !(0.0..=1.0).contains(&self.corruption_rate) {
            return Err(GatewayError::Config(format!(
                "corruption_rate {} must lie in [0, 1]",
                self.corruption_rate
            )));
        }
        if self.kind == BackendKind::Http && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return Err(GatewayError::Config("http backend needs an endpoint".into()));
        }
        Ok(())
    }
}

/// A completion provider. One call is one attempt; retries live in [`Gateway`].
pub trait Backend: Send + Sync {
    fn attempt(&self, request: &GenerationRequest) -> Result<GenerationResponse, AttemptError>;
}

/// Running totals across every call made through a gateway.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub requests: u64,
    pub attempts: u64,
    pub failures: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Default)]
struct UsageCounters {
    requests: AtomicU64,
    attempts: AtomicU64,
    failures: AtomicU64,
    prompt_tokens: AtomicU64,
    completion_tokens: AtomicU64,
}

pub struct Gateway {
    backend: Arc<dyn Backend>,
    limiter: RateLimiter,
    max_retries: u32,
    backoff_base: Duration,
    usage: UsageCounters,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("max_retries", &self.max_retries)
            .field("backoff_base", &self.backoff_base)
            .field("usage", &self.usage())
            .finish_non_exhaustive()
    }
}

impl Gateway {
    /// Builds the backend `config` names. The http backend reads its token
    /// from the environment variable `config.api_key_env`.
    pub fn from_config(config: &BackendConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let backend: Arc<dyn Backend> = match config.kind {
            BackendKind::Mock => Arc::new(MockBackend::new(config.seed, config.corruption_rate)),
            BackendKind::Http => {
                let api_key = std::env::var(&config.api_key_env).ok();
                if api_key.is_none() {
                    log::warn!(
                        "{} is not set; sending requests without an Authorization header",
                        config.api_key_env
                    );
                }
                Arc::new(HttpBackend::new(
                    config.endpoint.clone().unwrap_or_default(),
                    api_key,
                    config.timeout,
                )?)
            }
        };
        Self::with_backend(backend, config)
    }

    /// Wraps an existing backend with `config`'s retry and rate-limit policy.
    pub fn with_backend(backend: Arc<dyn Backend>, config: &BackendConfig) -> Result<Self, GatewayError> {
        if config.rate_limit.is_nan() || config.rate_limit <= 0.0 {
            return Err(GatewayError::Config("rate_limit must be positive".into()));
        }
        if config.max_retries > MAX_RETRIES_LIMIT {
            return Err(GatewayError::Config(format!(
                "max_retries {} exceeds {MAX_RETRIES_LIMIT}",
                config.max_retries
            )));
        }
        Ok(Self {
            backend,
            limiter: RateLimiter::new(config.rate_limit),
            max_retries: config.max_retries,
            backoff_base: config.backoff_base,
            usage: UsageCounters::default(),
        })
    }

    pub fn usage(&self) -> Usage {
        Usage {
            requests: self.usage.requests.load(Ordering::Relaxed),
            attempts: self.usage.attempts.load(Ordering::Relaxed),
            failures: self.usage.failures.load(Ordering::Relaxed),
            prompt_tokens: self.usage.prompt_tokens.load(Ordering::Relaxed),
            completion_tokens: self.usage.completion_tokens.load(Ordering::Relaxed),
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        self.backoff_base
            .checked_mul(1u32 << attempt.min(16))
            .unwrap_or(MAX_BACKOFF)
            .min(MAX_BACKOFF)
    }

    pub fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, GatewayError> {
        request.validate()?;
        self.usage.requests.fetch_add(1, Ordering::Relaxed);
        let started = Instant::now();
        let mut last_status = None;
        let mut last_message = String::new();
        for attempt in 0..=self.max_retries {
            self.limiter.acquire();
            self.usage.attempts.fetch_add(1, Ordering::Relaxed);
            match self.backend.attempt(request) {
                Ok(mut response) => {
                    response.retries = attempt;
                    response.latency = started.elapsed();
                    self.usage
                        .prompt_tokens
                        .fetch_add(response.prompt_tokens, Ordering::Relaxed);
                    self.usage
                        .completion_tokens
                        .fetch_add(response.completion_tokens, Ordering::Relaxed);
                    return Ok(response);
                }
                Err(AttemptError::Fatal(err)) => {
                    self.usage.failures.fetch_add(1, Ordering::Relaxed);
                    return Err(err);
                }
                Err(AttemptError::Retryable { status, message }) => {
                    log::debug!(
                        "attempt {} for {:?} failed: {message}",
                        attempt + 1,
                        request.request_tag
                    );
                    last_status = status;
                    last_message = message;
                    if attempt < self.max_retries {
                        thread::sleep(self.backoff(attempt));
                    }
                }
            }
        }
        self.usage.failures.fetch_add(1, Ordering::Relaxed);
        Err(GatewayError::Transport {
            attempts: self.max_retries + 1,
            last_status,
            message: last_message,
        })
    }

    /// Runs `requests` with at most `concurrency` in flight. Slot `i` of the
    /// result always belongs to `requests[i]`; failures stay in their slot.
    pub fn complete_batch(
        &self,
        requests: &[GenerationRequest],
        concurrency: usize,
    ) -> Vec<Result<GenerationResponse, GatewayError>> {
        let slots: Vec<Mutex<Option<Result<GenerationResponse, GatewayError>>>> =
            requests.iter().map(|_| Mutex::new(None)).collect();
        let next = std::sync::atomic::AtomicUsize::new(0);
        let workers = concurrency.max(1).min(requests.len());
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= requests.len() {
                        break;
                    }
                    let result = self.complete(&requests[i]);
                    *slots[i].lock().expect("slot lock") = Some(result);
                });
            }
        });
        slots
            .into_iter()
            .map(|slot| {
                slot.into_inner()
                    .expect("slot lock")
                    .expect("every slot is filled")
            })
            .collect()
    }
}

/// One-shot completion through a gateway built from `config`.
pub fn complete(
    request: &GenerationRequest,
    config: &BackendConfig,
) -> Result<GenerationResponse, GatewayError> {
    Gateway::from_config(config)?.complete(request)
}

/// Batch completion through a gateway built from `config`. A config error
/// fills every slot.
pub fn complete_batch(
    requests: &[GenerationRequest],
    config: &BackendConfig,
    concurrency: usize,
) -> Vec<Result<GenerationResponse, GatewayError>> {
    match Gateway::from_config(config) {
        Ok(gateway) => gateway.complete_batch(requests, concurrency),
        Err(err) => requests.iter().map(|_| Err(err.clone())).collect(),
    }
}

pub(crate) fn excerpt(body: &str) -> String {
    const LIMIT: usize = 200;
    match body.char_indices().nth(LIMIT) {
        Some((cut, _)) => format!("{}...", &body[..cut]),
        None => body.to_string(),
    }
}
