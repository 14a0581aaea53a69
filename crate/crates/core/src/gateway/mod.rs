//! Chat-completion access with per-task sampling presets, bounded retries,
//! a concurrency cap, and record/replay fixtures.

pub mod fixtures;
pub mod openai;
pub mod synthetic;

use std::fmt;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use fixtures::{record_fixtures, FixtureEntry, FixtureStore};
pub use openai::{OpenAiBackend, OpenAiConfig};
pub use synthetic::SyntheticBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskTag {
    Generation,
    Dialogue,
    Evaluation,
}

impl TaskTag {
    /// `(temperature, top_p, max_tokens)`
    pub fn preset(self) -> (f64, f64, u32) {
        match self {
            TaskTag::Generation => (0.7, 1.0, 512),
            TaskTag::Dialogue => (0.9, 1.0, 1024),
            TaskTag::Evaluation => (0.0, 1.0, 32),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub task_tag: TaskTag,
}

impl ChatRequest {
    pub fn new(task_tag: TaskTag, system_prompt: impl Into<String>, user_prompt: impl Into<String>) -> Self {
        let (temperature, top_p, max_tokens) = task_tag.preset();
        Self {
            system_prompt: system_prompt.into(),
            user_prompt: user_prompt.into(),
            temperature,
            top_p,
            max_tokens,
            task_tag,
        }
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_top_p(mut self, p: f64) -> Self {
        self.top_p = p;
        self
    }

    pub fn with_max_tokens(mut self, n: u32) -> Self {
        self.max_tokens = n;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::InvalidRequest(format!("temperature {}", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(GatewayError::InvalidRequest(format!("top_p {}", self.top_p)));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens 0".into()));
        }
        Ok(())
    }

    /// SHA-256 over the prompt texts and sampling parameters.
    pub fn digest(&self) -> RequestDigest {
        let mut h = Sha256::new();
        for part in [
            self.system_prompt.as_str(),
            self.user_prompt.as_str(),
            &format!("{:?}", self.temperature),
            &format!("{:?}", self.top_p),
            &self.max_tokens.to_string(),
        ] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        RequestDigest(hex::encode(h.finalize()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RequestDigest(pub String);

impl fmt::Display for RequestDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub attempt_count: u8,
    pub fixture_hit: bool,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("endpoint `{endpoint}` failed after {attempts} attempt(s): {message}")]
    Transport {
        endpoint: String,
        attempts: u8,
        message: String,
    },
    #[error("no fixture for endpoint `{endpoint}` request {digest}")]
    FixtureMissing { endpoint: String, digest: RequestDigest },
    #[error("fixture collision for endpoint `{endpoint}` request {digest}: stored response differs")]
    FixtureCollision { endpoint: String, digest: RequestDigest },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    MalformedFixture {
        path: std::path::PathBuf,
        line: usize,
        message: String,
    },
}

/// Failure reported by a backend for one attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendError {
    /// Worth retrying: network trouble, rate limits, server errors.
    Transient(String),
    Fatal(String),
}

pub trait Backend: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u8,
    pub base_delay: Duration,
    pub factor: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_secs(1),
            factor: 4,
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `n + 1`, given `n >= 1` failures so far.
    pub fn delay_after(&self, failures: u8) -> Duration {
        self.base_delay * self.factor.pow(u32::from(failures.saturating_sub(1)))
    }
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Records requested delays without waiting.
#[derive(Default)]
pub struct NoSleep {
    pub requested: Mutex<Vec<Duration>>,
}

impl Sleeper for NoSleep {
    fn sleep(&self, d: Duration) {
        self.requested.lock().expect("sleep log").push(d);
    }
}

/// Counting semaphore bounding in-flight live requests.
pub struct Limiter {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    pub fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.permits.lock().expect("limiter");
        while *n == 0 {
            n = self.cv.wait(n).expect("limiter");
        }
        *n -= 1;
        Permit { limiter: self }
    }
}

pub struct Permit<'a> {
    limiter: &'a Limiter,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.limiter.permits.lock().expect("limiter") += 1;
        self.limiter.cv.notify_one();
    }
}

#[derive(Clone)]
enum Source {
    Live(Arc<dyn Backend>),
    Replay(Arc<FixtureStore>),
}

/// One named endpoint. Cheap to clone; clones share the limiter and stores.
#[derive(Clone)]
pub struct Gateway {
    endpoint: String,
    source: Source,
    retry: RetryPolicy,
    sleeper: Arc<dyn Sleeper>,
    limiter: Arc<Limiter>,
    recorder: Option<Arc<FixtureStore>>,
}

impl Gateway {
    pub fn live(endpoint: impl Into<String>, backend: Arc<dyn Backend>) -> Self {
        Self {
            endpoint: endpoint.into(),
            source: Source::Live(backend),
            retry: RetryPolicy::default(),
            sleeper: Arc::new(ThreadSleeper),
            limiter: Arc::new(Limiter::new(4)),
            recorder: None,
        }
    }

    pub fn replay(endpoint: impl Into<String>, store: Arc<FixtureStore>) -> Self {
        Self {
            endpoint: endpoint.into(),
            source: Source::Replay(store),
            retry: RetryPolicy::default(),
            sleeper: Arc::new(ThreadSleeper),
            limiter: Arc::new(Limiter::new(4)),
            recorder: None,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn is_replay(&self) -> bool {
        matches!(self.source, Source::Replay(_))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn with_limiter(mut self, limiter: Arc<Limiter>) -> Self {
        self.limiter = limiter;
        self
    }

    /// Live responses are also written into `store`.
    pub fn recording_into(mut self, store: Arc<FixtureStore>) -> Self {
        self.recorder = Some(store);
        self
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        match &self.source {
            Source::Replay(store) => {
                let digest = request.digest();
                match store.get(&self.endpoint, &digest) {
                    Some(text) => Ok(ChatResponse {
                        text,
                        attempt_count: 1,
                        fixture_hit: true,
                    }),
                    None => Err(GatewayError::FixtureMissing {
                        endpoint: self.endpoint.clone(),
                        digest,
                    }),
                }
            }
            Source::Live(backend) => {
                let _permit = self.limiter.acquire();
                let mut failures = 0u8;
                loop {
                    match backend.send(request) {
                        Ok(text) => {
                            if let Some(store) = &self.recorder {
                                store.insert(&self.endpoint, request, &text)?;
                            }
                            return Ok(ChatResponse {
                                text,
                                attempt_count: failures + 1,
                                fixture_hit: false,
                            });
                        }
                        Err(e) => {
                            failures += 1;
                            let (message, transient) = match e {
                                BackendError::Transient(m) => (m, true),
                                BackendError::Fatal(m) => (m, false),
                            };
                            log::warn!("{}: attempt {failures} failed: {message}", self.endpoint);
                            if !transient || failures >= self.retry.max_attempts {
                                return Err(GatewayError::Transport {
                                    endpoint: self.endpoint.clone(),
                                    attempts: failures,
                                    message,
                                });
                            }
                            self.sleeper.sleep(self.retry.delay_after(failures));
                        }
                    }
                }
            }
        }
    }
}
