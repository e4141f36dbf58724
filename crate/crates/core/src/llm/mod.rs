//! Completion backends behind one interface: an HTTP chat/completions client,
//! a deterministic mock, and a record/replay response cache.

mod cache;
mod http;
mod mock;

pub use cache::{CacheMode, ResponseCache};
pub use http::{HttpBackend, HttpConfig};
pub use mock::{prompt_hash, MockBackend, MockFallback};

use std::sync::{Condvar, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("authentication failed: {0}")]
    AuthError(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("request rejected with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("no cached response for key {0}")]
    CacheMiss(String),
    #[error("response cache: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub model_id: String,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, model_id: impl Into<String>) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            max_tokens: 32,
            temperature: 0.0,
            model_id: model_id.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    /// Raw completion text, untrimmed.
    pub text: String,
    pub latency_ms: u64,
    pub from_cache: bool,
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, LlmError>;
}

/// SHA-256 over a length-prefixed encoding of the request fields, as hex.
pub fn cache_key(req: &CompletionRequest) -> String {
    let mut h = Sha256::new();
    h.update(b"wcnkit-cache-v1\0");
    for field in [req.model_id.as_bytes(), req.prompt.as_bytes()] {
        h.update((field.len() as u64).to_le_bytes());
        h.update(field);
    }
    h.update(req.max_tokens.to_le_bytes());
    h.update(req.temperature.to_bits().to_le_bytes());
    hex::encode(h.finalize())
}

struct InFlight {
    limit: usize,
    busy: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    fn acquire(&self) -> InFlightGuard<'_> {
        let mut busy = self.busy.lock().expect("in-flight lock");
        while *busy >= self.limit {
            busy = self.freed.wait(busy).expect("in-flight lock");
        }
        *busy += 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        *self.0.busy.lock().expect("in-flight lock") -= 1;
        self.0.freed.notify_one();
    }
}

/// A backend plus optional cache, shared by concurrent callers.
pub struct LlmClient {
    backend: Option<Box<dyn CompletionBackend>>,
    cache: Option<ResponseCache>,
    mode: CacheMode,
    in_flight: InFlight,
}

impl LlmClient {
    pub fn new(backend: Box<dyn CompletionBackend>, in_flight: usize) -> Self {
        LlmClient {
            backend: Some(backend),
            cache: None,
            mode: CacheMode::Off,
            in_flight: InFlight {
                limit: in_flight.max(1),
                busy: Mutex::new(0),
                freed: Condvar::new(),
            },
        }
    }

    /// Answers only from `cache`; a miss is an error.
    pub fn replay(cache: ResponseCache, in_flight: usize) -> Self {
        LlmClient {
            backend: None,
            cache: Some(cache),
            mode: CacheMode::Replay,
            in_flight: InFlight {
                limit: in_flight.max(1),
                busy: Mutex::new(0),
                freed: Condvar::new(),
            },
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache, mode: CacheMode) -> Self {
        self.cache = Some(cache);
        self.mode = mode;
        self
    }

    pub fn in_flight_limit(&self) -> usize {
        self.in_flight.limit
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, LlmError> {
        let key = cache_key(req);
        if let (Some(cache), true) = (&self.cache, self.mode != CacheMode::Off) {
            if let Some(text) = cache.get(&key) {
                return Ok(CompletionResult {
                    text,
                    latency_ms: 0,
                    from_cache: true,
                });
            }
            if self.mode == CacheMode::Replay {
                return Err(LlmError::CacheMiss(key));
            }
        }
        let backend = self
            .backend
            .as_ref()
            .ok_or_else(|| LlmError::BackendUnavailable("no backend configured".into()))?;
        let result = {
            let _slot = self.in_flight.acquire();
            let start = Instant::now();
            let mut r = backend.complete(req)?;
            r.latency_ms = start.elapsed().as_millis() as u64;
            r
        };
        if let (Some(cache), CacheMode::ReadWrite) = (&self.cache, self.mode) {
            cache.insert(&key, req, &result.text)?;
        }
        Ok(result)
    }
}
