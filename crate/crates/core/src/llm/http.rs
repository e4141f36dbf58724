//! Chat/completions-style HTTP backend with bounded retries and a
//! requests-per-minute budget.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{CompletionBackend, CompletionRequest, CompletionResult, LlmError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub base_url: String,
    /// Name of the environment variable holding the API credential.
    pub api_key_env: String,
    pub requests_per_minute: Option<u32>,
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: "http://localhost:8000/v1".into(),
            api_key_env: "WCNKIT_API_KEY".into(),
            requests_per_minute: None,
            max_attempts: 5,
            initial_backoff_ms: 500,
            max_backoff_ms: 30_000,
            timeout_secs: 60,
        }
    }
}

pub struct HttpBackend {
    cfg: HttpConfig,
    client: reqwest::blocking::Client,
    api_key: String,
    next_slot: Mutex<Instant>,
}

enum Outcome {
    Done(String),
    Retry(LlmError, Option<Duration>),
    Fail(LlmError),
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig) -> Result<Self, LlmError> {
        let api_key = std::env::var(&cfg.api_key_env)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| {
                LlmError::AuthError(format!(
                    "environment variable {} is not set",
                    cfg.api_key_env
                ))
            })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs.max(1)))
            .build()
            .map_err(|e| LlmError::BackendUnavailable(e.to_string()))?;
        Ok(HttpBackend {
            cfg,
            client,
            api_key,
            next_slot: Mutex::new(Instant::now()),
        })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'))
    }

    fn wait_for_budget(&self) {
        let Some(rpm) = self.cfg.requests_per_minute.filter(|&r| r > 0) else {
            return;
        };
        let spacing = Duration::from_secs_f64(60.0 / f64::from(rpm));
        let wait = {
            let mut slot = self.next_slot.lock().expect("rate lock");
            let now = Instant::now();
            let start = (*slot).max(now);
            *slot = start + spacing;
            start - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }

    fn backoff(&self, attempt: u32, hint: Option<Duration>) -> Duration {
        let cap = Duration::from_millis(self.cfg.max_backoff_ms);
        let exp = self
            .cfg
            .initial_backoff_ms
            .saturating_mul(1u64 << (attempt - 1).min(20));
        hint.unwrap_or(Duration::from_millis(exp)).min(cap)
    }

    fn attempt(&self, req: &CompletionRequest) -> Outcome {
        let body = json!({
            "model": req.model_id,
            "messages": [{"role": "user", "content": req.prompt}],
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
        });
        let resp = match self
            .client
            .post(self.endpoint())
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
        {
            Ok(r) => r,
            Err(e) => return Outcome::Retry(LlmError::BackendUnavailable(e.to_string()), None),
        };
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|s| s.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = resp.text().unwrap_or_default();
        match status {
            200..=299 => match extract_completion(&text) {
                Ok(t) => Outcome::Done(t),
                Err(e) => Outcome::Fail(e),
            },
            401 | 403 => Outcome::Fail(LlmError::AuthError(format!("status {status}"))),
            429 => Outcome::Retry(LlmError::RateLimited { attempts: 0 }, retry_after),
            408 | 500..=599 => Outcome::Retry(
                LlmError::BackendUnavailable(format!("status {status}")),
                retry_after,
            ),
            _ => Outcome::Fail(LlmError::Rejected {
                status,
                body: text.chars().take(200).collect(),
            }),
        }
    }
}

fn extract_completion(body: &str) -> Result<String, LlmError> {
    let v: Value =
        serde_json::from_str(body).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| LlmError::MalformedResponse("no choices".into()))?;
    choice
        .pointer("/message/content")
        .or_else(|| choice.get("text"))
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::MalformedResponse("first choice has no text".into()))
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, LlmError> {
        let attempts = self.cfg.max_attempts.max(1);
        let mut last = LlmError::BackendUnavailable("no attempt made".into());
        for attempt in 1..=attempts {
            self.wait_for_budget();
            match self.attempt(req) {
                Outcome::Done(text) => {
                    return Ok(CompletionResult {
                        text,
                        latency_ms: 0,
                        from_cache: false,
                    })
                }
                Outcome::Fail(e) => return Err(e),
                Outcome::Retry(e, hint) => {
                    last = e;
                    if attempt < attempts {
                        std::thread::sleep(self.backoff(attempt, hint));
                    }
                }
            }
        }
        Err(match last {
            LlmError::RateLimited { .. } => LlmError::RateLimited { attempts },
            other => other,
        })
    }
}
