//! Completion interface over three interchangeable backends: a live
//! chat-completions endpoint, a deterministic scripted oracle, and a
//! record/replay cache.

mod cache;
mod live;
mod scripted;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{cache_key, CacheRecord, ReplayCache};
pub use live::{
    chat_request_body, extract_reply, send_with_retry, HttpReply, LiveBackend, ReqwestTransport,
    Transport, API_BASE_ENV, API_KEY_ENV,
};
pub use scripted::{follow_probability, oracle_draw, parse_oracle_prompt, scripted_reply, OraclePrompt};

pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;
pub const DEFAULT_MAX_REPLY_TOKENS: u32 = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub model_id: String,
    pub max_reply_tokens: u32,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, temperature: f64, model_id: impl Into<String>) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            temperature,
            model_id: model_id.into(),
            max_reply_tokens: DEFAULT_MAX_REPLY_TOKENS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendKind {
    /// `endpoint_url` is the API base; the key is read from the named
    /// environment variable when the client is built.
    Live { endpoint_url: String, api_key_env: String },
    Scripted { seed: u64 },
    Replay {
        cache_path: PathBuf,
        fallback: Option<Box<BackendKind>>,
    },
}

impl BackendKind {
    /// Live backend configured from `GABM_API_BASE`, keyed by `GABM_API_KEY`.
    pub fn live_from_env() -> Result<Self, LlmError> {
        let endpoint_url = std::env::var(API_BASE_ENV)
            .map_err(|_| LlmError::Config(format!("{API_BASE_ENV} is not set")))?;
        Ok(BackendKind::Live {
            endpoint_url,
            api_key_env: API_KEY_ENV.to_string(),
        })
    }
}

/// Exponential backoff: attempt `k` (1-based) that fails is followed by a
/// wait of `base_delay * backoff_factor^(k-1)`, capped at `max_delay`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub backoff_factor: f64,
    pub max_delay: Duration,
    pub retryable_statuses: BTreeSet<u16>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 6,
            base_delay: Duration::from_secs(2),
            backoff_factor: 2.0,
            max_delay: Duration::from_secs(60),
            retryable_statuses: [429, 500, 502, 503].into_iter().collect(),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = self.backoff_factor.max(1.0).powi(attempt.saturating_sub(1) as i32);
        let secs = self.base_delay.as_secs_f64() * factor;
        if !secs.is_finite() || secs >= self.max_delay.as_secs_f64() {
            self.max_delay
        } else {
            Duration::from_secs_f64(secs)
        }
    }

    pub fn is_retryable(&self, status: u16) -> bool {
        self.retryable_statuses.contains(&status)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("no cached reply for key {0}")]
    CacheMiss(String),
    #[error("scripted oracle cannot read prompt: {0}")]
    OracleParse(String),
    #[error("replay cache error: {0}")]
    Cache(String),
    #[error("backend configuration error: {0}")]
    Config(String),
}

/// Counting semaphore bounding in-flight completions.
#[derive(Debug)]
struct Gate {
    available: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(limit: usize) -> Self {
        Gate {
            available: Mutex::new(limit.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut available = self.available.lock().unwrap();
        while *available == 0 {
            available = self.freed.wait(available).unwrap();
        }
        *available -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap() += 1;
        self.0.freed.notify_one();
    }
}

enum Backend {
    Live(LiveBackend),
    Scripted { seed: u64 },
    Replay {
        cache: ReplayCache,
        fallback: Option<Box<Backend>>,
    },
}

impl Backend {
    fn build(kind: &BackendKind, policy: &RetryPolicy) -> Result<Self, LlmError> {
        Ok(match kind {
            BackendKind::Live {
                endpoint_url,
                api_key_env,
            } => {
                let key = std::env::var(api_key_env)
                    .map_err(|_| LlmError::Auth(format!("{api_key_env} is not set")))?;
                Backend::Live(LiveBackend::new(endpoint_url, key, policy.clone())?)
            }
            BackendKind::Scripted { seed } => Backend::Scripted { seed: *seed },
            BackendKind::Replay {
                cache_path,
                fallback,
            } => Backend::Replay {
                cache: ReplayCache::open(cache_path)?,
                fallback: fallback
                    .as_deref()
                    .map(|f| Backend::build(f, policy).map(Box::new))
                    .transpose()?,
            },
        })
    }

    fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        match self {
            Backend::Live(live) => live.complete(req),
            Backend::Scripted { seed } => scripted_reply(&req.prompt, *seed),
            Backend::Replay { cache, fallback } => {
                let key = cache_key(req);
                if let Some(reply) = cache.get(&key) {
                    return Ok(reply);
                }
                match fallback {
                    None => Err(LlmError::CacheMiss(key)),
                    Some(fallback) => {
                        let reply = fallback.complete(req)?;
                        cache.insert(req, reply)
                    }
                }
            }
        }
    }
}

/// A shareable completion client. Clones share the backend, the replay
/// cache and the in-flight limit.
#[derive(Clone)]
pub struct LlmClient {
    backend: Arc<Backend>,
    gate: Arc<Gate>,
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &*self.backend {
            Backend::Live(_) => "live",
            Backend::Scripted { .. } => "scripted",
            Backend::Replay { .. } => "replay",
        };
        f.debug_struct("LlmClient").field("backend", &kind).finish()
    }
}

impl LlmClient {
    pub fn new(kind: &BackendKind, policy: &RetryPolicy) -> Result<Self, LlmError> {
        Self::with_limit(kind, policy, DEFAULT_MAX_IN_FLIGHT)
    }

    pub fn with_limit(
        kind: &BackendKind,
        policy: &RetryPolicy,
        max_in_flight: usize,
    ) -> Result<Self, LlmError> {
        Ok(LlmClient {
            backend: Arc::new(Backend::build(kind, policy)?),
            gate: Arc::new(Gate::new(max_in_flight)),
        })
    }

    /// Wraps an already-built live backend, e.g. one using a custom transport.
    pub fn from_live(live: LiveBackend, max_in_flight: usize) -> Self {
        LlmClient {
            backend: Arc::new(Backend::Live(live)),
            gate: Arc::new(Gate::new(max_in_flight)),
        }
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        let _permit = self.gate.acquire();
        self.backend.complete(req)
    }
}

/// One-shot completion against a freshly built backend.
pub fn complete(
    req: &CompletionRequest,
    backend: &BackendKind,
    policy: &RetryPolicy,
) -> Result<String, LlmError> {
    LlmClient::new(backend, policy)?.complete(req)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn delay_schedule() {
        let policy = RetryPolicy {
            base_delay: Duration::from_millis(100),
            backoff_factor: 3.0,
            max_delay: Duration::from_secs(1),
            ..RetryPolicy::default()
        };
        assert_eq!(policy.delay(1), Duration::from_millis(100));
        assert_eq!(policy.delay(2), Duration::from_millis(300));
        assert_eq!(policy.delay(3), Duration::from_millis(900));
        assert_eq!(policy.delay(4), Duration::from_secs(1));
        assert_eq!(policy.delay(400), Duration::from_secs(1));
    }

    #[test]
    fn default_retryable_statuses() {
        let p = RetryPolicy::default();
        for s in [429, 500, 502, 503] {
            assert!(p.is_retryable(s));
        }
        assert!(!p.is_retryable(401));
        assert!(!p.is_retryable(400));
    }

    #[test]
    fn gate_bounds_concurrency() {
        let gate = Gate::new(3);
        let active = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..12 {
                s.spawn(|| {
                    let _p = gate.acquire();
                    let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(5));
                    active.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 3);
        assert!(peak.load(Ordering::SeqCst) >= 1);
    }

    #[test]
    fn replay_without_fallback_misses() {
        let dir = tempfile::tempdir().unwrap();
        let kind = BackendKind::Replay {
            cache_path: dir.path().join("cache.jsonl"),
            fallback: None,
        };
        let req = CompletionRequest::new("hello", 0.0, "m");
        assert!(matches!(
            complete(&req, &kind, &RetryPolicy::default()),
            Err(LlmError::CacheMiss(_))
        ));
        assert!(!dir.path().join("cache.jsonl").exists());
    }

    #[test]
    fn live_without_key_is_auth_error() {
        let kind = BackendKind::Live {
            endpoint_url: "http://127.0.0.1:9".into(),
            api_key_env: "GABM_TEST_KEY_THAT_IS_NEVER_SET".into(),
        };
        assert!(matches!(
            LlmClient::new(&kind, &RetryPolicy::default()),
            Err(LlmError::Auth(_))
        ));
    }
}
