//! Model access: providers, retrying submission, reply parsing and edit
//! application.

pub mod apply;
pub mod edits;
pub mod provider;

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use apply::{apply_edits, EditConflict};
pub use edits::{parse_edits, Edit, EditSet, ParseMode, ParseNote, ParsedReply, ReplySource};
pub use provider::{HttpProvider, MockProvider, Provider, Transport, TransportReply, UreqTransport};

use crate::promptgen::{estimate_tokens, PromptBundle};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("provider unavailable after {attempts} attempt(s): {last}")]
    ProviderUnavailable { attempts: u32, last: String },
    #[error("authentication failed: {0}")]
    AuthError(String),
    #[error("prompt of ~{tokens} tokens exceeds the provider limit of {limit}")]
    BudgetExceeded { tokens: usize, limit: usize },
    /// A failure worth retrying.
    #[error("transient failure: {0}")]
    Transient(String),
    #[error("no scripted reply for target `{0}`")]
    NoScript(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    /// First backoff delay; doubled on every retry.
    pub backoff_ms: u64,
    pub context_limit_tokens: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            endpoint: "http://localhost:8080/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            token_env: "REFINER_API_TOKEN".into(),
            timeout_secs: 60,
            max_retries: 3,
            backoff_ms: 500,
            context_limit_tokens: 128_000,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.timeout_secs == 0 {
            return Err("timeout_secs must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub target_id: String,
    pub local_id: String,
    pub prompt: String,
}

impl ChatRequest {
    /// The bundle text, followed by violation feedback from an earlier attempt.
    pub fn from_bundle(bundle: &PromptBundle, feedback: Option<&str>) -> Self {
        let mut prompt = bundle.to_text();
        if let Some(fb) = feedback.filter(|f| !f.is_empty()) {
            prompt.push_str("\n### Feedback on your previous answer\n");
            prompt.push_str(fb);
            prompt.push('\n');
        }
        ChatRequest { target_id: bundle.target.id(), local_id: bundle.target.local_id(), prompt }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseMeta {
    pub model: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResponse {
    pub text: String,
    pub meta: ResponseMeta,
}

/// Sends a request, retrying transient failures with exponential backoff.
pub fn submit(request: &ChatRequest, provider: &dyn Provider, config: &ProviderConfig) -> Result<RawResponse, LlmError> {
    let tokens = estimate_tokens(&request.prompt);
    if tokens > config.context_limit_tokens {
        return Err(LlmError::BudgetExceeded { tokens, limit: config.context_limit_tokens });
    }
    let started = Instant::now();
    let mut delay = Duration::from_millis(config.backoff_ms);
    let mut attempt = 0;
    loop {
        attempt += 1;
        match provider.complete(request) {
            Ok(mut resp) => {
                resp.meta.attempts = attempt;
                if resp.meta.latency_ms == 0 {
                    resp.meta.latency_ms = started.elapsed().as_millis() as u64;
                }
                return Ok(resp);
            }
            Err(LlmError::Transient(msg)) => {
                log::warn!("attempt {attempt} for {} failed: {msg}", request.target_id);
                if attempt > config.max_retries {
                    return Err(LlmError::ProviderUnavailable { attempts: attempt, last: msg });
                }
                thread::sleep(delay);
                delay = delay.saturating_mul(2);
            }
            Err(other) => return Err(other),
        }
    }
}

/// Caps concurrent requests and spaces out their starts.
#[derive(Debug)]
pub struct Throttle {
    max_in_flight: usize,
    min_interval: Duration,
    state: Mutex<ThrottleState>,
    freed: Condvar,
}

#[derive(Debug)]
struct ThrottleState {
    in_flight: usize,
    next_start: Instant,
}

pub struct Permit<'a> {
    throttle: &'a Throttle,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut st = self.throttle.state.lock().expect("throttle lock");
        st.in_flight -= 1;
        self.throttle.freed.notify_one();
    }
}

impl Throttle {
    pub fn new(max_in_flight: usize, requests_per_second: f64) -> Self {
        let min_interval = if requests_per_second > 0.0 {
            Duration::from_secs_f64(1.0 / requests_per_second)
        } else {
            Duration::ZERO
        };
        Throttle {
            max_in_flight: max_in_flight.max(1),
            min_interval,
            state: Mutex::new(ThrottleState { in_flight: 0, next_start: Instant::now() }),
            freed: Condvar::new(),
        }
    }

    pub fn unlimited() -> Self {
        Throttle::new(usize::MAX, 0.0)
    }

    /// Blocks until a slot is free and the rate allows another start.
    pub fn acquire(&self) -> Permit<'_> {
        let mut st = self.state.lock().expect("throttle lock");
        while st.in_flight >= self.max_in_flight {
            st = self.freed.wait(st).expect("throttle lock");
        }
        st.in_flight += 1;
        let now = Instant::now();
        let start = st.next_start.max(now);
        st.next_start = start + self.min_interval;
        drop(st);
        if start > now {
            thread::sleep(start - now);
        }
        Permit { throttle: self }
    }

    pub fn in_flight(&self) -> usize {
        self.state.lock().expect("throttle lock").in_flight
    }
}

/// Replaces every occurrence of `secret` in `text`.
pub fn redact(text: &str, secret: &str) -> String {
    if secret.is_empty() {
        return text.to_string();
    }
    text.replace(secret, "[REDACTED]")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, AtomicUsize, Ordering};
    use std::sync::Arc;

    struct Flaky {
        failures: u32,
        calls: AtomicU32,
    }

    impl Provider for Flaky {
        fn name(&self) -> &str {
            "flaky"
        }

        fn complete(&self, _: &ChatRequest) -> Result<RawResponse, LlmError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(LlmError::Transient(format!("fault {n}")))
            } else {
                Ok(RawResponse { text: "ok".into(), meta: ResponseMeta::default() })
            }
        }
    }

    fn req() -> ChatRequest {
        ChatRequest { target_id: "u/type:x".into(), local_id: "type:x".into(), prompt: "hello".into() }
    }

    fn cfg(retries: u32) -> ProviderConfig {
        ProviderConfig { max_retries: retries, backoff_ms: 0, ..Default::default() }
    }

    #[test]
    fn transient_failures_are_retried() {
        let p = Flaky { failures: 2, calls: AtomicU32::new(0) };
        let r = submit(&req(), &p, &cfg(3)).unwrap();
        assert_eq!((r.text.as_str(), r.meta.attempts), ("ok", 3));
    }

    #[test]
    fn retries_exhausted() {
        let p = Flaky { failures: 10, calls: AtomicU32::new(0) };
        let err = submit(&req(), &p, &cfg(2)).unwrap_err();
        assert_eq!(err, LlmError::ProviderUnavailable { attempts: 3, last: "fault 2".into() });
        assert_eq!(p.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn oversized_prompt_is_refused_before_sending() {
        let p = Flaky { failures: 0, calls: AtomicU32::new(0) };
        let big = ChatRequest { prompt: "x".repeat(400), ..req() };
        let err = submit(&big, &p, &ProviderConfig { context_limit_tokens: 50, ..cfg(0) }).unwrap_err();
        assert_eq!(err, LlmError::BudgetExceeded { tokens: 100, limit: 50 });
        assert_eq!(p.calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn throttle_caps_in_flight() {
        let t = Arc::new(Throttle::new(2, 0.0));
        let peak = Arc::new(AtomicUsize::new(0));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let (t, peak) = (t.clone(), peak.clone());
                thread::spawn(move || {
                    let _p = t.acquire();
                    peak.fetch_max(t.in_flight(), Ordering::SeqCst);
                    thread::sleep(Duration::from_millis(5));
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
        assert_eq!(t.in_flight(), 0);
    }

    #[test]
    fn throttle_spaces_starts() {
        let t = Throttle::new(4, 200.0);
        let start = Instant::now();
        for _ in 0..5 {
            drop(t.acquire());
        }
        assert!(start.elapsed() >= Duration::from_millis(19));
    }

    #[test]
    fn redaction() {
        assert_eq!(redact("Bearer sk-123 failed", "sk-123"), "Bearer [REDACTED] failed");
        assert_eq!(redact("abc", ""), "abc");
    }
}
