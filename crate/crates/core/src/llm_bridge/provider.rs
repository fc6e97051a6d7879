use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde_json::json;

use super::{redact, ChatRequest, LlmError, ProviderConfig, RawResponse, ResponseMeta};
use crate::promptgen::estimate_tokens;

pub trait Provider: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<RawResponse, LlmError>;
}

/// Offline provider replaying scripted replies per target.
///
/// A scenario maps a target id to a reply sequence. The n-th request for a
/// target gets the n-th reply; the last reply repeats once the sequence runs
/// out. Lookup tries the full id, then the id without its unit prefix, then
/// `*`.
#[derive(Debug, Default)]
pub struct MockProvider {
    scenario: BTreeMap<String, Vec<String>>,
    served: Mutex<HashMap<String, usize>>,
}

impl MockProvider {
    pub fn new(scenario: BTreeMap<String, Vec<String>>) -> Self {
        MockProvider { scenario, served: Mutex::new(HashMap::new()) }
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        Ok(MockProvider::new(serde_json::from_str(text)?))
    }

    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        MockProvider::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    /// Every target gets the same reply sequence.
    pub fn always(replies: &[&str]) -> Self {
        MockProvider::new(BTreeMap::from([("*".to_string(), replies.iter().map(|s| s.to_string()).collect())]))
    }

    pub fn with(mut self, target: &str, replies: &[&str]) -> Self {
        self.scenario.insert(target.to_string(), replies.iter().map(|s| s.to_string()).collect());
        self
    }

    fn script(&self, req: &ChatRequest) -> Option<(&str, &[String])> {
        [req.target_id.as_str(), req.local_id.as_str(), "*"]
            .into_iter()
            .find_map(|k| self.scenario.get_key_value(k).map(|(k, v)| (k.as_str(), v.as_slice())))
    }

    /// Requests served so far for a target id.
    pub fn served(&self, target_id: &str) -> usize {
        self.served.lock().expect("mock lock").get(target_id).copied().unwrap_or(0)
    }
}

impl Provider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, req: &ChatRequest) -> Result<RawResponse, LlmError> {
        let Some((_, replies)) = self.script(req).filter(|(_, r)| !r.is_empty()) else {
            return Err(LlmError::NoScript(req.target_id.clone()));
        };
        let mut served = self.served.lock().expect("mock lock");
        let n = served.entry(req.target_id.clone()).or_default();
        let text = replies[(*n).min(replies.len() - 1)].clone();
        *n += 1;
        let meta = ResponseMeta {
            model: "mock".into(),
            prompt_tokens: estimate_tokens(&req.prompt) as u64,
            completion_tokens: estimate_tokens(&text) as u64,
            latency_ms: 0,
            attempts: 0,
        };
        Ok(RawResponse { text, meta })
    }
}

/// Outcome of one HTTP exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportReply {
    Status(u16, String),
    /// Connection-level failure before a status was received.
    Failed(String),
}

pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, headers: &[(&str, String)], body: &str, timeout: Duration) -> TransportReply;
}

#[derive(Debug, Default)]
pub struct UreqTransport;

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, headers: &[(&str, String)], body: &str, timeout: Duration) -> TransportReply {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        let mut req = agent.post(url).set("Content-Type", "application/json");
        for (k, v) in headers {
            req = req.set(k, v);
        }
        match req.send_string(body) {
            Ok(resp) => {
                let status = resp.status();
                TransportReply::Status(status, resp.into_string().unwrap_or_default())
            }
            Err(ureq::Error::Status(code, resp)) => TransportReply::Status(code, resp.into_string().unwrap_or_default()),
            Err(ureq::Error::Transport(t)) => TransportReply::Failed(t.to_string()),
        }
    }
}

/// Chat-completion provider over HTTP.
pub struct HttpProvider {
    config: ProviderConfig,
    transport: Box<dyn Transport>,
    /// Token read from the environment; never logged.
    token: Option<String>,
}

impl HttpProvider {
    pub fn new(config: ProviderConfig) -> Self {
        HttpProvider::with_transport(config, Box::new(UreqTransport))
    }

    pub fn with_transport(config: ProviderConfig, transport: Box<dyn Transport>) -> Self {
        let token = std::env::var(&config.token_env).ok().filter(|t| !t.is_empty());
        HttpProvider { config, transport, token }
    }

    /// Overrides the token, mainly for tests.
    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }

    fn body(&self, req: &ChatRequest) -> String {
        json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": "You recover types, attributes and function boundaries in decompiled smart contract code."},
                {"role": "user", "content": req.prompt},
            ],
        })
        .to_string()
    }
}

impl Provider for HttpProvider {
    fn name(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, req: &ChatRequest) -> Result<RawResponse, LlmError> {
        let token = self
            .token
            .as_deref()
            .ok_or_else(|| LlmError::AuthError(format!("environment variable {} is not set", self.config.token_env)))?;
        log::debug!("POST {} model={} target={} authorization=[REDACTED]", self.config.endpoint, self.config.model, req.target_id);
        let started = Instant::now();
        let reply = self.transport.post_json(
            &self.config.endpoint,
            &[("Authorization", format!("Bearer {token}"))],
            &self.body(req),
            Duration::from_secs(self.config.timeout_secs),
        );
        let latency_ms = started.elapsed().as_millis() as u64;
        match reply {
            TransportReply::Failed(msg) => Err(LlmError::Transient(redact(&msg, token))),
            TransportReply::Status(401 | 403, _) => Err(LlmError::AuthError(format!("endpoint rejected the credentials from {}", self.config.token_env))),
            TransportReply::Status(code, body) if code == 429 || code >= 500 => {
                Err(LlmError::Transient(format!("HTTP {code}: {}", redact(body.chars().take(200).collect::<String>().as_str(), token))))
            }
            TransportReply::Status(200..=299, body) => {
                let v: serde_json::Value =
                    serde_json::from_str(&body).map_err(|e| LlmError::Transient(format!("invalid response body: {e}")))?;
                let text = v["choices"][0]["message"]["content"]
                    .as_str()
                    .ok_or_else(|| LlmError::Transient("response has no message content".into()))?
                    .to_string();
                let meta = ResponseMeta {
                    model: v["model"].as_str().unwrap_or(&self.config.model).to_string(),
                    prompt_tokens: v["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
                    completion_tokens: v["usage"]["completion_tokens"].as_u64().unwrap_or(0),
                    latency_ms,
                    attempts: 0,
                };
                Ok(RawResponse { text, meta })
            }
            TransportReply::Status(code, body) => Err(LlmError::ProviderUnavailable {
                attempts: 1,
                last: format!("HTTP {code}: {}", redact(body.chars().take(200).collect::<String>().as_str(), token)),
            }),
        }
    }
}
