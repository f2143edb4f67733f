//! OpenAI-compatible chat-completions client.

use std::collections::BTreeMap;
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use super::{BackendError, GenReply, GenRequest, Generator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpConfig {
    /// Base URL; `/v1/chat/completions` is appended unless already present.
    pub url: String,
    pub model: String,
    /// Environment variable holding the bearer token, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Model name per training stage label (e.g. `step2`, `isolated1`), for
    /// serving per-stage adapters. Stages not listed use `model`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub stage_models: BTreeMap<String, String>,
}

fn default_retries() -> u32 {
    3
}
fn default_backoff() -> u64 {
    500
}
fn default_timeout() -> u64 {
    120
}
fn default_in_flight() -> usize {
    4
}

impl HttpConfig {
    pub fn new(url: &str, model: &str) -> Self {
        HttpConfig {
            url: url.to_string(),
            model: model.to_string(),
            api_key_env: None,
            retries: default_retries(),
            backoff_ms: default_backoff(),
            timeout_secs: default_timeout(),
            max_in_flight: default_in_flight(),
            stage_models: BTreeMap::new(),
        }
    }

    pub fn model_for(&self, stage: Option<&str>) -> &str {
        stage.and_then(|s| self.stage_models.get(s)).unwrap_or(&self.model)
    }

    pub fn endpoint(&self) -> String {
        let base = self.url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else if base.ends_with("/v1") {
            format!("{base}/chat/completions")
        } else {
            format!("{base}/v1/chat/completions")
        }
    }
}

/// Counting semaphore bounding in-flight requests.
struct Gate {
    used: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

impl Gate {
    fn enter(&self) -> GateGuard<'_> {
        let mut used = self.used.lock().unwrap();
        while *used >= self.limit {
            used = self.freed.wait(used).unwrap();
        }
        *used += 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.used.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

pub struct HttpGenerator {
    cfg: HttpConfig,
    agent: ureq::Agent,
    key: Option<String>,
    gate: Gate,
}

impl HttpGenerator {
    pub fn new(cfg: HttpConfig) -> Result<Self, BackendError> {
        if cfg.url.trim().is_empty() {
            return Err(BackendError::Other("http backend without url".into()));
        }
        let key = match &cfg.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| BackendError::Other(format!("environment variable {var} not set")))?,
            ),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let limit = cfg.max_in_flight.max(1);
        Ok(HttpGenerator {
            cfg,
            agent,
            key,
            gate: Gate {
                used: Mutex::new(0),
                freed: Condvar::new(),
                limit,
            },
        })
    }

    fn once(&self, req: &GenRequest) -> Result<GenReply, BackendError> {
        let body = json!({
            "model": self.cfg.model_for(req.stage.as_deref()),
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let start = Instant::now();
        let mut call = self.agent.post(self.cfg.endpoint());
        if let Some(k) = &self.key {
            call = call.header("Authorization", format!("Bearer {k}"));
        }
        let mut resp = call
            .send_json(&body)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Http { status, body: text });
        }
        parse_completion(&text, start.elapsed())
    }
}

pub(crate) fn parse_completion(body: &str, latency: Duration) -> Result<GenReply, BackendError> {
    let v: Json = serde_json::from_str(body).map_err(|e| BackendError::Protocol(e.to_string()))?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::Protocol("no choices".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Json::as_str)
        .ok_or_else(|| BackendError::Protocol("no message content".into()))?;
    Ok(GenReply {
        text: text.to_string(),
        finish_reason: choice
            .get("finish_reason")
            .and_then(Json::as_str)
            .unwrap_or("unknown")
            .to_string(),
        latency_ms: latency.as_millis() as u64,
    })
}

impl Generator for HttpGenerator {
    fn id(&self) -> String {
        format!("http:{}@{}", self.cfg.model, self.cfg.endpoint())
    }

    fn generate(&self, req: &GenRequest) -> Result<GenReply, BackendError> {
        super::check_length(&req.prompt)?;
        let _slot = self.gate.enter();
        let mut attempt = 0;
        loop {
            match self.once(req) {
                Err(e) if e.is_transient() && attempt < self.cfg.retries => {
                    let wait = self.cfg.backoff_ms.saturating_mul(1 << attempt.min(16));
                    tracing::warn!(attempt, error = %e, wait_ms = wait, "retrying generation request");
                    thread::sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_normalization() {
        assert_eq!(
            HttpConfig::new("http://h:8000", "m").endpoint(),
            "http://h:8000/v1/chat/completions"
        );
        assert_eq!(
            HttpConfig::new("http://h:8000/v1/", "m").endpoint(),
            "http://h:8000/v1/chat/completions"
        );
        assert_eq!(
            HttpConfig::new("http://h/v1/chat/completions", "m").endpoint(),
            "http://h/v1/chat/completions"
        );
    }

    #[test]
    fn completion_parsing() {
        let r = parse_completion(
            r#"{"choices":[{"message":{"role":"assistant","content":"head : age"},"finish_reason":"stop"}]}"#,
            Duration::from_millis(3),
        )
        .unwrap();
        assert_eq!(r.text, "head : age");
        assert_eq!(r.finish_reason, "stop");
        assert!(parse_completion("{}", Duration::ZERO).is_err());
    }
}
