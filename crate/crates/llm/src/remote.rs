use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::backend::{Backend, Completion, Semaphore};
use crate::error::{LlmError, Result};
use crate::prompt::Prompt;

/// Connection settings for an OpenAI-compatible chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub supports_images: bool,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    /// Delay before the first retry; doubled for each further one.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

fn default_timeout() -> u64 {
    120
}
fn default_max_tokens() -> u32 {
    2048
}
fn default_concurrency() -> usize {
    4
}
fn default_backoff() -> u64 {
    500
}

impl RemoteConfig {
    pub fn new(base_url: &str, model: &str) -> Self {
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.into(),
            auth_env: None,
            timeout_secs: default_timeout(),
            max_tokens: default_max_tokens(),
            supports_images: false,
            max_concurrency: default_concurrency(),
            backoff_ms: default_backoff(),
        }
    }
}

const RETRIES: usize = 3;

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
    gate: Semaphore,
}

fn is_transient(status: u16) -> bool {
    matches!(status, 408 | 425 | 429 | 500 | 502 | 503 | 504)
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let gate = Semaphore::new(config.max_concurrency);
        Self { config, agent, gate }
    }

    fn body(&self, prompt: &Prompt) -> Value {
        let content = if prompt.attachments.iter().any(|a| a.is_image()) && self.config.supports_images {
            let mut parts = vec![json!({"type": "text", "text": prompt.text})];
            for a in prompt.attachments.iter().filter(|a| a.is_image()) {
                if let Some(bytes) = &a.data {
                    let url = format!("data:{};base64,{}", a.media_type, base64::engine::general_purpose::STANDARD.encode(bytes));
                    parts.push(json!({"type": "image_url", "image_url": {"url": url}}));
                }
            }
            Value::Array(parts)
        } else {
            Value::String(prompt.text.clone())
        };
        json!({
            "model": self.config.model,
            "temperature": 0,
            "max_tokens": self.config.max_tokens,
            "messages": [{"role": "user", "content": content}],
        })
    }

    fn attempt(&self, body: &Value) -> std::result::Result<Value, (bool, String)> {
        let url = format!("{}/chat/completions", self.config.base_url);
        let mut req = self.agent.post(&url);
        if let Some(var) = &self.config.auth_env {
            let token = std::env::var(var).map_err(|_| (false, format!("environment variable {var} is not set")))?;
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send_json(body).map_err(|e| (true, e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err((is_transient(status), format!("HTTP {status}")));
        }
        resp.body_mut().read_json::<Value>().map_err(|e| (false, format!("invalid response body: {e}")))
    }
}

impl Backend for RemoteBackend {
    fn identity(&self) -> String {
        format!("remote:{}@{}", self.config.model, self.config.base_url)
    }

    fn supports_images(&self) -> bool {
        self.config.supports_images
    }

    fn complete_raw(&self, prompt: &Prompt) -> Result<Completion> {
        let _permit = self.gate.acquire();
        let body = self.body(prompt);
        let started = Instant::now();
        let mut last = String::new();
        for attempt in 0..=RETRIES {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(self.config.backoff_ms << (attempt - 1)));
            }
            match self.attempt(&body) {
                Ok(v) => {
                    let text = v["choices"][0]["message"]["content"].as_str().ok_or_else(|| LlmError::BackendUnavailable {
                        backend: self.identity(),
                        reason: "response has no choices[0].message.content".into(),
                    })?;
                    return Ok(Completion {
                        text: text.to_string(),
                        backend: self.identity(),
                        latency_ms: started.elapsed().as_millis() as u64,
                        prompt_tokens: v["usage"]["prompt_tokens"].as_u64(),
                        completion_tokens: v["usage"]["completion_tokens"].as_u64(),
                    });
                }
                Err((transient, msg)) => {
                    last = msg;
                    if !transient {
                        break;
                    }
                }
            }
        }
        Err(LlmError::BackendUnavailable { backend: self.identity(), reason: last })
    }
}
