use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{CompletionBackend, CompletionRequest, CompletionResponse, LlmError};

/// Environment variable holding the API key.
pub const API_KEY_VAR: &str = "ELLM_API_KEY";
/// Environment variable holding the completion endpoint URL.
pub const ENDPOINT_VAR: &str = "ELLM_ENDPOINT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

/// Wire format of a generic completion endpoint. Field names and response
/// pointers can be remapped per provider.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub endpoint: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub model_field: String,
    pub prompt_field: String,
    pub max_tokens_field: String,
    pub temperature_field: String,
    pub logprobs_field: String,
    /// JSON pointer to the completion text in the response.
    pub text_pointer: String,
    /// JSON pointer to a token → log-probability object for the first token.
    pub logprobs_pointer: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            endpoint: "http://127.0.0.1:8080/v1/completions".into(),
            api_key: None,
            model_field: "model".into(),
            prompt_field: "prompt".into(),
            max_tokens_field: "max_tokens".into(),
            temperature_field: "temperature".into(),
            logprobs_field: "logprobs".into(),
            text_pointer: "/choices/0/text".into(),
            logprobs_pointer: "/choices/0/logprobs/top_logprobs/0".into(),
            timeout: Duration::from_secs(60),
            retry: RetryPolicy::default(),
        }
    }
}

impl HttpConfig {
    /// Defaults overridden by the endpoint and key environment variables.
    pub fn from_env() -> Self {
        let mut cfg = HttpConfig::default();
        if let Ok(e) = std::env::var(ENDPOINT_VAR) {
            cfg.endpoint = e;
        }
        cfg.api_key = std::env::var(API_KEY_VAR).ok().filter(|k| !k.is_empty());
        cfg
    }
}

pub struct HttpBackend {
    cfg: HttpConfig,
    agent: ureq::Agent,
    attempts: u64,
}

enum Attempt {
    Done(CompletionResponse),
    Retry { message: String, wait: Option<Duration> },
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(cfg.timeout))
            .build()
            .into();
        HttpBackend {
            cfg,
            agent,
            attempts: 0,
        }
    }

    /// HTTP round trips made so far, retries included.
    pub fn attempts(&self) -> u64 {
        self.attempts
    }

    fn body(&self, req: &CompletionRequest) -> Value {
        let mut m = Map::new();
        m.insert(self.cfg.model_field.clone(), json!(req.model));
        m.insert(self.cfg.prompt_field.clone(), json!(req.prompt));
        m.insert(self.cfg.max_tokens_field.clone(), json!(req.max_tokens));
        m.insert(self.cfg.temperature_field.clone(), json!(req.temperature));
        if req.logprob_count > 0 {
            m.insert(self.cfg.logprobs_field.clone(), json!(req.logprob_count));
        }
        Value::Object(m)
    }

    fn parse(&self, v: &Value) -> Result<CompletionResponse, LlmError> {
        let text = v
            .pointer(&self.cfg.text_pointer)
            .and_then(Value::as_str)
            .ok_or_else(|| LlmError::Protocol(format!("no text at {}", self.cfg.text_pointer)))?
            .to_string();
        let mut first_token_logprobs = BTreeMap::new();
        if let Some(obj) = v.pointer(&self.cfg.logprobs_pointer).and_then(Value::as_object) {
            for (tok, lp) in obj {
                let lp = lp
                    .as_f64()
                    .ok_or_else(|| LlmError::Protocol(format!("non-numeric logprob for `{tok}`")))?;
                first_token_logprobs.insert(tok.clone(), lp);
            }
        }
        Ok(CompletionResponse {
            text,
            first_token_logprobs,
        })
    }

    fn attempt(&mut self, body: &Value) -> Result<Attempt, LlmError> {
        self.attempts += 1;
        let mut request = self.agent.post(&self.cfg.endpoint);
        if let Some(key) = &self.cfg.api_key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = match request.send_json(body) {
            Ok(r) => r,
            Err(e) => {
                return Ok(Attempt::Retry {
                    message: e.to_string(),
                    wait: None,
                })
            }
        };
        let status = response.status().as_u16();
        let retry_after = response
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        if status == 429 || status >= 500 {
            let text = response.body_mut().read_to_string().unwrap_or_default();
            return Ok(Attempt::Retry {
                message: format!("HTTP {status}: {text}"),
                wait: retry_after,
            });
        }
        if !(200..300).contains(&status) {
            let body = response.body_mut().read_to_string().unwrap_or_default();
            return Err(LlmError::Http { status, body });
        }
        let value: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::Protocol(e.to_string()))?;
        Ok(Attempt::Done(self.parse(&value)?))
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&mut self, req: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        let body = self.body(req);
        let attempts = self.cfg.retry.attempts.max(1);
        let mut last = String::new();
        for i in 0..attempts {
            match self.attempt(&body)? {
                Attempt::Done(r) => return Ok(r),
                Attempt::Retry { message, wait } => {
                    log::warn!("completion attempt {} failed: {message}", i + 1);
                    last = message;
                    if i + 1 < attempts {
                        let backoff = self.cfg.retry.base_delay * 2u32.pow(i);
                        std::thread::sleep(wait.unwrap_or(backoff).max(backoff));
                    }
                }
            }
        }
        Err(LlmError::Transport {
            attempts,
            message: last,
        })
    }
}
