//! Completion client with a content-addressed JSON-lines cache and an
//! offline replay mode.

mod cache;
mod http;

use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cache::{merge_caches, CacheStats, ResponseCache, CACHE_FORMAT_VERSION};
pub use http::{HttpBackend, HttpConfig, RetryPolicy};

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("replay mode cache miss for key {key}")]
    CacheMiss { key: String },
    #[error("cache error: {0}")]
    Cache(String),
    #[error("bad response: {0}")]
    Protocol(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub logprob_count: u32,
}

impl CompletionRequest {
    /// Request with deterministic sampling and a 100-token budget.
    pub fn new(model: impl Into<String>, prompt: impl Into<String>) -> Self {
        CompletionRequest {
            model: model.into(),
            prompt: prompt.into(),
            max_tokens: 100,
            temperature: 0.0,
            logprob_count: 0,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} must be a finite value >= 0",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    /// Log-probabilities of candidate first tokens, all `<= 0`.
    #[serde(default)]
    pub first_token_logprobs: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub response: CompletionResponse,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

/// Serialized form hashed into a cache key; field order is fixed here.
#[derive(Serialize)]
struct CanonicalRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
    logprob_count: u32,
}

/// Hex SHA-256 of the canonical JSON form of `req`.
pub fn cache_key(req: &CompletionRequest) -> String {
    let canonical = CanonicalRequest {
        model: &req.model,
        prompt: &req.prompt,
        max_tokens: req.max_tokens,
        temperature: req.temperature,
        logprob_count: req.logprob_count,
    };
    let bytes = serde_json::to_vec(&canonical).expect("request serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Anything that can answer a completion request.
pub trait CompletionBackend: Send {
    fn complete(&mut self, req: &CompletionRequest) -> Result<CompletionResponse, LlmError>;
}

impl<F> CompletionBackend for F
where
    F: FnMut(&CompletionRequest) -> Result<CompletionResponse, LlmError> + Send,
{
    fn complete(&mut self, req: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        self(req)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    /// Serve hits from the cache and persist every miss.
    Record,
    /// Serve hits only; a miss is an error.
    Replay,
}

/// Cache-fronted client. `network_calls` counts backend invocations.
pub struct LlmClient {
    cache: ResponseCache,
    backend: Option<Box<dyn CompletionBackend>>,
    mode: CacheMode,
    network_calls: u64,
}

impl LlmClient {
    pub fn new(cache: ResponseCache, backend: Box<dyn CompletionBackend>) -> Self {
        LlmClient {
            cache,
            backend: Some(backend),
            mode: CacheMode::Record,
            network_calls: 0,
        }
    }

    pub fn replay(cache: ResponseCache) -> Self {
        LlmClient {
            cache,
            backend: None,
            mode: CacheMode::Replay,
            network_calls: 0,
        }
    }

    pub fn with_mode(mut self, mode: CacheMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    pub fn network_calls(&self) -> u64 {
        self.network_calls
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub fn complete(&mut self, req: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        req.validate()?;
        let key = cache_key(req);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit.response.clone());
        }
        let backend = match (self.mode, self.backend.as_mut()) {
            (CacheMode::Record, Some(b)) => b,
            _ => return Err(LlmError::CacheMiss { key }),
        };
        self.network_calls += 1;
        let response = backend.complete(req)?;
        if let Some((tok, lp)) = response.first_token_logprobs.iter().find(|(_, lp)| **lp > 0.0) {
            return Err(LlmError::Protocol(format!("positive log-probability {lp} for `{tok}`")));
        }
        let created_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        self.cache.insert(CacheEntry {
            key,
            response: response.clone(),
            created_at,
        })?;
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn echo() -> Box<dyn CompletionBackend> {
        Box::new(|r: &CompletionRequest| {
            Ok(CompletionResponse {
                text: format!("- {}", r.prompt),
                first_token_logprobs: BTreeMap::new(),
            })
        })
    }

    #[test]
    fn key_is_64_hex_and_sensitive() {
        let r = CompletionRequest::new("m", "hello");
        let k = cache_key(&r);
        assert_eq!(k.len(), 64);
        assert!(k.chars().all(|c| c.is_ascii_hexdigit()));
        assert_eq!(k, cache_key(&r.clone()));
        let mut t = r.clone();
        t.temperature = 0.7;
        assert_ne!(cache_key(&t), k);
        assert_ne!(cache_key(&CompletionRequest::new("m", "hellp")), k);
    }

    #[test]
    fn field_order_does_not_matter() {
        let a = CompletionRequest::new("m", "p");
        let b = CompletionRequest {
            logprob_count: 0,
            temperature: 0.0,
            max_tokens: 100,
            prompt: "p".into(),
            model: "m".into(),
        };
        assert_eq!(cache_key(&a), cache_key(&b));
        let from_json: CompletionRequest = serde_json::from_str(
            r#"{"temperature":0.0,"prompt":"p","logprob_count":0,"model":"m","max_tokens":100}"#,
        )
        .unwrap();
        assert_eq!(cache_key(&from_json), cache_key(&a));
    }

    #[test]
    fn second_call_is_a_hit() {
        let mut c = LlmClient::new(ResponseCache::in_memory(), echo());
        let r = CompletionRequest::new("m", "x");
        let a = c.complete(&r).unwrap();
        assert_eq!(c.network_calls(), 1);
        let b = c.complete(&r).unwrap();
        assert_eq!(c.network_calls(), 1);
        assert_eq!(a, b);
        assert_eq!(c.cache().len(), 1);
    }

    #[test]
    fn replay_miss_errors() {
        let mut c = LlmClient::replay(ResponseCache::in_memory());
        let err = c.complete(&CompletionRequest::new("m", "unseen")).unwrap_err();
        assert!(matches!(err, LlmError::CacheMiss { .. }));
        assert_eq!(c.network_calls(), 0);
    }

    #[test]
    fn invalid_requests_rejected() {
        let mut c = LlmClient::new(ResponseCache::in_memory(), echo());
        let mut r = CompletionRequest::new("m", "x");
        r.max_tokens = 0;
        assert!(matches!(c.complete(&r), Err(LlmError::InvalidRequest(_))));
        r.max_tokens = 1;
        r.temperature = -1.0;
        assert!(c.complete(&r).is_err());
    }
}
