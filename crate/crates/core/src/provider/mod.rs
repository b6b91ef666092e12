//! LLM access layer: one request/response vocabulary, pluggable
//! backends (scripted playback for tests and benchmarks, HTTP for real
//! services), and a client wrapper that adds transport retries, a
//! one-shot corrective retry for malformed JSON, an on-disk response
//! cache, and call accounting.

pub mod cache;
pub mod embed;
pub mod http;
pub mod scripted;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use cache::ResponseCache;
pub use embed::HashEmbedder;
pub use http::HttpBackend;
pub use scripted::{ScriptedBackend, ScriptedReply};

/// Appended to the user prompt when a JSON-constrained reply failed to
/// parse, before the single corrective retry.
pub const JSON_CORRECTIVE_SUFFIX: &str =
    "\n\nYour previous reply was not valid JSON. Respond again with nothing but a single valid JSON value.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub require_json: bool,
    pub max_tokens: u32,
    pub want_logprobs: bool,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn new(system_prompt: impl Into<String>, user_prompt: impl Into<String>) -> Self {
        ChatRequest {
            system_prompt: system_prompt.into(),
            user_prompt: user_prompt.into(),
            require_json: false,
            max_tokens: 4096,
            want_logprobs: false,
            temperature: 0.0,
        }
    }

    pub fn json(mut self) -> Self {
        self.require_json = true;
        self
    }

    pub fn logprobs(mut self) -> Self {
        self.want_logprobs = true;
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn validate(&self, model_cap: u32) -> Result<()> {
        if self.system_prompt.is_empty() || self.user_prompt.is_empty() {
            return Err(Error::Shape("chat request prompts must be non-empty".to_string()));
        }
        if self.max_tokens == 0 {
            return Err(Error::Range("max_tokens must be positive".to_string()));
        }
        if self.max_tokens > model_cap {
            return Err(Error::Range(format!(
                "max_tokens {} exceeds the model cap {model_cap}; truncation is not supported",
                self.max_tokens
            )));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(Error::Range(format!(
                "temperature must be a non-negative real, got {}",
                self.temperature
            )));
        }
        Ok(())
    }

    /// Content hash identifying this request against a model. Logprob
    /// desire is deliberately excluded: it changes response metadata,
    /// not content.
    pub fn cache_key(&self, model_id: &str) -> CacheKey {
        let mut h = Sha256::new();
        for field in [model_id, &self.system_prompt, &self.user_prompt] {
            h.update((field.len() as u64).to_le_bytes());
            h.update(field.as_bytes());
        }
        h.update([self.require_json as u8]);
        h.update(self.max_tokens.to_le_bytes());
        h.update(self.temperature.to_bits().to_le_bytes());
        CacheKey(hex::encode(h.finalize()))
    }

    /// System and user prompt as one searchable text.
    pub fn prompt_text(&self) -> String {
        format!("{}\n{}", self.system_prompt, self.user_prompt)
    }
}

/// Hex content hash of (model, prompts, json flag, token budget,
/// temperature). Stable across runs and processes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey(pub String);

impl std::fmt::Display for CacheKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub token_logprobs: Option<Vec<f64>>,
    pub model_id: String,
    #[serde(default)]
    pub cached: bool,
}

/// Pessimistic per-token logprob assumed when a backend reports none.
pub const DEFAULT_LOGPROB_FALLBACK: f64 = -0.3;

/// Hex SHA-256, used wherever content is identified in caches and
/// traces.
pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

impl ChatResponse {
    /// Token logprobs, or a warned-about constant fallback with one
    /// entry per whitespace token of the reply when the backend gave
    /// none.
    pub fn logprobs_or(&self, fallback: f64) -> Vec<f64> {
        match &self.token_logprobs {
            Some(lps) if !lps.is_empty() => lps.clone(),
            _ => {
                log::warn!(
                    "backend returned no logprobs; assuming {fallback} per token"
                );
                let n = self.text.split_whitespace().count().max(1);
                vec![fallback; n]
            }
        }
    }
}

/// A concrete transport: scripted playback or HTTP. Backends are dumb;
/// retries, caching, and JSON enforcement live in [`LlmClient`].
pub trait ChatBackend: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse>;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
    fn model_id(&self) -> &str;
}

/// What the rest of the engine sees: completions, embeddings, and call
/// accounting, shareable across worker threads.
pub trait Provider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse>;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
    fn model_id(&self) -> String;
    fn stats(&self) -> ProviderStats;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ProviderStats {
    /// complete() calls observed, including ones served from cache.
    pub requests: u64,
    /// Individual backend send attempts (retries count separately).
    pub backend_calls: u64,
    pub cache_hits: u64,
    pub embed_calls: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 3, base_delay_ms: 100 }
    }
}

#[derive(Default)]
struct Counters {
    requests: AtomicU64,
    backend_calls: AtomicU64,
    cache_hits: AtomicU64,
    embed_calls: AtomicU64,
}

/// Backend wrapper adding retries, JSON enforcement, caching, and
/// accounting. Cheap to share: wrap in an [`Arc`] and hand to workers.
pub struct LlmClient {
    backend: Arc<dyn ChatBackend>,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
    model_cap: u32,
    counters: Counters,
}

impl LlmClient {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        LlmClient {
            backend,
            cache: None,
            retry: RetryPolicy::default(),
            model_cap: 16384,
            counters: Counters::default(),
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_model_cap(mut self, cap: u32) -> Self {
        self.model_cap = cap;
        self
    }

    fn send_with_retries(&self, request: &ChatRequest) -> Result<ChatResponse> {
        let attempts = 1 + self.retry.max_retries;
        let mut last_message = String::new();
        for attempt in 1..=attempts {
            self.counters.backend_calls.fetch_add(1, Ordering::Relaxed);
            match self.backend.send(request) {
                Ok(resp) => return Ok(resp),
                Err(e) if e.is_retriable() && attempt < attempts => {
                    last_message = e.to_string();
                    let delay = self.retry.base_delay_ms.saturating_mul(1 << (attempt - 1));
                    log::warn!(
                        "transport attempt {attempt}/{attempts} failed ({last_message}); retrying in {delay} ms"
                    );
                    std::thread::sleep(Duration::from_millis(delay));
                }
                Err(e) if e.is_retriable() => {
                    return Err(Error::ExhaustedRetries {
                        attempts,
                        message: e.to_string(),
                    })
                }
                Err(e) => return Err(e),
            }
        }
        Err(Error::ExhaustedRetries { attempts, message: last_message })
    }
}

impl Provider for LlmClient {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse> {
        request.validate(self.model_cap)?;
        self.counters.requests.fetch_add(1, Ordering::Relaxed);

        let key = request.cache_key(self.backend.model_id());
        if let Some(cache) = &self.cache {
            if let Some(mut hit) = cache.get(&key)? {
                hit.cached = true;
                self.counters.cache_hits.fetch_add(1, Ordering::Relaxed);
                return Ok(hit);
            }
        }

        let mut response = self.send_with_retries(request)?;
        if request.require_json && serde_json::from_str::<serde_json::Value>(&response.text).is_err()
        {
            log::warn!("reply violated the JSON constraint; sending one corrective retry");
            let mut corrected = request.clone();
            corrected.user_prompt.push_str(JSON_CORRECTIVE_SUFFIX);
            response = self.send_with_retries(&corrected)?;
            if let Err(e) = serde_json::from_str::<serde_json::Value>(&response.text) {
                return Err(Error::MalformedReply(e.to_string()));
            }
        }

        if let Some(cache) = &self.cache {
            let mut at_rest = response.clone();
            at_rest.cached = false;
            cache.put(&key, &at_rest)?;
        }
        Ok(response)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        self.counters.embed_calls.fetch_add(1, Ordering::Relaxed);
        let attempts = 1 + self.retry.max_retries;
        for attempt in 1..=attempts {
            match self.backend.embed(text) {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retriable() && attempt < attempts => {
                    let delay = self.retry.base_delay_ms.saturating_mul(1 << (attempt - 1));
                    log::warn!("embed attempt {attempt} failed ({e}); retrying in {delay} ms");
                    std::thread::sleep(Duration::from_millis(delay));
                }
                Err(e) if e.is_retriable() => {
                    return Err(Error::ExhaustedRetries { attempts, message: e.to_string() })
                }
                Err(e) => return Err(e),
            }
        }
        unreachable!("retry loop always returns");
    }

    fn model_id(&self) -> String {
        self.backend.model_id().to_string()
    }

    fn stats(&self) -> ProviderStats {
        ProviderStats {
            requests: self.counters.requests.load(Ordering::Relaxed),
            backend_calls: self.counters.backend_calls.load(Ordering::Relaxed),
            cache_hits: self.counters.cache_hits.load(Ordering::Relaxed),
            embed_calls: self.counters.embed_calls.load(Ordering::Relaxed),
        }
    }
}
