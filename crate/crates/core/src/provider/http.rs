//! HTTP chat-completions backend.
//!
//! Speaks the common chat-completions wire shape: `messages` with
//! system/user roles, optional logprobs, `response_format` when JSON is
//! required. The API key comes from an environment variable so secrets
//! stay out of config files. Embeddings use a separate endpoint when
//! configured and otherwise fall back to the local hash embedder.

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::provider::embed::{HashEmbedder, DEFAULT_EMBED_DIM};
use crate::provider::{ChatBackend, ChatRequest, ChatResponse};

pub const DEFAULT_API_KEY_ENV: &str = "FORMAGENT_API_KEY";

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub embed_endpoint: Option<String>,
    pub timeout_secs: u64,
    pub embed_dim: usize,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            endpoint: String::new(),
            model: String::new(),
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            embed_endpoint: None,
            timeout_secs: 60,
            embed_dim: DEFAULT_EMBED_DIM,
        }
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
    fallback_embedder: HashEmbedder,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self> {
        if config.endpoint.is_empty() {
            return Err(Error::Config("http backend needs an endpoint URL".to_string()));
        }
        if config.model.is_empty() {
            return Err(Error::Config("http backend needs a model name".to_string()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(std::time::Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        let fallback_embedder = HashEmbedder::new(config.embed_dim)?;
        Ok(HttpBackend { config, agent, fallback_embedder })
    }

    fn api_key(&self) -> Result<String> {
        std::env::var(&self.config.api_key_env).map_err(|_| {
            Error::Auth(format!(
                "environment variable {} is not set",
                self.config.api_key_env
            ))
        })
    }

    fn post_json(&self, url: &str, body: &Value) -> Result<Value> {
        let key = self.api_key()?;
        let result = self
            .agent
            .post(url)
            .header("authorization", &format!("Bearer {key}"))
            .send_json(body);
        let mut response = match result {
            Ok(r) => r,
            Err(ureq::Error::StatusCode(code)) if code == 401 || code == 403 => {
                return Err(Error::Auth(format!("{url} returned status {code}")))
            }
            Err(ureq::Error::StatusCode(code)) => {
                return Err(Error::Transport(format!("{url} returned status {code}")))
            }
            Err(e) => return Err(Error::Transport(format!("{url}: {e}"))),
        };
        response
            .body_mut()
            .read_json::<Value>()
            .map_err(|e| Error::Transport(format!("{url}: unreadable response body: {e}")))
    }
}

/// Wire body for a chat completion.
pub fn chat_body(request: &ChatRequest, model: &str) -> Value {
    let mut body = json!({
        "model": model,
        "messages": [
            {"role": "system", "content": request.system_prompt},
            {"role": "user", "content": request.user_prompt},
        ],
        "max_tokens": request.max_tokens,
        "temperature": request.temperature,
    });
    if request.want_logprobs {
        body["logprobs"] = json!(true);
    }
    if request.require_json {
        body["response_format"] = json!({"type": "json_object"});
    }
    body
}

/// Extracts text and per-token logprobs from a chat-completions reply.
/// Positive logprobs are clamped to zero.
pub fn parse_chat_response(value: &Value, model: &str) -> Result<ChatResponse> {
    let text = value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| {
            Error::Transport("response lacks choices[0].message.content".to_string())
        })?
        .to_string();
    let token_logprobs = value
        .pointer("/choices/0/logprobs/content")
        .and_then(Value::as_array)
        .map(|items| {
            items
                .iter()
                .filter_map(|item| item.get("logprob").and_then(Value::as_f64))
                .map(|lp| lp.min(0.0))
                .collect::<Vec<f64>>()
        })
        .filter(|v| !v.is_empty());
    Ok(ChatResponse {
        text,
        token_logprobs,
        model_id: model.to_string(),
        cached: false,
    })
}

impl ChatBackend for HttpBackend {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse> {
        let body = chat_body(request, &self.config.model);
        let reply = self.post_json(&self.config.endpoint, &body)?;
        parse_chat_response(&reply, &self.config.model)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        match &self.config.embed_endpoint {
            None => self.fallback_embedder.embed(text),
            Some(url) => {
                let body = json!({"model": self.config.model, "input": text});
                let reply = self.post_json(url, &body)?;
                let vector = reply
                    .pointer("/data/0/embedding")
                    .and_then(Value::as_array)
                    .ok_or_else(|| {
                        Error::Transport("embedding response lacks data[0].embedding".to_string())
                    })?
                    .iter()
                    .filter_map(Value::as_f64)
                    .collect::<Vec<f64>>();
                if vector.is_empty() {
                    return Err(Error::Transport("embedding response is empty".to_string()));
                }
                Ok(vector)
            }
        }
    }

    fn model_id(&self) -> &str {
        &self.config.model
    }
}
