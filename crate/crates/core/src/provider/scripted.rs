//! Deterministic playback backend.
//!
//! A script is an ordered list of entries, each a match rule plus an
//! ordered reply list. The first entry matching a request serves it; the
//! k-th time that entry sees a given request content hash, it returns
//! the k-th reply (sticking on the last). Keying the invocation counter
//! by (entry, request hash) keeps playback independent across distinct
//! requests, so concurrent page workers cannot steal each other's
//! scripted sequences.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::provider::embed::HashEmbedder;
use crate::provider::{ChatBackend, ChatRequest, ChatResponse};

#[derive(Debug, Clone, PartialEq)]
pub enum MatchRule {
    /// Full request content hash (hex), as produced by `ChatRequest::cache_key`.
    Hash(String),
    /// Exact user prompt.
    Exact(String),
    /// Substring of system + user prompt.
    Contains(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedReply {
    pub text: String,
    pub logprobs: Option<Vec<f64>>,
}

impl ScriptedReply {
    pub fn text(text: impl Into<String>) -> Self {
        ScriptedReply { text: text.into(), logprobs: None }
    }

    /// Positive logprobs are clamped to 0 to keep the response invariant.
    pub fn with_logprobs(mut self, logprobs: Vec<f64>) -> Self {
        self.logprobs = Some(logprobs.into_iter().map(|lp| lp.min(0.0)).collect());
        self
    }
}

impl From<&str> for ScriptedReply {
    fn from(text: &str) -> Self {
        ScriptedReply::text(text)
    }
}

impl From<String> for ScriptedReply {
    fn from(text: String) -> Self {
        ScriptedReply::text(text)
    }
}

#[derive(Debug, Clone)]
pub struct ScriptEntry {
    pub rule: MatchRule,
    pub replies: Vec<ScriptedReply>,
}

pub struct ScriptedBackend {
    model: String,
    entries: Vec<ScriptEntry>,
    counters: Mutex<HashMap<(usize, String), usize>>,
    embedder: HashEmbedder,
}

impl ScriptedBackend {
    pub fn new(model: impl Into<String>) -> Self {
        ScriptedBackend {
            model: model.into(),
            entries: Vec::new(),
            counters: Mutex::new(HashMap::new()),
            embedder: HashEmbedder::default(),
        }
    }

    pub fn add(&mut self, rule: MatchRule, replies: Vec<ScriptedReply>) -> Result<()> {
        if replies.is_empty() {
            return Err(Error::Config("scripted entry needs at least one reply".to_string()));
        }
        self.entries.push(ScriptEntry { rule, replies });
        Ok(())
    }

    pub fn reply_contains(
        mut self,
        pattern: impl Into<String>,
        reply: impl Into<ScriptedReply>,
    ) -> Self {
        self.entries.push(ScriptEntry {
            rule: MatchRule::Contains(pattern.into()),
            replies: vec![reply.into()],
        });
        self
    }

    pub fn reply_contains_seq(
        mut self,
        pattern: impl Into<String>,
        replies: Vec<ScriptedReply>,
    ) -> Self {
        assert!(!replies.is_empty(), "scripted entry needs at least one reply");
        self.entries.push(ScriptEntry { rule: MatchRule::Contains(pattern.into()), replies });
        self
    }

    pub fn reply_exact(
        mut self,
        user_prompt: impl Into<String>,
        reply: impl Into<ScriptedReply>,
    ) -> Self {
        self.entries.push(ScriptEntry {
            rule: MatchRule::Exact(user_prompt.into()),
            replies: vec![reply.into()],
        });
        self
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&raw, &path.display().to_string())
    }

    pub fn from_json(raw: &str, context: &str) -> Result<Self> {
        let file: ScriptFile =
            serde_json::from_str(raw).map_err(|e| Error::parse_json(context, &e))?;
        let mut backend = ScriptedBackend::new(file.model);
        for (i, entry) in file.entries.into_iter().enumerate() {
            let rule = match (entry.hash, entry.exact, entry.contains) {
                (Some(h), None, None) => MatchRule::Hash(h),
                (None, Some(e), None) => MatchRule::Exact(e),
                (None, None, Some(c)) => MatchRule::Contains(c),
                _ => {
                    return Err(Error::Config(format!(
                        "{context}: entry {i} must set exactly one of hash/exact/contains"
                    )))
                }
            };
            let replies = entry
                .replies
                .into_iter()
                .map(|r| match r.logprobs {
                    Some(lps) => ScriptedReply::text(r.text).with_logprobs(lps),
                    None => ScriptedReply::text(r.text),
                })
                .collect::<Vec<_>>();
            if replies.is_empty() {
                return Err(Error::Config(format!(
                    "{context}: entry {i} needs at least one reply"
                )));
            }
            backend.entries.push(ScriptEntry { rule, replies });
        }
        Ok(backend)
    }

    fn find_entry(&self, request: &ChatRequest, content_hash: &str) -> Option<usize> {
        let haystack = request.prompt_text();
        self.entries.iter().position(|e| match &e.rule {
            MatchRule::Hash(h) => h == content_hash,
            MatchRule::Exact(u) => u == &request.user_prompt,
            MatchRule::Contains(c) => haystack.contains(c),
        })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptFile {
    model: String,
    entries: Vec<RawEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    #[serde(default)]
    hash: Option<String>,
    #[serde(default)]
    exact: Option<String>,
    #[serde(default)]
    contains: Option<String>,
    replies: Vec<RawReply>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReply {
    text: String,
    #[serde(default)]
    logprobs: Option<Vec<f64>>,
}

impl ChatBackend for ScriptedBackend {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse> {
        let hash = request.cache_key(&self.model).0;
        let idx = self.find_entry(request, &hash).ok_or_else(|| Error::ScriptedMiss {
            key: format!(
                "{} (user prompt starts {:?})",
                &hash[..12],
                request.user_prompt.chars().take(80).collect::<String>()
            ),
        })?;
        let k = {
            let mut counters = self.counters.lock().expect("counter lock");
            let slot = counters.entry((idx, hash)).or_insert(0);
            let k = *slot;
            *slot += 1;
            k
        };
        let replies = &self.entries[idx].replies;
        let reply = &replies[k.min(replies.len() - 1)];
        Ok(ChatResponse {
            text: reply.text.clone(),
            token_logprobs: reply.logprobs.clone(),
            model_id: self.model.clone(),
            cached: false,
        })
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        self.embedder.embed(text)
    }

    fn model_id(&self) -> &str {
        &self.model
    }
}
