//! One JSON file configures the whole run: provider backend, episode
//! limits, policy choice, judge weights, and pipeline knobs. Unknown
//! keys are rejected so a typo never silently falls back to a default.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::classify::DEFAULT_CLASS_THRESHOLD_PCT;
use crate::env::{EnvConfig, EnvVariant};
use crate::error::{Error, Result};
use crate::metaprompt::{DriverAssets, MetaPrompter};
use crate::metrics::judge::EnhancedWeights;
use crate::pipeline::{PipelineSettings, DEFAULT_EXTRACT_ACTOR, DEFAULT_SCHEMA_ACTOR};
use crate::policy::PolicySpec;
use crate::provider::http::{HttpBackend, HttpConfig};
use crate::provider::{
    sha256_hex, ChatBackend, LlmClient, ResponseCache, RetryPolicy, ScriptedBackend,
    DEFAULT_LOGPROB_FALLBACK,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Scripted,
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub backend: BackendKind,
    /// Script file for the scripted backend (its model id lives in the
    /// file).
    pub script_path: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub embed_endpoint: Option<String>,
    pub model: String,
    pub api_key_env: String,
    pub cache_dir: Option<PathBuf>,
    pub max_retries: u32,
    pub retry_base_delay_ms: u64,
    pub timeout_secs: u64,
    /// Per-token logprob assumed when a backend omits logprobs.
    pub logprob_fallback: f64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            backend: BackendKind::Scripted,
            script_path: None,
            endpoint: None,
            embed_endpoint: None,
            model: String::new(),
            api_key_env: crate::provider::http::DEFAULT_API_KEY_ENV.to_string(),
            cache_dir: None,
            max_retries: RetryPolicy::default().max_retries,
            retry_base_delay_ms: RetryPolicy::default().base_delay_ms,
            timeout_secs: 60,
            logprob_fallback: DEFAULT_LOGPROB_FALLBACK,
        }
    }
}

impl ProviderConfig {
    pub fn build(&self) -> Result<LlmClient> {
        let backend: Arc<dyn ChatBackend> = match self.backend {
            BackendKind::Scripted => {
                let path = self.script_path.as_ref().ok_or_else(|| {
                    Error::Config("scripted backend needs provider.script_path".to_string())
                })?;
                Arc::new(ScriptedBackend::from_file(path)?)
            }
            BackendKind::Http => {
                let endpoint = self.endpoint.clone().ok_or_else(|| {
                    Error::Config("http backend needs provider.endpoint".to_string())
                })?;
                Arc::new(HttpBackend::new(HttpConfig {
                    endpoint,
                    model: self.model.clone(),
                    api_key_env: self.api_key_env.clone(),
                    embed_endpoint: self.embed_endpoint.clone(),
                    timeout_secs: self.timeout_secs,
                    ..HttpConfig::default()
                })?)
            }
        };
        let mut client = LlmClient::new(backend).with_retry(RetryPolicy {
            max_retries: self.max_retries,
            base_delay_ms: self.retry_base_delay_ms,
        });
        if let Some(dir) = &self.cache_dir {
            client = client.with_cache(ResponseCache::new(dir.clone())?);
        }
        Ok(client)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub provider: ProviderConfig,
    pub env: EnvConfig,
    pub variant: EnvVariant,
    pub policy: PolicySpec,
    /// Driver templates and demonstrations; bundled assets when unset.
    pub assets_dir: Option<PathBuf>,
    pub judge_weights: EnhancedWeights,
    pub class_threshold_pct: f64,
    pub fuzzy_threshold: f64,
    pub seed: u64,
    pub workers: Option<usize>,
    pub trace_timings: bool,
    pub schema_actor: String,
    pub extract_actor: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            provider: ProviderConfig::default(),
            env: EnvConfig::default(),
            variant: EnvVariant::Iterative,
            policy: PolicySpec::default(),
            assets_dir: None,
            judge_weights: EnhancedWeights::default(),
            class_threshold_pct: DEFAULT_CLASS_THRESHOLD_PCT,
            fuzzy_threshold: 0.8,
            seed: 0,
            workers: None,
            trace_timings: false,
            schema_actor: DEFAULT_SCHEMA_ACTOR.to_string(),
            extract_actor: DEFAULT_EXTRACT_ACTOR.to_string(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: RunConfig = serde_json::from_str(&raw)
            .map_err(|e| Error::parse_json(&path.display().to_string(), &e))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.policy.validate()?;
        self.judge_weights.validate()?;
        if !(0.0..=100.0).contains(&self.class_threshold_pct) {
            return Err(Error::Range(format!(
                "class threshold must be within [0, 100], got {}",
                self.class_threshold_pct
            )));
        }
        if !(0.0..=1.0).contains(&self.fuzzy_threshold) {
            return Err(Error::Range(format!(
                "fuzzy threshold must be within [0, 1], got {}",
                self.fuzzy_threshold
            )));
        }
        if let Some(workers) = self.workers {
            if workers == 0 {
                return Err(Error::Range("workers must be at least 1".to_string()));
            }
        }
        Ok(())
    }

    /// Content hash of the effective configuration, recorded in jobs
    /// and trace summaries so outputs can be traced to their settings.
    pub fn snapshot_hash(&self) -> String {
        let rendered = serde_json::to_string(self).expect("config serializes");
        sha256_hex(rendered.as_bytes())
    }

    pub fn build_prompter(&self) -> Result<MetaPrompter> {
        let assets = match &self.assets_dir {
            Some(dir) => DriverAssets::from_dir(dir)?,
            None => DriverAssets::bundled(),
        };
        Ok(MetaPrompter::new(assets))
    }

    pub fn settings(&self) -> PipelineSettings {
        PipelineSettings {
            env: self.env,
            variant: self.variant,
            class_threshold_pct: self.class_threshold_pct,
            seed: self.seed,
            workers: self.workers,
            schema_actor: self.schema_actor.clone(),
            extract_actor: self.extract_actor.clone(),
            logprob_fallback: self.provider.logprob_fallback,
        }
    }
}
