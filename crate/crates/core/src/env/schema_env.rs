//! Schema-building episode: drive down generation perplexity and
//! structural complexity by rewriting the schema actor prompt.

use serde_json::{json, Value};

use crate::env::{discounted_total, EnvConfig, PolicyObservation, SchemaState, StepInfo, StepResult, StepTrace};
use crate::error::{Error, Result};
use crate::json::complexity::schema_complexity;
use crate::json::schema::{infer_schema, Schema};
use crate::metaprompt::{MetaPrompter, PromptAction, RefineContext, TaskKind};
use crate::metrics::perplexity;
use crate::provider::{sha256_hex, ChatRequest, Provider, DEFAULT_LOGPROB_FALLBACK};

const SCHEMA_SYSTEM_PROMPT: &str = "You design JSON schemas for form documents. Reply with a \
single JSON schema node and nothing else.";

const SCHEMA_MAX_TOKENS: u32 = 4096;

/// Generation request for one schema attempt. Pure so callers can
/// reproduce the exact prompt.
pub fn schema_request(actor_prompt: &str, page_text: &str) -> ChatRequest {
    let user = format!(
        "{actor_prompt}\n\nPage text:\n{page_text}\n\nReply with one JSON schema node using \
         {{\"kind\": \"object\"|\"array\"|\"string\"|\"number\"|\"boolean\"|\"null\"}} with \
         \"children\" for objects and \"item\" for arrays.",
    );
    ChatRequest::new(SCHEMA_SYSTEM_PROMPT, user)
        .json()
        .logprobs()
        .with_max_tokens(SCHEMA_MAX_TOKENS)
}

/// R = (p_best - p_t) + (c_best - c_t): positive when the combined
/// movement against the pre-step bests is an improvement.
fn schema_reward(best: (f64, f64), current: (f64, f64)) -> f64 {
    (best.0 - current.0) + (best.1 - current.1)
}

/// Episode outcome: the schema at the argmin of p + c.
#[derive(Debug, Clone)]
pub struct SchemaEpisodeResult {
    pub best_schema: Schema,
    pub best_prompt: String,
    pub best_state: SchemaState,
    pub best_step: usize,
    pub total_reward: f64,
    pub steps: usize,
}

pub struct SchemaBuildEnv<'a> {
    config: EnvConfig,
    prompter: &'a MetaPrompter,
    provider: &'a dyn Provider,
    page_text: String,
    prompt: String,
    logprob_fallback: f64,
    started: bool,
    terminated: bool,
    steps: usize,
    non_improvement: u32,
    state: Option<SchemaState>,
    // componentwise minima feed the reward
    best_p: f64,
    best_c: f64,
    // argmin of p + c owns the returned schema, first achiever on ties
    best_sum: f64,
    best_schema: Option<Schema>,
    best_prompt: String,
    best_state: Option<SchemaState>,
    best_step: usize,
    last_schema: Option<Schema>,
    rewards: Vec<f64>,
    trace: Vec<StepTrace>,
}

impl<'a> SchemaBuildEnv<'a> {
    pub fn new(
        config: EnvConfig,
        prompter: &'a MetaPrompter,
        provider: &'a dyn Provider,
        page_text: impl Into<String>,
        initial_prompt: impl Into<String>,
    ) -> Result<Self> {
        config.validate()?;
        let page_text = page_text.into();
        let prompt = initial_prompt.into();
        if page_text.trim().is_empty() || prompt.trim().is_empty() {
            return Err(Error::Shape(
                "schema episodes need non-empty page text and actor prompt".to_string(),
            ));
        }
        Ok(SchemaBuildEnv {
            config,
            prompter,
            provider,
            page_text,
            prompt,
            logprob_fallback: DEFAULT_LOGPROB_FALLBACK,
            started: false,
            terminated: false,
            steps: 0,
            non_improvement: 0,
            state: None,
            best_p: f64::INFINITY,
            best_c: f64::INFINITY,
            best_sum: f64::INFINITY,
            best_schema: None,
            best_prompt: String::new(),
            best_state: None,
            best_step: 0,
            last_schema: None,
            rewards: Vec::new(),
            trace: Vec::new(),
        })
    }

    pub fn with_logprob_fallback(mut self, fallback: f64) -> Self {
        self.logprob_fallback = fallback;
        self
    }

    /// Generates the initial schema and seeds the bests from it.
    pub fn reset(&mut self) -> Result<SchemaState> {
        if self.started {
            return Err(Error::Contract("schema episode was already started".to_string()));
        }
        self.started = true;
        let (state, schema, reply_text) = self.generate()?;
        self.best_p = state.perplexity;
        self.best_c = state.complexity;
        self.best_sum = state.perplexity + state.complexity;
        self.best_schema = Some(schema.clone());
        self.best_prompt = self.prompt.clone();
        self.best_state = Some(state);
        self.best_step = 0;
        self.last_schema = Some(schema);
        self.state = Some(state);
        self.push_trace(None, state, 0.0, &reply_text);
        Ok(state)
    }

    /// Applies a prompt action, regenerates, and rewards movement
    /// against the pre-step bests. Two consecutive non-improving steps
    /// (or the step cap) end the episode.
    pub fn step(&mut self, action: PromptAction) -> Result<StepResult<SchemaState>> {
        if !self.started {
            return Err(Error::Contract("step before reset".to_string()));
        }
        if self.terminated {
            return Err(Error::Contract("step after termination".to_string()));
        }

        let ctx = RefineContext {
            task_kind: TaskKind::SchemaBuild,
            actor_prompt: self.prompt.clone(),
            last_output: self.last_schema.as_ref().map(Schema::to_value),
            reference: Some(Value::String(self.page_text.clone())),
        };
        let revision = self.prompter.apply_action(action, &ctx, self.provider)?;
        self.prompt = revision.after;

        let (state, schema, reply_text) = self.generate()?;
        let reward = schema_reward((self.best_p, self.best_c), (state.perplexity, state.complexity));

        if reward > 0.0 {
            self.non_improvement = 0;
        } else {
            self.non_improvement += 1;
        }
        self.best_p = self.best_p.min(state.perplexity);
        self.best_c = self.best_c.min(state.complexity);
        let sum = state.perplexity + state.complexity;
        if sum < self.best_sum {
            self.best_sum = sum;
            self.best_schema = Some(schema.clone());
            self.best_prompt = self.prompt.clone();
            self.best_state = Some(state);
            self.best_step = self.steps + 1;
        }

        self.steps += 1;
        self.last_schema = Some(schema);
        self.state = Some(state);
        let hit_patience = self.non_improvement >= self.config.non_improvement_threshold;
        self.terminated = hit_patience || self.steps >= self.config.max_steps;
        self.rewards.push(reward);
        self.push_trace(Some(action), state, reward, &reply_text);

        Ok(StepResult {
            state,
            reward,
            terminated: self.terminated,
            info: StepInfo { step: self.steps, n_t: self.non_improvement, plateau: hit_patience },
        })
    }

    fn generate(&self) -> Result<(SchemaState, Schema, String)> {
        let request = schema_request(&self.prompt, &self.page_text);
        let response = self.provider.complete(&request)?;
        let value: Value = serde_json::from_str(&response.text)
            .map_err(|e| Error::parse_json("schema generation reply", &e))?;
        // Wire-format replies parse; anything else is treated as an
        // example document and its shape inferred.
        let schema = Schema::from_value(&value).unwrap_or_else(|_| infer_schema(&value));
        let logprobs = response.logprobs_or(self.logprob_fallback);
        let state = SchemaState {
            perplexity: perplexity(&logprobs)?,
            complexity: schema_complexity(&schema),
        };
        Ok((state, schema, response.text))
    }

    fn push_trace(&mut self, action: Option<PromptAction>, state: SchemaState, reward: f64, reply: &str) {
        self.trace.push(StepTrace {
            step: self.steps,
            action,
            state: json!({"perplexity": state.perplexity, "complexity": state.complexity}),
            reward,
            terminated: self.terminated,
            prompt_hash: sha256_hex(self.prompt.as_bytes()),
            output_hash: sha256_hex(reply.as_bytes()),
            n_t: self.non_improvement,
            plateau: self.non_improvement >= self.config.non_improvement_threshold,
        });
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn state(&self) -> Option<SchemaState> {
        self.state
    }

    pub fn current_prompt(&self) -> &str {
        &self.prompt
    }

    pub fn trace(&self) -> &[StepTrace] {
        &self.trace
    }

    pub fn observation(&self) -> Result<PolicyObservation> {
        let state = self
            .state
            .ok_or_else(|| Error::Contract("observation before reset".to_string()))?;
        Ok(PolicyObservation {
            task_kind: TaskKind::SchemaBuild,
            step: self.steps,
            scores: vec![state.perplexity, state.complexity],
            total_reward: discounted_total(&self.rewards, self.config.discount),
            done: self.terminated,
            actor_prompt: self.prompt.clone(),
        })
    }

    /// Only valid once terminated; hands back the argmin-(p+c) schema
    /// and the discounted return.
    pub fn episode_result(&self) -> Result<SchemaEpisodeResult> {
        if !self.terminated {
            return Err(Error::Contract(
                "episode result requested before termination".to_string(),
            ));
        }
        Ok(SchemaEpisodeResult {
            best_schema: self.best_schema.clone().expect("terminated episodes have a best"),
            best_prompt: self.best_prompt.clone(),
            best_state: self.best_state.expect("terminated episodes have a best"),
            best_step: self.best_step,
            total_reward: discounted_total(&self.rewards, self.config.discount),
            steps: self.steps,
        })
    }
}
