//! Extraction episodes over the score triple, in three reward/termination
//! flavors: Base (multiplicative reward, threshold stop), Iterative
//! (improvement bonus, plateau stop), and StepCount (time-penalized,
//! hard step limit only).

use serde_json::Value;

use crate::env::{
    discounted_total, BestTracker, EnvConfig, ExtractionState, PolicyObservation, StepInfo,
    StepResult, StepTrace,
};
use crate::error::{Error, Result};
use crate::metaprompt::{MetaPrompter, PromptAction, RefineContext, TaskKind};
use crate::metrics::{score_extraction, Reference, ScoreTriple};
use crate::provider::{sha256_hex, ChatRequest, Provider};

const EXTRACT_SYSTEM_PROMPT: &str = "You extract structured data from form documents. Reply \
with a single JSON object and nothing else.";

const EXTRACT_MAX_TOKENS: u32 = 8192;

/// The reward/termination flavor of an extraction episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvVariant {
    Base,
    Iterative,
    StepCount,
}

impl EnvVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnvVariant::Base => "base",
            EnvVariant::Iterative => "iterative",
            EnvVariant::StepCount => "step-count",
        }
    }
}

impl std::fmt::Display for EnvVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EnvVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "base" => Ok(EnvVariant::Base),
            "iterative" => Ok(EnvVariant::Iterative),
            "step-count" | "step_count" | "stepcount" => Ok(EnvVariant::StepCount),
            other => Err(Error::Config(format!(
                "unknown environment variant {other:?}; expected base, iterative, or step-count"
            ))),
        }
    }
}

/// Generation request for one extraction attempt. Pure so callers can
/// reproduce the exact prompt.
pub fn extraction_request(
    actor_prompt: &str,
    schema: &Value,
    page_text: &str,
    page_index: usize,
    document_class: &str,
) -> ChatRequest {
    let schema_pretty =
        serde_json::to_string_pretty(schema).unwrap_or_else(|_| schema.to_string());
    let user = format!(
        "{actor_prompt}\n\nTarget schema (JSON):\n{schema_pretty}\n\nDocument class: \
         {document_class}\nPage index: {page_index}\n\nPage text:\n{page_text}\n\nReply with a \
         single JSON object matching the target schema.",
    );
    ChatRequest::new(EXTRACT_SYSTEM_PROMPT, user)
        .json()
        .with_max_tokens(EXTRACT_MAX_TOKENS)
}

fn base_reward(scores: &ScoreTriple) -> f64 {
    scores.exact * scores.semantic * scores.similarity
}

/// beta + delta on a new record, bare delta otherwise.
fn iterative_reward(sigma_t: f64, delta: f64, pre_step_best: f64, bonus: f64) -> f64 {
    if sigma_t > pre_step_best {
        bonus + delta
    } else {
        delta
    }
}

fn step_count_reward(delta: f64, penalty: f64, step: usize) -> f64 {
    delta - penalty * step as f64
}

/// Episode outcome: bests plus the discounted return.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub best: BestTracker,
    pub total_reward: f64,
    pub steps: usize,
}

pub struct ExtractionEnv<'a> {
    variant: EnvVariant,
    config: EnvConfig,
    prompter: &'a MetaPrompter,
    provider: &'a dyn Provider,
    judge: &'a dyn Provider,
    page_text: String,
    page_index: usize,
    document_class: String,
    schema: Value,
    prompt: String,
    reference: Reference,
    started: bool,
    terminated: bool,
    steps: usize,
    non_improvement: u32,
    state: Option<ExtractionState>,
    best: Option<BestTracker>,
    last_output: Option<Value>,
    rewards: Vec<f64>,
    trace: Vec<StepTrace>,
}

impl<'a> ExtractionEnv<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        variant: EnvVariant,
        config: EnvConfig,
        prompter: &'a MetaPrompter,
        provider: &'a dyn Provider,
        judge: &'a dyn Provider,
        page_text: impl Into<String>,
        page_index: usize,
        document_class: impl Into<String>,
        schema: Value,
        actor_prompt: impl Into<String>,
        reference: Reference,
    ) -> Result<Self> {
        config.validate()?;
        let page_text = page_text.into();
        let prompt = actor_prompt.into();
        if page_text.trim().is_empty() || prompt.trim().is_empty() {
            return Err(Error::Shape(
                "extraction episodes need non-empty page text and actor prompt".to_string(),
            ));
        }
        Ok(ExtractionEnv {
            variant,
            config,
            prompter,
            provider,
            judge,
            page_text,
            page_index,
            document_class: document_class.into(),
            schema,
            prompt,
            reference,
            started: false,
            terminated: false,
            steps: 0,
            non_improvement: 0,
            state: None,
            best: None,
            last_output: None,
            rewards: Vec::new(),
            trace: Vec::new(),
        })
    }

    /// Runs the first extraction and seeds the best tracker. Base and
    /// Iterative episodes that already meet every threshold terminate
    /// immediately; StepCount never terminates at reset.
    pub fn reset(&mut self) -> Result<ExtractionState> {
        if self.started {
            return Err(Error::Contract("extraction episode was already started".to_string()));
        }
        self.started = true;
        let (state, output, reply_text) = self.generate()?;
        self.best = Some(BestTracker::new(&state, &self.prompt, &output));
        self.last_output = Some(output);
        self.state = Some(state);
        self.terminated = match self.variant {
            EnvVariant::StepCount => false,
            _ => state.scores.meets(&self.config.score_thresholds),
        };
        self.push_trace(None, &state, 0.0, &reply_text);
        Ok(state)
    }

    /// Rewrites the prompt via the action, re-extracts, re-scores, and
    /// applies the variant's reward and termination rules.
    pub fn step(&mut self, action: PromptAction) -> Result<StepResult<ExtractionState>> {
        if !self.started {
            return Err(Error::Contract("step before reset".to_string()));
        }
        if self.terminated {
            return Err(Error::Contract("step after termination".to_string()));
        }

        let reference_value = match &self.reference {
            Reference::GroundTruth(v) => v.clone(),
            Reference::PageText(t) => Value::String(t.clone()),
        };
        let ctx = RefineContext {
            task_kind: TaskKind::DataExtract,
            actor_prompt: self.prompt.clone(),
            last_output: self.last_output.clone(),
            reference: Some(reference_value),
        };
        let revision = self.prompter.apply_action(action, &ctx, self.provider)?;
        self.prompt = revision.after;

        let (state, output, reply_text) = self.generate()?;
        let prev = self.state.expect("started episodes have a state");
        let delta = state.combined - prev.combined;
        let pre_step_best = self.best.as_ref().expect("started").best_combined;

        let step_index = self.steps + 1;
        let reward = match self.variant {
            EnvVariant::Base => base_reward(&state.scores),
            EnvVariant::Iterative => {
                iterative_reward(state.combined, delta, pre_step_best, self.config.improvement_bonus)
            }
            EnvVariant::StepCount => {
                step_count_reward(delta, self.config.step_penalty, step_index)
            }
        };

        if state.combined <= prev.combined {
            self.non_improvement += 1;
        } else {
            self.non_improvement = 0;
        }
        let plateau = self.non_improvement >= self.config.non_improvement_threshold;

        self.best
            .as_mut()
            .expect("started")
            .update(&state, &self.prompt, &output, step_index);
        self.steps = step_index;
        self.last_output = Some(output);
        self.state = Some(state);

        let thresholds_met = state.scores.meets(&self.config.score_thresholds);
        let out_of_steps = self.steps >= self.config.max_steps;
        self.terminated = match self.variant {
            EnvVariant::Base => thresholds_met || out_of_steps,
            EnvVariant::Iterative => plateau || thresholds_met || out_of_steps,
            EnvVariant::StepCount => out_of_steps,
        };
        self.rewards.push(reward);
        self.push_trace(Some(action), &state, reward, &reply_text);

        Ok(StepResult {
            state,
            reward,
            terminated: self.terminated,
            info: StepInfo { step: self.steps, n_t: self.non_improvement, plateau },
        })
    }

    fn generate(&self) -> Result<(ExtractionState, Value, String)> {
        let request = extraction_request(
            &self.prompt,
            &self.schema,
            &self.page_text,
            self.page_index,
            &self.document_class,
        );
        let response = self.provider.complete(&request)?;
        let output: Value = serde_json::from_str(&response.text)
            .map_err(|e| Error::parse_json("extraction reply", &e))?;
        let scores = score_extraction(&output, &self.reference, self.judge)?;
        Ok((ExtractionState::new(scores), output, response.text))
    }

    fn push_trace(&mut self, action: Option<PromptAction>, state: &ExtractionState, reward: f64, reply: &str) {
        self.trace.push(StepTrace {
            step: self.steps,
            action,
            state: serde_json::json!({
                "exact": state.scores.exact,
                "semantic": state.scores.semantic,
                "similarity": state.scores.similarity,
                "combined": state.combined,
            }),
            reward,
            terminated: self.terminated,
            prompt_hash: sha256_hex(self.prompt.as_bytes()),
            output_hash: sha256_hex(reply.as_bytes()),
            n_t: self.non_improvement,
            plateau: self.non_improvement >= self.config.non_improvement_threshold,
        });
    }

    pub fn variant(&self) -> EnvVariant {
        self.variant
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn state(&self) -> Option<ExtractionState> {
        self.state
    }

    pub fn best(&self) -> Option<&BestTracker> {
        self.best.as_ref()
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
            task_kind: TaskKind::DataExtract,
            step: self.steps,
            scores: state.scores.as_vec(),
            total_reward: discounted_total(&self.rewards, self.config.discount),
            done: self.terminated,
            actor_prompt: self.prompt.clone(),
        })
    }

    /// Only valid once terminated; hands back the bests and the
    /// discounted return.
    pub fn episode_result(&self) -> Result<EpisodeResult> {
        if !self.terminated {
            return Err(Error::Contract(
                "episode result requested before termination".to_string(),
            ));
        }
        Ok(EpisodeResult {
            best: self.best.clone().expect("terminated episodes have a best"),
            total_reward: discounted_total(&self.rewards, self.config.discount),
            steps: self.steps,
        })
    }
}
