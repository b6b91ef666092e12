//! Episodic reset/step environments that drive prompt optimization:
//! one for schema building over a (perplexity, complexity) state, and
//! three extraction variants over the score triple. Environments own
//! the actor prompt, call the generation model, score outputs, and
//! decide termination; action selection belongs to the policies.

mod extract_env;
mod schema_env;

pub use extract_env::{extraction_request, EnvVariant, EpisodeResult, ExtractionEnv};
pub use schema_env::{schema_request, SchemaBuildEnv, SchemaEpisodeResult};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::metaprompt::{PromptAction, TaskKind};
use crate::metrics::ScoreTriple;

fn default_max_steps() -> usize {
    6
}
fn default_non_improvement() -> u32 {
    2
}
fn default_bonus() -> f64 {
    0.1
}
fn default_thresholds() -> ScoreTriple {
    ScoreTriple::new(0.9, 0.9, 0.9)
}
fn default_penalty() -> f64 {
    0.01
}
fn default_discount() -> f64 {
    1.0
}

/// Shared episode knobs. The non-improvement threshold doubles as the
/// schema env's patience and the iterative env's plateau length k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub max_steps: usize,
    pub non_improvement_threshold: u32,
    pub improvement_bonus: f64,
    pub score_thresholds: ScoreTriple,
    pub step_penalty: f64,
    pub discount: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            max_steps: default_max_steps(),
            non_improvement_threshold: default_non_improvement(),
            improvement_bonus: default_bonus(),
            score_thresholds: default_thresholds(),
            step_penalty: default_penalty(),
            discount: default_discount(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be positive".to_string()));
        }
        if self.non_improvement_threshold == 0 {
            return Err(Error::Config(
                "non_improvement_threshold must be positive".to_string(),
            ));
        }
        if !self.improvement_bonus.is_finite() || self.improvement_bonus < 0.0 {
            return Err(Error::Config("improvement_bonus must be >= 0".to_string()));
        }
        if !self.step_penalty.is_finite() || self.step_penalty < 0.0 {
            return Err(Error::Config("step_penalty must be >= 0".to_string()));
        }
        if !self.discount.is_finite() || self.discount <= 0.0 || self.discount > 1.0 {
            return Err(Error::Config("discount must be in (0, 1]".to_string()));
        }
        for (name, t) in [
            ("exact", self.score_thresholds.exact),
            ("semantic", self.score_thresholds.semantic),
            ("similarity", self.score_thresholds.similarity),
        ] {
            if !t.is_finite() || !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("{name} threshold must be in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Schema episode state: generation perplexity and structural
/// complexity, both to be driven down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemaState {
    pub perplexity: f64,
    pub complexity: f64,
}

/// Extraction episode state: the score triple and its sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionState {
    pub scores: ScoreTriple,
    /// sigma_t, always the component sum, in [0, 3].
    pub combined: f64,
}

impl ExtractionState {
    pub fn new(scores: ScoreTriple) -> Self {
        ExtractionState { combined: scores.combined(), scores }
    }
}

/// Best-so-far record over an extraction episode. Per-metric bests are
/// independent maxima; prompt, output, and step follow the argmax of
/// the combined score, earliest step on ties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestTracker {
    pub best_exact: f64,
    pub best_semantic: f64,
    pub best_similarity: f64,
    pub best_combined: f64,
    pub best_prompt: String,
    pub best_output: Value,
    pub best_step: usize,
}

impl BestTracker {
    fn new(state: &ExtractionState, prompt: &str, output: &Value) -> Self {
        BestTracker {
            best_exact: state.scores.exact,
            best_semantic: state.scores.semantic,
            best_similarity: state.scores.similarity,
            best_combined: state.combined,
            best_prompt: prompt.to_string(),
            best_output: output.clone(),
            best_step: 0,
        }
    }

    fn update(&mut self, state: &ExtractionState, prompt: &str, output: &Value, step: usize) {
        self.best_exact = self.best_exact.max(state.scores.exact);
        self.best_semantic = self.best_semantic.max(state.scores.semantic);
        self.best_similarity = self.best_similarity.max(state.scores.similarity);
        if state.combined > self.best_combined {
            self.best_combined = state.combined;
            self.best_prompt = prompt.to_string();
            self.best_output = output.clone();
            self.best_step = step;
        }
    }
}

/// Per-step bookkeeping surfaced alongside the new state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepInfo {
    /// 1-based index of the step just taken.
    pub step: usize,
    /// Consecutive non-improving steps up to and including this one.
    pub n_t: u32,
    /// Plateau indicator P(t).
    pub plateau: bool,
}

/// What one env.step returns.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult<S> {
    pub state: S,
    pub reward: f64,
    pub terminated: bool,
    pub info: StepInfo,
}

/// One JSONL trace line; the reset emits step 0 with no action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub step: usize,
    pub action: Option<PromptAction>,
    pub state: Value,
    pub reward: f64,
    pub terminated: bool,
    pub prompt_hash: String,
    pub output_hash: String,
    pub n_t: u32,
    #[serde(rename = "P(t)")]
    pub plateau: bool,
}

/// What a policy sees when asked for an action.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyObservation {
    pub task_kind: TaskKind,
    /// Steps taken so far (0 right after reset).
    pub step: usize,
    /// Current state components: (perplexity, complexity) or the score
    /// triple.
    pub scores: Vec<f64>,
    /// Discounted return accumulated so far.
    pub total_reward: f64,
    /// Episode finished; policies must not be asked for another action.
    pub done: bool,
    pub actor_prompt: String,
}

/// Discounted return over per-step rewards, first step undiscounted.
pub(crate) fn discounted_total(rewards: &[f64], discount: f64) -> f64 {
    rewards
        .iter()
        .enumerate()
        .map(|(i, r)| discount.powi(i as i32) * r)
        .sum()
}
