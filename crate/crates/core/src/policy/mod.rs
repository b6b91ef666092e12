//! Action selection over the five prompt-rewriting strategies: an
//! LLM-guided selector, a decaying epsilon-greedy wrapper, and the LPO
//! softmax contextual bandit. All selectors satisfy one contract so
//! environments stay policy-agnostic.

mod bandit;
mod llm_guided;

pub use bandit::{
    bandit_probabilities, bandit_update, context_text, BanditParams, LpoBanditPolicy,
};
pub use llm_guided::{guidance_request, EpsilonGreedyPolicy, LlmGuidedPolicy};

use serde::{Deserialize, Serialize};

use crate::env::PolicyObservation;
use crate::error::{Error, Result};
use crate::metaprompt::PromptAction;
use crate::provider::Provider;

/// One action selector. `feedback` delivers the reward earned by the
/// most recent selection; selectors that do not learn ignore it.
pub trait ActionPolicy {
    fn select(&mut self, obs: &PolicyObservation) -> Result<PromptAction>;

    fn feedback(&mut self, _reward: f64) -> Result<()> {
        Ok(())
    }

    fn name(&self) -> &'static str;

    /// Learned weights, for selectors that have any. Lets a driver
    /// persist or merge learning without knowing the concrete type.
    fn snapshot_params(&self) -> Option<BanditParams> {
        None
    }
}

fn default_epsilon0() -> f64 {
    1.0
}
fn default_decay() -> f64 {
    0.2
}

/// epsilon(t) = epsilon0 * e^(-decay * t).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplorationSchedule {
    pub epsilon0: f64,
    pub decay: f64,
}

impl Default for ExplorationSchedule {
    fn default() -> Self {
        ExplorationSchedule { epsilon0: default_epsilon0(), decay: default_decay() }
    }
}

impl ExplorationSchedule {
    pub fn validate(&self) -> Result<()> {
        if !self.epsilon0.is_finite() || self.epsilon0 <= 0.0 || self.epsilon0 > 1.0 {
            return Err(Error::Config(format!(
                "epsilon0 must be in (0, 1], got {}",
                self.epsilon0
            )));
        }
        if !self.decay.is_finite() || self.decay <= 0.0 {
            return Err(Error::Config(format!("decay must be positive, got {}", self.decay)));
        }
        Ok(())
    }

    pub fn epsilon(&self, t: usize) -> f64 {
        self.epsilon0 * (-self.decay * t as f64).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    LlmGuided,
    EpsilonGreedy,
    Bandit,
    Sequence,
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "llm" | "llm_guided" | "llm-guided" => Ok(PolicyKind::LlmGuided),
            "epsilon" | "epsilon_greedy" | "epsilon-greedy" => Ok(PolicyKind::EpsilonGreedy),
            "bandit" | "lpo" => Ok(PolicyKind::Bandit),
            "sequence" => Ok(PolicyKind::Sequence),
            other => Err(Error::Config(format!("unknown policy kind `{other}`"))),
        }
    }
}

fn default_dimension() -> usize {
    crate::provider::embed::DEFAULT_EMBED_DIM
}
fn default_learning_rate() -> f64 {
    0.05
}

/// Declarative policy choice, built per worker so each page owns an
/// independent selector (and RNG stream) while sharing one provider.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub schedule: ExplorationSchedule,
    pub dimension: usize,
    pub learning_rate: f64,
    pub chosen_only: bool,
    pub params_path: Option<std::path::PathBuf>,
    pub sequence: Option<String>,
}

impl Default for PolicySpec {
    fn default() -> Self {
        PolicySpec {
            kind: PolicyKind::Bandit,
            schedule: ExplorationSchedule::default(),
            dimension: default_dimension(),
            learning_rate: default_learning_rate(),
            chosen_only: false,
            params_path: None,
            sequence: None,
        }
    }
}

impl PolicySpec {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.dimension == 0 {
            return Err(Error::Config("policy embedding dimension must be positive".to_string()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.kind == PolicyKind::Sequence && self.sequence.is_none() {
            return Err(Error::Config(
                "sequence policy needs an action list like \"0,3,1\"".to_string(),
            ));
        }
        Ok(())
    }

    fn bandit_params(&self) -> Result<BanditParams> {
        match &self.params_path {
            Some(path) if path.exists() => BanditParams::load(path),
            _ => Ok(BanditParams::new(self.dimension).with_learning_rate(self.learning_rate)),
        }
    }

    pub fn build<'a>(
        &self,
        provider: &'a dyn Provider,
        seed: u64,
    ) -> Result<Box<dyn ActionPolicy + 'a>> {
        self.validate()?;
        match self.kind {
            PolicyKind::LlmGuided => Ok(Box::new(LlmGuidedPolicy::new(provider, seed))),
            PolicyKind::EpsilonGreedy => {
                let base = LlmGuidedPolicy::new(provider, seed.wrapping_add(1));
                Ok(Box::new(EpsilonGreedyPolicy::new(base, self.schedule, seed)?))
            }
            PolicyKind::Bandit => {
                let policy = LpoBanditPolicy::new(self.bandit_params()?, provider, seed)?
                    .with_chosen_only(self.chosen_only);
                Ok(Box::new(policy))
            }
            PolicyKind::Sequence => {
                let spec = self.sequence.as_deref().unwrap_or_default();
                Ok(Box::new(SequencePolicy::parse(spec)?))
            }
        }
    }
}

/// Replays a fixed action list, cycling at the end. Predictable driver
/// for tests and pinned-behavior runs.
#[derive(Debug, Clone)]
pub struct SequencePolicy {
    actions: Vec<PromptAction>,
    cursor: usize,
}

impl SequencePolicy {
    pub fn new(actions: Vec<PromptAction>) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::Config("action sequence cannot be empty".to_string()));
        }
        Ok(SequencePolicy { actions, cursor: 0 })
    }

    /// Parses "0,3,1" style action index lists.
    pub fn parse(spec: &str) -> Result<Self> {
        let actions = spec
            .split(',')
            .map(|part| {
                let idx: usize = part.trim().parse().map_err(|_| {
                    Error::Config(format!("invalid action index {part:?} in sequence"))
                })?;
                PromptAction::from_index(idx)
            })
            .collect::<Result<Vec<_>>>()?;
        SequencePolicy::new(actions)
    }
}

impl ActionPolicy for SequencePolicy {
    fn select(&mut self, _obs: &PolicyObservation) -> Result<PromptAction> {
        let action = self.actions[self.cursor % self.actions.len()];
        self.cursor += 1;
        Ok(action)
    }

    fn name(&self) -> &'static str {
        "sequence"
    }
}
