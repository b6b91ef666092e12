//! Softmax contextual bandit over the five prompt actions. The context
//! is an embedding of the task kind, current actor prompt, and state
//! scores; each action owns a weight row, action probabilities are the
//! softmax of the per-row dot products, and learning follows the
//! likelihood-ratio gradient scaled by the observed reward.

use std::path::Path;

use log::warn;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use serde::{Deserialize, Serialize};

use super::ActionPolicy;
use crate::env::PolicyObservation;
use crate::error::{Error, Result};
use crate::metaprompt::PromptAction;
use crate::provider::Provider;

fn default_learning_rate() -> f64 {
    0.05
}

/// Learnable state: one weight row per action. Serializes to plain
/// JSON so parameter snapshots survive across runs and can be merged
/// across worker threads by explicit choice, never by shared mutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BanditParams {
    pub dimension: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    pub theta: Vec<Vec<f64>>,
}

impl BanditParams {
    /// Zero-initialized weights: every action starts equally likely.
    pub fn new(dimension: usize) -> Self {
        BanditParams {
            dimension,
            learning_rate: default_learning_rate(),
            theta: vec![vec![0.0; dimension]; PromptAction::COUNT],
        }
    }

    pub fn with_learning_rate(mut self, learning_rate: f64) -> Self {
        self.learning_rate = learning_rate;
        self
    }

    pub fn action_count(&self) -> usize {
        self.theta.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::Config("bandit dimension must be positive".to_string()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.theta.len() < 2 {
            return Err(Error::Config("bandit needs at least two actions".to_string()));
        }
        for (i, row) in self.theta.iter().enumerate() {
            if row.len() != self.dimension {
                return Err(Error::Config(format!(
                    "theta row {i} has length {}, expected {}",
                    row.len(),
                    self.dimension
                )));
            }
            if row.iter().any(|w| !w.is_finite()) {
                return Err(Error::Config(format!("theta row {i} contains a non-finite weight")));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let raw = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("cannot serialize bandit params: {e}")))?;
        std::fs::write(path, raw).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let params: BanditParams =
            serde_json::from_str(&raw).map_err(|e| Error::parse_json(&path.display().to_string(), &e))?;
        params.validate()?;
        Ok(params)
    }

    /// Elementwise mean of several parameter snapshots. This is the one
    /// sanctioned way to combine learning from independent workers.
    pub fn merge_mean(parts: &[BanditParams]) -> Result<BanditParams> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Config("cannot merge zero parameter sets".to_string()))?;
        first.validate()?;
        let mut merged = first.clone();
        for part in &parts[1..] {
            part.validate()?;
            if part.dimension != first.dimension || part.theta.len() != first.theta.len() {
                return Err(Error::Contract(
                    "parameter sets to merge must share their shape".to_string(),
                ));
            }
            for (row, other) in merged.theta.iter_mut().zip(&part.theta) {
                for (w, o) in row.iter_mut().zip(other) {
                    *w += o;
                }
            }
        }
        let n = parts.len() as f64;
        for row in &mut merged.theta {
            for w in row.iter_mut() {
                *w /= n;
            }
        }
        Ok(merged)
    }
}

/// Softmax over the per-action logits theta_i . phi. The running
/// maximum is subtracted before exponentiation so extreme logits cannot
/// overflow; softmax is invariant under that shift.
pub fn bandit_probabilities(params: &BanditParams, phi: &[f64]) -> Result<Vec<f64>> {
    if phi.len() != params.dimension {
        return Err(Error::Contract(format!(
            "context has dimension {}, parameters expect {}",
            phi.len(),
            params.dimension
        )));
    }
    let logits: Vec<f64> = params
        .theta
        .iter()
        .map(|row| row.iter().zip(phi).map(|(w, x)| w * x).sum::<f64>())
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.iter().map(|e| e / total).collect())
}

/// One likelihood-ratio step: theta_j += eta * reward * grad_j of
/// log P(chosen | phi), where the gradient is (1 - P_chosen) * phi for
/// the chosen row and -P_j * phi elsewhere. With `chosen_only` the
/// cross terms are skipped, trading bias for cheaper sparse updates.
pub fn bandit_update(
    params: &mut BanditParams,
    phi: &[f64],
    chosen: usize,
    reward: f64,
    chosen_only: bool,
) -> Result<()> {
    if !reward.is_finite() {
        return Err(Error::Range(format!("reward must be finite, got {reward}")));
    }
    if chosen >= params.theta.len() {
        return Err(Error::Contract(format!(
            "chosen action {chosen} is outside the {} known actions",
            params.theta.len()
        )));
    }
    if reward == 0.0 {
        return Ok(());
    }
    let probs = bandit_probabilities(params, phi)?;
    let scale = params.learning_rate * reward;
    for (j, row) in params.theta.iter_mut().enumerate() {
        let coeff = if j == chosen {
            1.0 - probs[j]
        } else if chosen_only {
            continue;
        } else {
            -probs[j]
        };
        for (w, x) in row.iter_mut().zip(phi) {
            *w += scale * coeff * x;
        }
    }
    Ok(())
}

/// Text the bandit embeds as its decision context: the task kind, the
/// leading slice of the actor prompt, and the state scores. Frozen
/// format; changing it silently invalidates persisted weights.
pub fn context_text(obs: &PolicyObservation) -> String {
    let prompt: String = obs.actor_prompt.chars().take(512).collect();
    let scores: Vec<String> = obs.scores.iter().map(|s| format!("{s:.6}")).collect();
    format!("{}|{}|{}", obs.task_kind, scores.join(","), prompt)
}

/// Samples an index from a probability vector with a single uniform
/// draw and a cumulative scan. Rounding can leave the cumulative sum a
/// hair under the draw; the final index absorbs that.
fn sample_index(probs: &[f64], draw: f64) -> usize {
    let mut cumulative = 0.0;
    for (i, p) in probs.iter().enumerate() {
        cumulative += p;
        if draw < cumulative {
            return i;
        }
    }
    probs.len() - 1
}

/// The learned prompt-action selector: embeds the observation, samples
/// an action from the softmax, and on feedback applies one gradient
/// step using the probability recorded at selection time.
pub struct LpoBanditPolicy<'a> {
    params: BanditParams,
    provider: &'a dyn Provider,
    rng: ChaCha8Rng,
    chosen_only: bool,
    pending: Option<(Vec<f64>, usize)>,
}

impl<'a> LpoBanditPolicy<'a> {
    pub fn new(params: BanditParams, provider: &'a dyn Provider, seed: u64) -> Result<Self> {
        params.validate()?;
        if params.theta.len() != PromptAction::COUNT {
            return Err(Error::Config(format!(
                "prompt-action bandit needs {} weight rows, got {}",
                PromptAction::COUNT,
                params.theta.len()
            )));
        }
        Ok(LpoBanditPolicy {
            params,
            provider,
            rng: ChaCha8Rng::seed_from_u64(seed),
            chosen_only: false,
            pending: None,
        })
    }

    pub fn with_chosen_only(mut self, chosen_only: bool) -> Self {
        self.chosen_only = chosen_only;
        self
    }

    pub fn params(&self) -> &BanditParams {
        &self.params
    }

    pub fn into_params(self) -> BanditParams {
        self.params
    }

    /// Action and its selection probability for the given observation,
    /// without advancing the sampler. Diagnostic view.
    pub fn probabilities(&self, obs: &PolicyObservation) -> Result<Vec<f64>> {
        let phi = self.provider.embed(&context_text(obs))?;
        bandit_probabilities(&self.params, &phi)
    }
}

impl ActionPolicy for LpoBanditPolicy<'_> {
    fn select(&mut self, obs: &PolicyObservation) -> Result<PromptAction> {
        if obs.done {
            return Err(Error::Contract(
                "policy asked for an action on a finished episode".to_string(),
            ));
        }
        if self.pending.is_some() {
            warn!("selection without feedback for the previous one; dropping that learn step");
        }
        let phi = self.provider.embed(&context_text(obs))?;
        let probs = bandit_probabilities(&self.params, &phi)?;
        let draw = self.rng.gen::<f64>();
        let idx = sample_index(&probs, draw);
        self.pending = Some((phi, idx));
        PromptAction::from_index(idx)
    }

    fn feedback(&mut self, reward: f64) -> Result<()> {
        let (phi, chosen) = self
            .pending
            .take()
            .ok_or_else(|| Error::Contract("feedback without a pending selection".to_string()))?;
        bandit_update(&mut self.params, &phi, chosen, reward, self.chosen_only)
    }

    fn name(&self) -> &'static str {
        "lpo_bandit"
    }

    fn snapshot_params(&self) -> Option<BanditParams> {
        Some(self.params.clone())
    }
}
