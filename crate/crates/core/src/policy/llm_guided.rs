//! Model-guided action choice: the provider is shown a compact episode
//! summary and asked for an action index. One re-ask of the identical
//! request tolerates a malformed first reply; after that the policy
//! falls back to a seeded uniform draw so an episode never stalls.

use log::warn;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ActionPolicy, ExplorationSchedule};
use crate::env::PolicyObservation;
use crate::error::{Error, Result};
use crate::metaprompt::PromptAction;
use crate::provider::{ChatRequest, Provider};

pub const GUIDANCE_SYSTEM_PROMPT: &str = "You steer a prompt-optimization loop. Given the \
episode state and the list of available actions, reply with the single integer index of the \
action to take next. Reply with the index only, no other text.";

const GUIDANCE_MAX_TOKENS: u32 = 16;
const HISTORY_WINDOW: usize = 5;

/// Builds the advice request. Pure: same observation and history, same
/// request. The reply is validated by this policy's own re-ask loop,
/// so the request must not set require_json; the client's corrective
/// retry would alter the prompt and break the identical re-ask.
pub fn guidance_request(
    obs: &PolicyObservation,
    history: &[(PromptAction, Option<f64>)],
) -> ChatRequest {
    let mut user = String::new();
    user.push_str(&format!("Task: {}\n", obs.task_kind));
    user.push_str(&format!("Step: {}\n", obs.step));
    let scores: Vec<String> = obs.scores.iter().map(|s| format!("{s:.6}")).collect();
    user.push_str(&format!("State scores: [{}]\n", scores.join(", ")));
    user.push_str(&format!("Total reward so far: {:.6}\n", obs.total_reward));
    if history.is_empty() {
        user.push_str("Recent actions: none\n");
    } else {
        user.push_str("Recent actions:\n");
        let start = history.len().saturating_sub(HISTORY_WINDOW);
        for (action, reward) in &history[start..] {
            match reward {
                Some(r) => user.push_str(&format!("- {action} (reward {r:.6})\n")),
                None => user.push_str(&format!("- {action} (reward pending)\n")),
            }
        }
    }
    user.push_str("\nAvailable actions:\n");
    for action in PromptAction::ALL {
        user.push_str(&format!("{} = {}\n", action.index(), action));
    }
    user.push_str("\nCurrent prompt:\n");
    user.push_str(&obs.actor_prompt);
    user.push_str("\n\nReply with one integer from 0 to 4.");
    ChatRequest::new(GUIDANCE_SYSTEM_PROMPT, user).with_max_tokens(GUIDANCE_MAX_TOKENS)
}

fn parse_action(text: &str) -> Option<PromptAction> {
    let trimmed = text.trim();
    let idx: usize = match trimmed.parse() {
        Ok(idx) => idx,
        Err(_) => {
            // Tolerate prose framing ("Action: 2") by taking a lone digit.
            let digits: Vec<char> = trimmed.chars().filter(|c| c.is_ascii_digit()).collect();
            if digits.len() != 1 {
                return None;
            }
            digits[0].to_digit(10).unwrap() as usize
        }
    };
    PromptAction::from_index(idx).ok()
}

/// Asks the provider which action to take. Episode summaries and the
/// action menu travel in the request; replies outside 0..=4 trigger one
/// byte-identical re-ask, then a seeded uniform fallback.
pub struct LlmGuidedPolicy<'a> {
    provider: &'a dyn Provider,
    rng: ChaCha8Rng,
    history: Vec<(PromptAction, Option<f64>)>,
}

impl<'a> LlmGuidedPolicy<'a> {
    pub fn new(provider: &'a dyn Provider, seed: u64) -> Self {
        LlmGuidedPolicy { provider, rng: ChaCha8Rng::seed_from_u64(seed), history: Vec::new() }
    }

    pub fn history(&self) -> &[(PromptAction, Option<f64>)] {
        &self.history
    }
}

impl ActionPolicy for LlmGuidedPolicy<'_> {
    fn select(&mut self, obs: &PolicyObservation) -> Result<PromptAction> {
        if obs.done {
            return Err(Error::Contract(
                "policy asked for an action on a finished episode".to_string(),
            ));
        }
        let request = guidance_request(obs, &self.history);
        let mut action = None;
        for _ in 0..2 {
            let reply = self.provider.complete(&request)?;
            action = parse_action(&reply.text);
            if action.is_some() {
                break;
            }
        }
        let action = match action {
            Some(action) => action,
            None => {
                let idx = self.rng.gen_range(0..PromptAction::COUNT);
                let fallback = PromptAction::from_index(idx)?;
                warn!("guidance replies never named an action; falling back to {fallback}");
                fallback
            }
        };
        self.history.push((action, None));
        Ok(action)
    }

    fn feedback(&mut self, reward: f64) -> Result<()> {
        match self.history.last_mut() {
            Some(slot @ (_, None)) => {
                slot.1 = Some(reward);
                Ok(())
            }
            _ => Err(Error::Contract("feedback without a pending selection".to_string())),
        }
    }

    fn name(&self) -> &'static str {
        "llm_guided"
    }
}

/// With probability epsilon(step) picks a uniform action, otherwise
/// defers to the wrapped policy. Rewards are forwarded only when the
/// base policy actually made the last choice, keeping learners'
/// selection/feedback pairing intact.
pub struct EpsilonGreedyPolicy<P> {
    base: P,
    schedule: ExplorationSchedule,
    rng: ChaCha8Rng,
    last_from_base: bool,
}

impl<P: ActionPolicy> EpsilonGreedyPolicy<P> {
    pub fn new(base: P, schedule: ExplorationSchedule, seed: u64) -> Result<Self> {
        schedule.validate()?;
        Ok(EpsilonGreedyPolicy {
            base,
            schedule,
            rng: ChaCha8Rng::seed_from_u64(seed),
            last_from_base: false,
        })
    }

    pub fn base(&self) -> &P {
        &self.base
    }

    pub fn into_base(self) -> P {
        self.base
    }
}

impl<P: ActionPolicy> ActionPolicy for EpsilonGreedyPolicy<P> {
    fn select(&mut self, obs: &PolicyObservation) -> Result<PromptAction> {
        let epsilon = self.schedule.epsilon(obs.step);
        if self.rng.gen::<f64>() < epsilon {
            self.last_from_base = false;
            let idx = self.rng.gen_range(0..PromptAction::COUNT);
            PromptAction::from_index(idx)
        } else {
            self.last_from_base = true;
            self.base.select(obs)
        }
    }

    fn feedback(&mut self, reward: f64) -> Result<()> {
        if self.last_from_base {
            self.base.feedback(reward)
        } else {
            Ok(())
        }
    }

    fn name(&self) -> &'static str {
        "epsilon_greedy"
    }

    fn snapshot_params(&self) -> Option<crate::policy::BanditParams> {
        self.base.snapshot_params()
    }
}
