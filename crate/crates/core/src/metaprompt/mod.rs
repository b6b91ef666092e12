//! The five prompt-rewriting actions applied to actor prompts. Three
//! call a driver model (best-practice, clarity, and feedback-refine
//! rewrites), one splices curated demonstrations in locally, and one is
//! the identity. A sentinel marker in the actor prompt guards against
//! rewrites that destroy the core task instruction.

mod assets;

pub use assets::{Demonstration, DriverAssets};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::provider::{ChatRequest, Provider};

/// Must appear in every actor prompt; rewrites that lose it are
/// discarded.
pub const CORE_TASK_MARKER: &str = "[[CORE-TASK]]";

/// Cap on demonstrations spliced in by the few-shot action.
pub const MAX_FEWSHOT_DEMOS: usize = 3;

const DRIVER_SYSTEM_PROMPT: &str = "You are a prompt engineering assistant. Follow the \
instructions exactly and reply with only what is asked for.";

const DRIVER_MAX_TOKENS: u32 = 4096;

/// Which actor prompt family is being refined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    SchemaBuild,
    DataExtract,
}

impl TaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::SchemaBuild => "schema_build",
            TaskKind::DataExtract => "data_extract",
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The discrete action space, indices 0 through 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptAction {
    BestPractice,
    Clarity,
    FewShot,
    NoChange,
    FeedbackRefine,
}

impl PromptAction {
    pub const ALL: [PromptAction; 5] = [
        PromptAction::BestPractice,
        PromptAction::Clarity,
        PromptAction::FewShot,
        PromptAction::NoChange,
        PromptAction::FeedbackRefine,
    ];

    pub const COUNT: usize = 5;

    pub fn index(&self) -> usize {
        match self {
            PromptAction::BestPractice => 0,
            PromptAction::Clarity => 1,
            PromptAction::FewShot => 2,
            PromptAction::NoChange => 3,
            PromptAction::FeedbackRefine => 4,
        }
    }

    pub fn from_index(index: usize) -> Result<PromptAction> {
        PromptAction::ALL
            .get(index)
            .copied()
            .ok_or_else(|| Error::Range(format!("action index {index} is outside 0..=4")))
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PromptAction::BestPractice => "best_practice",
            PromptAction::Clarity => "clarity",
            PromptAction::FewShot => "few_shot",
            PromptAction::NoChange => "no_change",
            PromptAction::FeedbackRefine => "feedback_refine",
        }
    }
}

impl std::fmt::Display for PromptAction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything an action may need: the prompt, what it last produced,
/// and what that output should have approximated (ground truth JSON or
/// the page text as a string value).
#[derive(Debug, Clone)]
pub struct RefineContext {
    pub task_kind: TaskKind,
    pub actor_prompt: String,
    pub last_output: Option<Value>,
    pub reference: Option<Value>,
}

impl RefineContext {
    pub fn new(task_kind: TaskKind, actor_prompt: impl Into<String>) -> Self {
        RefineContext {
            task_kind,
            actor_prompt: actor_prompt.into(),
            last_output: None,
            reference: None,
        }
    }

    pub fn with_feedback(mut self, last_output: Value, reference: Value) -> Self {
        self.last_output = Some(last_output);
        self.reference = Some(reference);
        self
    }
}

/// Outcome of one action application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRevision {
    pub action: PromptAction,
    pub before: String,
    pub after: String,
    pub critique: Option<String>,
}

fn render(template: &str, substitutions: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in substitutions {
        out = out.replace(key, value);
    }
    out
}

/// Ground truth renders as JSON; a page-text reference renders bare.
fn render_reference(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => serde_json::to_string_pretty(other).unwrap_or_else(|_| other.to_string()),
    }
}

fn driver_request(user_prompt: String) -> ChatRequest {
    ChatRequest::new(DRIVER_SYSTEM_PROMPT, user_prompt).with_max_tokens(DRIVER_MAX_TOKENS)
}

/// Pure builders so tests and fixtures can reproduce driver prompts
/// byte for byte.
pub fn best_practice_request(assets: &DriverAssets, actor_prompt: &str) -> ChatRequest {
    driver_request(render(&assets.best_practice, &[("{{ACTOR_PROMPT}}", actor_prompt)]))
}

pub fn clarity_request(assets: &DriverAssets, actor_prompt: &str) -> ChatRequest {
    driver_request(render(&assets.clarity, &[("{{ACTOR_PROMPT}}", actor_prompt)]))
}

pub fn critique_request(
    assets: &DriverAssets,
    actor_prompt: &str,
    last_output: &Value,
    reference: &Value,
) -> ChatRequest {
    driver_request(render(
        &assets.feedback_critique,
        &[
            ("{{ACTOR_PROMPT}}", actor_prompt),
            ("{{LAST_OUTPUT}}", &render_reference(last_output)),
            ("{{REFERENCE}}", &render_reference(reference)),
        ],
    ))
}

pub fn rewrite_request(assets: &DriverAssets, actor_prompt: &str, critique: &str) -> ChatRequest {
    driver_request(render(
        &assets.feedback_rewrite,
        &[("{{ACTOR_PROMPT}}", actor_prompt), ("{{CRITIQUE}}", critique)],
    ))
}

/// The few-shot prompt: actor prompt plus a scaffold of at most
/// [`MAX_FEWSHOT_DEMOS`] demonstrations. Applying it to a prompt that
/// already carries the scaffold is the identity, so repeated few-shot
/// actions cannot grow prompts without bound.
pub fn few_shot_prompt(assets: &DriverAssets, kind: TaskKind, actor_prompt: &str) -> String {
    let header = &assets.fewshot_header;
    if actor_prompt.contains(header.as_str()) {
        return actor_prompt.to_string();
    }
    let mut out = format!("{actor_prompt}\n\n{header}\n");
    for demo in assets.demonstrations(kind).iter().take(MAX_FEWSHOT_DEMOS) {
        let expected =
            serde_json::to_string_pretty(&demo.expected).unwrap_or_else(|_| demo.expected.to_string());
        out.push_str(&format!("\nInput:\n{}\nExpected JSON:\n{}\n", demo.input, expected));
    }
    out
}

/// Applies prompt-rewriting actions with the marker guardrail.
pub struct MetaPrompter {
    assets: DriverAssets,
}

impl MetaPrompter {
    pub fn new(assets: DriverAssets) -> Self {
        MetaPrompter { assets }
    }

    pub fn assets(&self) -> &DriverAssets {
        &self.assets
    }

    /// Runs one action against the context.
    ///
    /// Driver-backed rewrites that come back empty or drop the core
    /// task marker are rejected: the revision falls back to the
    /// unchanged prompt with a warning.
    pub fn apply_action(
        &self,
        action: PromptAction,
        ctx: &RefineContext,
        provider: &dyn Provider,
    ) -> Result<PromptRevision> {
        let before = ctx.actor_prompt.clone();
        match action {
            PromptAction::NoChange => Ok(PromptRevision {
                action,
                after: before.clone(),
                before,
                critique: None,
            }),
            PromptAction::FewShot => {
                let after = few_shot_prompt(&self.assets, ctx.task_kind, &before);
                Ok(PromptRevision { action, before, after, critique: None })
            }
            PromptAction::BestPractice => {
                let reply = provider.complete(&best_practice_request(&self.assets, &before))?;
                Ok(self.guarded(action, before, reply.text, None))
            }
            PromptAction::Clarity => {
                let reply = provider.complete(&clarity_request(&self.assets, &before))?;
                Ok(self.guarded(action, before, reply.text, None))
            }
            PromptAction::FeedbackRefine => {
                let (Some(output), Some(reference)) = (&ctx.last_output, &ctx.reference) else {
                    return Err(Error::MissingContext(
                        "feedback refinement needs the last output and a reference".to_string(),
                    ));
                };
                let critique = provider
                    .complete(&critique_request(&self.assets, &before, output, reference))?
                    .text
                    .trim()
                    .to_string();
                let reply =
                    provider.complete(&rewrite_request(&self.assets, &before, &critique))?;
                Ok(self.guarded(action, before, reply.text, Some(critique)))
            }
        }
    }

    fn guarded(
        &self,
        action: PromptAction,
        before: String,
        raw_after: String,
        critique: Option<String>,
    ) -> PromptRevision {
        let after = raw_after.trim().to_string();
        let lost_marker = before.contains(CORE_TASK_MARKER) && !after.contains(CORE_TASK_MARKER);
        if after.is_empty() || lost_marker {
            log::warn!(
                "{action} rewrite {}; keeping the original prompt",
                if after.is_empty() { "came back empty" } else { "dropped the core task marker" }
            );
            return PromptRevision { action, after: before.clone(), before, critique };
        }
        PromptRevision { action, before, after, critique }
    }
}
