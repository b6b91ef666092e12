//! End-to-end document extraction: a one-shot baseline with bounded
//! retries, and the full agentic path (classify, per-page schema and
//! extraction episodes, concatenation). Pages run on a worker pool and
//! each page derives its own RNG seed from the page content, so a
//! page's result never depends on which other pages share the run.

pub mod parallel;
pub mod trace;

pub use parallel::{default_worker_count, run_pages_parallel};
pub use trace::{write_traces, TraceOptions};

use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::classify::{classify, ClassificationResult, DocumentClass};
use crate::env::{EnvConfig, EnvVariant, ExtractionEnv, SchemaBuildEnv, StepTrace};
use crate::error::{Error, Result};
use crate::json::schema::dedupe_tables;
use crate::layout::{read_document, SourceFormat};
use crate::metaprompt::MetaPrompter;
use crate::metrics::{score_extraction, Reference, ScoreTriple};
use crate::policy::{ActionPolicy, BanditParams, PolicySpec};
use crate::provider::{sha256_hex, ChatRequest, Provider};

pub const BASELINE_SYSTEM_PROMPT: &str = "You extract structured data from form documents. \
Read the page and reply with a single JSON object holding every field and line item exactly \
as printed.";

/// Starting actor prompt for schema episodes.
pub const DEFAULT_SCHEMA_ACTOR: &str = "Design a JSON schema that captures every field and \
line-item table on this form page.";

/// Starting actor prompt for extraction episodes.
pub const DEFAULT_EXTRACT_ACTOR: &str = "Extract every field and line item from the page into \
a JSON object that follows the target schema exactly.";

const BASELINE_MAX_ATTEMPTS: usize = 3;

/// One document to process: ordered page texts plus provenance.
#[derive(Debug, Clone)]
pub struct DocumentJob {
    pub source: String,
    pub format: SourceFormat,
    pub declared_class: Option<DocumentClass>,
    pub pages: Vec<String>,
    pub config_hash: String,
}

impl DocumentJob {
    pub fn new(
        source: impl Into<String>,
        format: SourceFormat,
        pages: Vec<String>,
        declared_class: Option<DocumentClass>,
        config_hash: impl Into<String>,
    ) -> Result<Self> {
        if pages.is_empty() {
            return Err(Error::Shape("a document needs at least one page".to_string()));
        }
        Ok(DocumentJob {
            source: source.into(),
            format,
            declared_class,
            pages,
            config_hash: config_hash.into(),
        })
    }

    pub fn from_path(
        path: &std::path::Path,
        format: SourceFormat,
        declared_class: Option<DocumentClass>,
        config_hash: impl Into<String>,
    ) -> Result<Self> {
        let mut indexed = read_document(path, format)?;
        indexed.sort_by_key(|(i, _)| *i);
        let pages = indexed.into_iter().map(|(_, text)| text).collect();
        DocumentJob::new(path.display().to_string(), format, pages, declared_class, config_hash)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    Ok,
    Partial,
    ReviewRequired,
}

/// One baseline attempt, kept for the audit trail.
#[derive(Debug, Clone, Serialize)]
pub struct AttemptRecord {
    pub attempt: usize,
    pub parsed: bool,
    pub scores: Option<ScoreTriple>,
    pub output_hash: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PageReport {
    pub page_index: usize,
    pub output: Option<Value>,
    pub scores: Option<ScoreTriple>,
    pub schema: Option<Value>,
    pub schema_steps: usize,
    pub extract_steps: usize,
    pub schema_prompt_hash: Option<String>,
    pub prompt_hash: Option<String>,
    pub output_hash: Option<String>,
    pub attempts: Vec<AttemptRecord>,
    pub error: Option<String>,
    #[serde(skip)]
    pub schema_trace: Vec<StepTrace>,
    #[serde(skip)]
    pub extract_trace: Vec<StepTrace>,
    #[serde(skip)]
    pub learned: Option<BanditParams>,
}

impl PageReport {
    fn empty(page_index: usize) -> Self {
        PageReport {
            page_index,
            output: None,
            scores: None,
            schema: None,
            schema_steps: 0,
            extract_steps: 0,
            schema_prompt_hash: None,
            prompt_hash: None,
            output_hash: None,
            attempts: Vec::new(),
            error: None,
            schema_trace: Vec::new(),
            extract_trace: Vec::new(),
            learned: None,
        }
    }

    fn failed(page_index: usize, error: &Error) -> Self {
        let mut report = PageReport::empty(page_index);
        report.error = Some(error.to_string());
        report
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtractionOutcome {
    pub status: OutcomeStatus,
    pub mode: String,
    pub source: String,
    pub config_hash: String,
    pub document_class: String,
    pub classification: Option<ClassificationResult>,
    pub final_json: Option<Value>,
    pub scores: Option<ScoreTriple>,
    pub pages: Vec<PageReport>,
    /// (stage name, elapsed ms). Informative only; never part of the
    /// deterministic output surface, so it stays out of serialization
    /// and is exposed solely through opt-in trace timings.
    #[serde(skip)]
    pub stage_millis: Vec<(String, u128)>,
    #[serde(skip)]
    pub learned_params: Option<BanditParams>,
}

/// Everything the pipeline needs beyond the job itself.
#[derive(Debug, Clone)]
pub struct PipelineSettings {
    pub env: EnvConfig,
    pub variant: EnvVariant,
    pub class_threshold_pct: f64,
    pub seed: u64,
    pub workers: Option<usize>,
    pub schema_actor: String,
    pub extract_actor: String,
    pub logprob_fallback: f64,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings {
            env: EnvConfig::default(),
            variant: EnvVariant::Iterative,
            class_threshold_pct: crate::classify::DEFAULT_CLASS_THRESHOLD_PCT,
            seed: 0,
            workers: None,
            schema_actor: DEFAULT_SCHEMA_ACTOR.to_string(),
            extract_actor: DEFAULT_EXTRACT_ACTOR.to_string(),
            logprob_fallback: crate::provider::DEFAULT_LOGPROB_FALLBACK,
        }
    }
}

impl PipelineSettings {
    fn worker_count(&self, page_count: usize) -> usize {
        match self.workers {
            Some(n) => n.max(1).min(page_count.max(1)),
            None => default_worker_count(page_count),
        }
    }
}

/// Page seed derived from the run seed and the page content, so a
/// page's random stream is identical whether it runs alone or next to
/// other pages.
pub fn derive_page_seed(base_seed: u64, page_text: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base_seed.to_le_bytes());
    h.update(page_text.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 yields at least 8 bytes"))
}

/// Ground truth for one page. Multi-page truths mirror the output shape
/// with a `pages` array; anything else applies to every page.
pub fn truth_for_page(truth: &Value, page_index: usize, page_count: usize) -> Value {
    if page_count > 1 {
        if let Some(pages) = truth.get("pages").and_then(Value::as_array) {
            if let Some(page_truth) = pages.get(page_index) {
                return page_truth.clone();
            }
        }
    }
    truth.clone()
}

/// The baseline's one static prompt: page text plus the page number and
/// document type as metadata. Pure, so tests and fixtures can rebuild
/// it byte for byte.
pub fn baseline_request(page_text: &str, page_number: usize, document_type: &str) -> ChatRequest {
    let user = format!(
        "Document type: {document_type}\nPage number: {page_number}\n\nPage text:\n{page_text}\n\nReply with a single JSON object."
    );
    ChatRequest::new(BASELINE_SYSTEM_PROMPT, user).json()
}

fn reference_for_page(
    truth: Option<&Value>,
    page_text: &str,
    page_index: usize,
    page_count: usize,
) -> Reference {
    match truth {
        Some(t) => Reference::GroundTruth(truth_for_page(t, page_index, page_count)),
        None => Reference::PageText(page_text.to_string()),
    }
}

fn mean_scores(pages: &[PageReport]) -> Option<ScoreTriple> {
    let scored: Vec<&ScoreTriple> = pages.iter().filter_map(|p| p.scores.as_ref()).collect();
    if scored.is_empty() {
        return None;
    }
    let n = scored.len() as f64;
    Some(ScoreTriple {
        exact: scored.iter().map(|s| s.exact).sum::<f64>() / n,
        semantic: scored.iter().map(|s| s.semantic).sum::<f64>() / n,
        similarity: scored.iter().map(|s| s.similarity).sum::<f64>() / n,
    })
}

/// Concatenates per-page outputs under `pages`, in page order. A
/// single-page object document is additionally flattened so its fields
/// sit next to `document_class` at the top level.
fn assemble_final_json(document_class: &str, pages: &[PageReport]) -> Value {
    if pages.len() == 1 {
        if let Some(Value::Object(fields)) = &pages[0].output {
            let mut flat = serde_json::Map::new();
            flat.insert("document_class".to_string(), json!(document_class));
            for (k, v) in fields {
                flat.insert(k.clone(), v.clone());
            }
            return Value::Object(flat);
        }
    }
    let page_values: Vec<Value> =
        pages.iter().map(|p| p.output.clone().unwrap_or(Value::Null)).collect();
    json!({ "document_class": document_class, "pages": page_values })
}

fn finish_outcome(
    mode: &str,
    job: &DocumentJob,
    document_class: String,
    classification: Option<ClassificationResult>,
    pages: Vec<PageReport>,
    stage_millis: Vec<(String, u128)>,
) -> Result<ExtractionOutcome> {
    let failed = pages.iter().filter(|p| p.error.is_some()).count();
    if failed == pages.len() {
        let log: Vec<String> = pages
            .iter()
            .map(|p| {
                let detail = p
                    .attempts
                    .iter()
                    .map(|a| {
                        format!(
                            "attempt {}: {}",
                            a.attempt,
                            a.error.as_deref().unwrap_or("scored below thresholds")
                        )
                    })
                    .collect::<Vec<_>>()
                    .join("; ");
                match (&p.error, detail.is_empty()) {
                    (Some(e), true) => format!("page {}: {e}", p.page_index),
                    (Some(e), false) => format!("page {}: {e} ({detail})", p.page_index),
                    _ => format!("page {}", p.page_index),
                }
            })
            .collect();
        return Err(Error::ExtractionFailed(format!(
            "{}: every page failed: {}",
            job.source,
            log.join(" | ")
        )));
    }

    let status = if failed == 0 { OutcomeStatus::Ok } else { OutcomeStatus::Partial };
    let learned_parts: Vec<BanditParams> =
        pages.iter().filter_map(|p| p.learned.clone()).collect();
    let learned_params = if learned_parts.is_empty() {
        None
    } else {
        Some(BanditParams::merge_mean(&learned_parts)?)
    };
    let final_json = assemble_final_json(&document_class, &pages);
    Ok(ExtractionOutcome {
        status,
        mode: mode.to_string(),
        source: job.source.clone(),
        config_hash: job.config_hash.clone(),
        document_class,
        classification,
        final_json: Some(final_json),
        scores: mean_scores(&pages),
        pages,
        stage_millis,
        learned_params,
    })
}

/// One-shot extraction with bounded retries: the same static request is
/// sent up to three times per page and the best-scoring parse wins.
pub fn baseline_extract(
    job: &DocumentJob,
    provider: &dyn Provider,
    judge: &dyn Provider,
    truth: Option<&Value>,
    settings: &PipelineSettings,
) -> Result<ExtractionOutcome> {
    let started = Instant::now();
    let page_count = job.pages.len();
    let document_class =
        job.declared_class.map(|c| c.as_str().to_string()).unwrap_or_else(|| "unknown".to_string());
    let thresholds = settings.env.score_thresholds;

    let worker = |page_index: usize, page_text: &str| -> Result<PageReport> {
        let reference = reference_for_page(truth, page_text, page_index, page_count);
        let request = baseline_request(page_text, page_index, &document_class);
        let mut report = PageReport::empty(page_index);
        let mut best: Option<(Value, ScoreTriple, String)> = None;

        for attempt in 1..=BASELINE_MAX_ATTEMPTS {
            let response = provider.complete(&request)?;
            let output_hash = sha256_hex(response.text.as_bytes());
            match serde_json::from_str::<Value>(&response.text) {
                Err(e) => report.attempts.push(AttemptRecord {
                    attempt,
                    parsed: false,
                    scores: None,
                    output_hash: Some(output_hash),
                    error: Some(format!("reply is not JSON: {e}")),
                }),
                Ok(pred) => {
                    let scores = score_extraction(&pred, &reference, judge)?;
                    report.attempts.push(AttemptRecord {
                        attempt,
                        parsed: true,
                        scores: Some(scores),
                        output_hash: Some(output_hash.clone()),
                        error: None,
                    });
                    let improves = best
                        .as_ref()
                        .map_or(true, |(_, b, _)| scores.combined() > b.combined());
                    if improves {
                        best = Some((pred, scores, output_hash));
                    }
                    if scores.meets(&thresholds) {
                        break;
                    }
                }
            }
        }

        match best {
            Some((output, scores, hash)) => {
                report.output = Some(output);
                report.scores = Some(scores);
                report.output_hash = Some(hash);
                Ok(report)
            }
            None => {
                let log: Vec<String> = report
                    .attempts
                    .iter()
                    .map(|a| format!("attempt {}: {}", a.attempt, a.error.as_deref().unwrap_or("?")))
                    .collect();
                report.error = Some(format!("no attempt produced JSON: {}", log.join("; ")));
                Ok(report)
            }
        }
    };

    let results =
        run_pages_parallel(&job.pages, settings.worker_count(page_count), worker)?;
    let pages: Vec<PageReport> = results
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.unwrap_or_else(|e| PageReport::failed(i, &e)))
        .collect();

    let stage_millis = vec![("baseline".to_string(), started.elapsed().as_millis())];
    finish_outcome("baseline", job, document_class, None, pages, stage_millis)
}

fn run_schema_episode(env: &mut SchemaBuildEnv, policy: &mut dyn ActionPolicy) -> Result<()> {
    env.reset()?;
    while !env.is_terminated() {
        let obs = env.observation()?;
        let action = policy.select(&obs)?;
        let step = env.step(action)?;
        policy.feedback(step.reward)?;
    }
    Ok(())
}

fn run_extract_episode(env: &mut ExtractionEnv, policy: &mut dyn ActionPolicy) -> Result<()> {
    env.reset()?;
    while !env.is_terminated() {
        let obs = env.observation()?;
        let action = policy.select(&obs)?;
        let step = env.step(action)?;
        policy.feedback(step.reward)?;
    }
    Ok(())
}

/// The full agentic path: classify the first page (Unknown halts for
/// review), then per page run a schema episode, dedupe its best schema,
/// run an extraction episode against that schema, and concatenate the
/// best outputs in page order.
pub fn agentic_extract(
    job: &DocumentJob,
    provider: &dyn Provider,
    judge: &dyn Provider,
    prompter: &MetaPrompter,
    policy_spec: &PolicySpec,
    truth: Option<&Value>,
    settings: &PipelineSettings,
) -> Result<ExtractionOutcome> {
    let mut stage_millis = Vec::new();
    let page_count = job.pages.len();

    let classify_started = Instant::now();
    let (document_class, classification) = match job.declared_class {
        Some(class) => (class, None),
        None => {
            let result = classify(&job.pages[0], provider, settings.class_threshold_pct)?;
            (result.class, Some(result))
        }
    };
    stage_millis.push(("classify".to_string(), classify_started.elapsed().as_millis()));

    if document_class == DocumentClass::Unknown {
        return Ok(ExtractionOutcome {
            status: OutcomeStatus::ReviewRequired,
            mode: "agentic".to_string(),
            source: job.source.clone(),
            config_hash: job.config_hash.clone(),
            document_class: document_class.as_str().to_string(),
            classification,
            final_json: None,
            scores: None,
            pages: Vec::new(),
            stage_millis,
            learned_params: None,
        });
    }

    let class_label = document_class.as_str().to_string();
    let extract_started = Instant::now();

    let worker = |page_index: usize, page_text: &str| -> Result<PageReport> {
        let seed = derive_page_seed(settings.seed, page_text);
        let mut policy = policy_spec.build(provider, seed)?;
        let mut report = PageReport::empty(page_index);

        let mut schema_env = SchemaBuildEnv::new(
            settings.env,
            prompter,
            provider,
            page_text,
            settings.schema_actor.clone(),
        )?
        .with_logprob_fallback(settings.logprob_fallback);
        run_schema_episode(&mut schema_env, policy.as_mut())?;
        let schema_result = schema_env.episode_result()?;
        report.schema_trace = schema_env.trace().to_vec();
        report.schema_steps = schema_result.steps;
        report.schema_prompt_hash = Some(sha256_hex(schema_result.best_prompt.as_bytes()));

        let schema_value = dedupe_tables(&schema_result.best_schema).to_value();
        report.schema = Some(schema_value.clone());

        let reference = reference_for_page(truth, page_text, page_index, page_count);
        let mut extract_env = ExtractionEnv::new(
            settings.variant,
            settings.env,
            prompter,
            provider,
            judge,
            page_text,
            page_index,
            class_label.clone(),
            schema_value,
            settings.extract_actor.clone(),
            reference,
        )?;
        run_extract_episode(&mut extract_env, policy.as_mut())?;
        let episode = extract_env.episode_result()?;
        report.extract_trace = extract_env.trace().to_vec();
        report.extract_steps = episode.steps;
        report.prompt_hash = Some(sha256_hex(episode.best.best_prompt.as_bytes()));
        report.output_hash =
            Some(sha256_hex(episode.best.best_output.to_string().as_bytes()));
        report.scores = Some(ScoreTriple {
            exact: episode.best.best_exact,
            semantic: episode.best.best_semantic,
            similarity: episode.best.best_similarity,
        });
        report.output = Some(episode.best.best_output.clone());
        report.learned = policy.snapshot_params();
        Ok(report)
    };

    let results =
        run_pages_parallel(&job.pages, settings.worker_count(page_count), worker)?;
    let pages: Vec<PageReport> = results
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.unwrap_or_else(|e| PageReport::failed(i, &e)))
        .collect();
    stage_millis.push(("episodes".to_string(), extract_started.elapsed().as_millis()));

    finish_outcome("agentic", job, class_label, classification, pages, stage_millis)
}
