//! formagent: classify, extract, evaluate, and lay out form documents.
//!
//! Machine-parseable JSON goes to stdout, diagnostics to stderr. Exit
//! codes: 0 success, 2 usage or input error, 3 review required (the
//! document classified as Unknown), 4 extraction failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use formagent_core::classify::{classify, parse_label, DocumentClass};
use formagent_core::config::RunConfig;
use formagent_core::layout::{parse_ocr_json, read_document, reconstruct_layout, SourceFormat};
use formagent_core::metrics::judge::semantic_match_enhanced;
use formagent_core::metrics::{cosine_similarity, exact_match, fuzzy_prf};
use formagent_core::pipeline::{
    agentic_extract, baseline_extract, write_traces, DocumentJob, OutcomeStatus, TraceOptions,
};
use formagent_core::provider::Provider;
use formagent_core::{Error, Result};

const EXIT_USAGE: u8 = 2;
const EXIT_REVIEW: u8 = 3;
const EXIT_EXTRACTION: u8 = 4;

#[derive(Parser)]
#[command(name = "formagent", version, about = "Agentic form-document extraction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a document by its first page.
    Classify(ClassifyArgs),
    /// Extract structured JSON from a document.
    Extract(ExtractArgs),
    /// Score a predicted JSON document against ground truth.
    Evaluate(EvaluateArgs),
    /// Reconstruct layout-preserving text from OCR blocks.
    Layout(LayoutArgs),
}

/// Shared precedence: command-line flags override config-file values,
/// which override built-in defaults.
#[derive(Args)]
struct ConfigArg {
    /// JSON run configuration file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<RunConfig> {
        match &self.config {
            Some(path) => RunConfig::load(path),
            None => Ok(RunConfig::default()),
        }
    }
}

#[derive(Args)]
struct ClassifyArgs {
    /// Document to classify.
    input: PathBuf,
    /// Input format: text | ocr-json.
    #[arg(long, default_value = "text")]
    format: String,
    /// Confidence percentage below which the class becomes Unknown.
    #[arg(long, value_name = "PCT")]
    threshold: Option<f64>,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct ExtractArgs {
    /// Document to extract.
    input: PathBuf,
    /// Input format: text | ocr-json.
    #[arg(long, default_value = "text")]
    format: String,
    /// Extraction framework: baseline | agentic.
    #[arg(long, default_value = "agentic")]
    mode: String,
    /// Extraction environment: base | iterative | stepcount.
    #[arg(long)]
    env: Option<String>,
    /// Action policy: llm | epsilon | bandit | sequence.
    #[arg(long)]
    policy: Option<String>,
    /// Ground-truth JSON used for in-the-loop scoring.
    #[arg(long, value_name = "PATH")]
    truth: Option<PathBuf>,
    /// Skip classification and assume this document class.
    #[arg(long, value_name = "CLASS")]
    class: Option<String>,
    /// Directory receiving step traces and the run summary.
    #[arg(long, value_name = "DIR")]
    trace_dir: Option<PathBuf>,
    /// Seed for all stochastic components.
    #[arg(long)]
    seed: Option<u64>,
    /// Page-level worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predicted JSON document.
    pred: PathBuf,
    /// Ground-truth JSON document.
    truth: PathBuf,
    /// Also run the judge-based semantic comparison.
    #[arg(long)]
    judge: bool,
    /// Similarity threshold for fuzzy matching.
    #[arg(long, value_name = "X")]
    fuzzy_threshold: Option<f64>,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct LayoutArgs {
    /// OCR blocks JSON file.
    input: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Classify(args) => cmd_classify(args),
        Command::Extract(args) => cmd_extract(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Layout(args) => cmd_layout(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}

/// Everything except a whole-document extraction failure is an input,
/// configuration, or transport problem.
fn exit_for(error: &Error) -> u8 {
    match error {
        Error::ExtractionFailed(_) => EXIT_EXTRACTION,
        _ => EXIT_USAGE,
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| Error::parse_json(path.display().to_string(), &e))
}

fn print_report(report: &Value, out: Option<&Path>) -> Result<()> {
    let rendered = serde_json::to_string_pretty(report).expect("report serializes");
    match out {
        Some(path) => std::fs::write(path, format!("{rendered}\n")).map_err(|e| Error::io(path, e)),
        None => {
            println!("{rendered}");
            Ok(())
        }
    }
}

fn first_page(path: &Path, format: SourceFormat) -> Result<String> {
    let mut pages = read_document(path, format)?;
    pages.sort_by_key(|(i, _)| *i);
    pages
        .into_iter()
        .map(|(_, text)| text)
        .next()
        .ok_or_else(|| Error::Shape("document has no pages".to_string()))
}

fn cmd_classify(args: ClassifyArgs) -> Result<u8> {
    let config = args.config.load()?;
    let format = SourceFormat::from_str(&args.format)?;
    let threshold = args.threshold.unwrap_or(config.class_threshold_pct);
    let provider = config.provider.build()?;
    let page = first_page(&args.input, format)?;
    let result = classify(&page, &provider, threshold)?;
    println!("{}", serde_json::to_string(&result).expect("result serializes"));
    if result.class == DocumentClass::Unknown {
        return Ok(EXIT_REVIEW);
    }
    Ok(0)
}

fn cmd_extract(args: ExtractArgs) -> Result<u8> {
    let mut config = args.config.load()?;
    if let Some(env) = &args.env {
        config.variant = env.parse()?;
    }
    if let Some(policy) = &args.policy {
        config.policy.kind = policy.parse()?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(workers) = args.workers {
        config.workers = Some(workers);
    }
    config.validate()?;

    let format = SourceFormat::from_str(&args.format)?;
    let declared = match &args.class {
        Some(label) => Some(parse_label(label).ok_or_else(|| {
            Error::Config(format!("unknown document class `{label}`"))
        })?),
        None => None,
    };
    let truth = args.truth.as_deref().map(read_json).transpose()?;

    let provider = config.provider.build()?;
    let job = DocumentJob::from_path(&args.input, format, declared, config.snapshot_hash())?;
    let settings = config.settings();

    let outcome = match args.mode.as_str() {
        "baseline" => baseline_extract(&job, &provider, &provider, truth.as_ref(), &settings)?,
        "agentic" => {
            let prompter = config.build_prompter()?;
            agentic_extract(
                &job,
                &provider,
                &provider,
                &prompter,
                &config.policy,
                truth.as_ref(),
                &settings,
            )?
        }
        other => {
            return Err(Error::Config(format!(
                "unknown mode `{other}`; expected baseline or agentic"
            )))
        }
    };

    if let Some(dir) = &args.trace_dir {
        let options = TraceOptions { timings: config.trace_timings };
        let summary = write_traces(&outcome, provider.stats(), dir, &options)?;
        log::info!("trace summary written to {}", summary.display());
    }

    let report = serde_json::to_value(&outcome).expect("outcome serializes");
    print_report(&report, args.out.as_deref())?;
    if outcome.status == OutcomeStatus::ReviewRequired {
        return Ok(EXIT_REVIEW);
    }
    Ok(0)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<u8> {
    let config = args.config.load()?;
    let threshold = args.fuzzy_threshold.unwrap_or(config.fuzzy_threshold);
    let pred = read_json(&args.pred)?;
    let truth = read_json(&args.truth)?;

    let mut report = json!({
        "exact": exact_match(&pred, &truth)?,
        "similarity": cosine_similarity(&pred, &truth)?,
        "fuzzy": fuzzy_prf(&pred, &truth, threshold)?,
    });
    if args.judge {
        let provider = config.provider.build()?;
        let judged = semantic_match_enhanced(&pred, &truth, &provider, &config.judge_weights)?;
        report["judge"] = serde_json::to_value(&judged).expect("report serializes");
    }
    print_report(&report, None)?;
    Ok(0)
}

fn cmd_layout(args: LayoutArgs) -> Result<u8> {
    args.config.load()?;
    let raw = std::fs::read_to_string(&args.input).map_err(|e| Error::io(&args.input, e))?;
    let pages = parse_ocr_json(&raw, &args.input.display().to_string())?;
    let texts: Vec<String> = pages
        .iter()
        .map(|page| reconstruct_layout(page).map(|layout| layout.to_text()))
        .collect::<Result<_>>()?;
    print!("{}", texts.join("\u{c}"));
    Ok(0)
}
