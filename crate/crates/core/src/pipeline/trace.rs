//! Episode trace persistence: one JSONL file per episode plus a
//! document summary JSON. Trace bytes are deterministic for a given
//! run; wall-clock timings are only written when explicitly enabled so
//! identical reruns stay byte-identical.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::env::StepTrace;
use crate::error::{Error, Result};
use crate::pipeline::ExtractionOutcome;
use crate::provider::ProviderStats;

#[derive(Debug, Clone, Copy, Default)]
pub struct TraceOptions {
    /// Include stage wall-clock times in the summary. Off by default:
    /// timings vary run to run and would break byte-identical reruns.
    pub timings: bool,
}

fn write_jsonl(path: &Path, steps: &[StepTrace]) -> Result<()> {
    let mut buffer = Vec::new();
    for step in steps {
        serde_json::to_writer(&mut buffer, step)
            .map_err(|e| Error::Config(format!("cannot serialize trace step: {e}")))?;
        buffer.push(b'\n');
    }
    std::fs::write(path, buffer).map_err(|e| Error::io(path, e))
}

/// Writes per-episode JSONL traces and a summary JSON into `dir`.
/// Returns the summary path.
pub fn write_traces(
    outcome: &ExtractionOutcome,
    stats: ProviderStats,
    dir: &Path,
    options: &TraceOptions,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut page_entries = Vec::new();
    for page in &outcome.pages {
        let mut trace_files = Vec::new();
        if !page.schema_trace.is_empty() {
            let name = format!("page_{}_schema.jsonl", page.page_index);
            write_jsonl(&dir.join(&name), &page.schema_trace)?;
            trace_files.push(name);
        }
        if !page.extract_trace.is_empty() {
            let name = format!("page_{}_extract.jsonl", page.page_index);
            write_jsonl(&dir.join(&name), &page.extract_trace)?;
            trace_files.push(name);
        }
        page_entries.push(json!({
            "page_index": page.page_index,
            "schema_steps": page.schema_steps,
            "extract_steps": page.extract_steps,
            "schema_prompt_hash": page.schema_prompt_hash,
            "prompt_hash": page.prompt_hash,
            "output_hash": page.output_hash,
            "scores": page.scores,
            "error": page.error,
            "trace_files": trace_files,
        }));
    }

    let mut summary = json!({
        "source": outcome.source,
        "mode": outcome.mode,
        "status": outcome.status,
        "config_hash": outcome.config_hash,
        "document_class": outcome.document_class,
        "classification": outcome.classification,
        "scores": outcome.scores,
        "pages": page_entries,
        "provider": {
            "requests": stats.requests,
            "backend_calls": stats.backend_calls,
            "cache_hits": stats.cache_hits,
            "embed_calls": stats.embed_calls,
        },
    });
    if options.timings {
        let timings: serde_json::Map<String, serde_json::Value> = outcome
            .stage_millis
            .iter()
            .map(|(stage, ms)| (stage.clone(), json!(ms)))
            .collect();
        summary["stage_millis"] = serde_json::Value::Object(timings);
    }

    let summary_path = dir.join("summary.json");
    let mut file = std::fs::File::create(&summary_path).map_err(|e| Error::io(&summary_path, e))?;
    serde_json::to_writer_pretty(&mut file, &summary)
        .map_err(|e| Error::Config(format!("cannot serialize summary: {e}")))?;
    file.write_all(b"\n").map_err(|e| Error::io(&summary_path, e))?;
    Ok(summary_path)
}
