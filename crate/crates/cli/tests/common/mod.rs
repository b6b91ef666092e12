//! Scripted end-to-end fixtures. The extraction replies are keyed to
//! exact prompts, so output quality improves only when a meta-prompt
//! action rewrites the actor prompt into its improved form.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

use formagent_core::env::extraction_request;
use formagent_core::json::flatten;
use formagent_core::json::schema::{dedupe_tables, Schema};
use formagent_core::metaprompt::{few_shot_prompt, DriverAssets, TaskKind};
use formagent_core::metrics::judge::basic_judge_request;
use formagent_core::pipeline::baseline_request;

pub const P0_SCHEMA: &str = "Draft a schema listing the fields of this page.";
pub const P1_SCHEMA: &str =
    "IMPROVED-SCHEMA: design one JSON schema node covering every field on the page.";
pub const P0_EXTRACT: &str = "Copy the page fields into a JSON object.";
pub const P1_EXTRACT: &str =
    "IMPROVED-EXTRACT: extract every field from the page exactly as printed.";
pub const CRITIQUE_TEXT: &str =
    "Name every field label explicitly and forbid placeholder values.";

pub const IMPROVEMENT_DOCS: usize = 10;
pub const IMPROVEMENT_PAGES: usize = 2;
pub const ITEM_PAGES: usize = 3;
pub const ITEMS_PER_PAGE: usize = 15;

pub struct Fixture {
    pub root: PathBuf,
    pub config: PathBuf,
    pub docs: Vec<PathBuf>,
    pub truths: Vec<PathBuf>,
}

pub fn page_values(doc: usize, page: usize) -> (String, String, String) {
    (
        format!("vendor{doc}x{page}"),
        format!("num{doc}x{page}"),
        format!("amt{doc}x{page}"),
    )
}

pub fn page_text(doc: usize, page: usize) -> String {
    let (vendor, number, total) = page_values(doc, page);
    format!("Vendor: {vendor}\nNumber: {number}\nTotal: {total}")
}

pub fn truth_page(doc: usize, page: usize) -> Value {
    let (vendor, number, total) = page_values(doc, page);
    json!({"vendor": vendor, "number": number, "total": total})
}

pub fn truth_doc(doc: usize, pages: usize) -> Value {
    let list: Vec<Value> = (0..pages).map(|p| truth_page(doc, p)).collect();
    json!({"pages": list})
}

/// One of three fields right, so exact match is 1/3.
pub fn mediocre_pred(doc: usize, page: usize) -> Value {
    let (vendor, _, _) = page_values(doc, page);
    json!({"vendor": vendor, "number": "missing", "total": "missing"})
}

/// A judge that agrees with literal equality per ground-truth path.
pub fn judge_reply(pred: &Value, truth: &Value) -> String {
    let truth_flat = flatten(truth).expect("truth flattens");
    let pred_flat = flatten(pred).expect("pred flattens");
    let mut map = serde_json::Map::new();
    for (path, value) in &truth_flat {
        map.insert(path.clone(), Value::Bool(pred_flat.get(path) == Some(value)));
    }
    Value::Object(map).to_string()
}

pub fn plain_schema_reply() -> Value {
    json!({"kind": "object", "children": {
        "vendor": {"kind": "string"},
        "number": {"kind": "string"},
        "total": {"kind": "string"}
    }})
}

pub fn items_schema_reply() -> Value {
    json!({"kind": "object", "children": {
        "items": {"kind": "array", "item": {"kind": "object", "children": {
            "sku": {"kind": "string"},
            "qty": {"kind": "string"}
        }}}
    }})
}

/// The schema the pipeline hands to extraction: parsed, deduped,
/// re-serialized.
pub fn effective_schema(reply: &Value) -> Value {
    dedupe_tables(&Schema::from_value(reply).expect("wire schema parses")).to_value()
}

pub fn entry_exact(user_prompt: &str, reply: &str) -> Value {
    json!({"exact": user_prompt, "replies": [{"text": reply}]})
}

pub fn entry_contains(needle: &str, reply: &str) -> Value {
    json!({"contains": needle, "replies": [{"text": reply}]})
}

pub fn entry_contains_logprobs(needle: &str, reply: &str, logprobs: &[f64]) -> Value {
    json!({"contains": needle, "replies": [{"text": reply, "logprobs": logprobs}]})
}

/// Driver routing shared by every corpus. Critique first so feedback
/// requests never fall through to the rewrite entries; improved-prompt
/// needles before the initial-prompt needles so rewriting an already
/// improved prompt is the identity.
pub fn driver_tail() -> Vec<Value> {
    vec![
        entry_contains("write a short critique", CRITIQUE_TEXT),
        entry_contains("IMPROVED-SCHEMA", P1_SCHEMA),
        entry_contains("IMPROVED-EXTRACT", P1_EXTRACT),
        entry_contains("Draft a schema listing", P1_SCHEMA),
        entry_contains("Copy the page fields", P1_EXTRACT),
    ]
}

pub fn classify_entry(label: &str) -> Value {
    entry_contains_logprobs("You classify form documents", label, &[0.0])
}

pub fn schema_gen_entry(reply: &Value) -> Value {
    entry_contains("You design JSON schemas for form documents", &reply.to_string())
}

pub fn config_value(script: &Path, seed: u64, plateau: u32, cache: Option<&Path>) -> Value {
    let mut provider = json!({"backend": "scripted", "script_path": script});
    if let Some(dir) = cache {
        provider["cache_dir"] = json!(dir);
    }
    json!({
        "provider": provider,
        "env": {"non_improvement_threshold": plateau},
        "variant": "iterative",
        "policy": {"kind": "bandit"},
        "seed": seed,
        "schema_actor": P0_SCHEMA,
        "extract_actor": P0_EXTRACT,
    })
}

pub fn write_json(path: &Path, value: &Value) {
    std::fs::write(path, format!("{value:#}\n")).expect("fixture write");
}

/// Ten two-page documents. Initial and few-shot prompts yield a
/// one-of-three extraction; the rewritten prompts yield the exact
/// ground truth.
pub fn write_improvement_corpus(root: &Path, seed: u64, cache: Option<&Path>) -> Fixture {
    let schema_reply = plain_schema_reply();
    let schema = effective_schema(&schema_reply);
    let assets = DriverAssets::bundled();
    let scaffold0 = few_shot_prompt(&assets, TaskKind::DataExtract, P0_EXTRACT);
    let scaffold1 = few_shot_prompt(&assets, TaskKind::DataExtract, P1_EXTRACT);

    let mut entries = vec![classify_entry("Invoice"), schema_gen_entry(&schema_reply)];
    let mut docs = Vec::new();
    let mut truths = Vec::new();
    for d in 0..IMPROVEMENT_DOCS {
        let mut pages = Vec::new();
        for p in 0..IMPROVEMENT_PAGES {
            let text = page_text(d, p);
            let truth = truth_page(d, p);
            let truth_flat = flatten(&truth).expect("truth flattens");
            let med = mediocre_pred(d, p);

            for pred in [&med, &truth] {
                entries.push(entry_exact(
                    &basic_judge_request(pred, &truth_flat).user_prompt,
                    &judge_reply(pred, &truth),
                ));
            }
            for (actor, reply) in [
                (P0_EXTRACT, &med),
                (scaffold0.as_str(), &med),
                (P1_EXTRACT, &truth),
                (scaffold1.as_str(), &truth),
            ] {
                entries.push(entry_exact(
                    &extraction_request(actor, &schema, &text, p, "Invoice").user_prompt,
                    &reply.to_string(),
                ));
            }
            entries.push(entry_exact(
                &baseline_request(&text, p, "unknown").user_prompt,
                &med.to_string(),
            ));
            pages.push(text);
        }

        let doc_path = root.join(format!("doc_{d}.txt"));
        std::fs::write(&doc_path, pages.join("\u{c}")).expect("fixture write");
        let truth_path = root.join(format!("truth_{d}.json"));
        write_json(&truth_path, &truth_doc(d, IMPROVEMENT_PAGES));
        docs.push(doc_path);
        truths.push(truth_path);
    }
    entries.extend(driver_tail());

    let script = root.join("script.json");
    write_json(&script, &json!({"model": "fixture", "entries": entries}));
    let config = root.join("config.json");
    // Plateau patience equals the step cap: every page must be able to
    // reach its rewrite action before the episode can stall out.
    write_json(&config, &config_value(&script, seed, 6, cache));
    Fixture { root: root.to_path_buf(), config, docs, truths }
}

pub fn item_page_truth(page: usize) -> Value {
    let items: Vec<Value> = (0..ITEMS_PER_PAGE)
        .map(|i| json!({"sku": format!("sku{page}x{i:02}"), "qty": format!("{}", i + 1)}))
        .collect();
    json!({"items": items})
}

pub fn item_page_text(page: usize) -> String {
    let mut text = format!("Line items, page {page}");
    for i in 0..ITEMS_PER_PAGE {
        text.push_str(&format!("\nsku{page}x{i:02} qty {}", i + 1));
    }
    text
}

/// One three-page document whose first extraction is already perfect,
/// so every page terminates at reset and the output is policy-free.
pub fn write_items_corpus(root: &Path, seed: u64) -> Fixture {
    let schema_reply = items_schema_reply();
    let schema = effective_schema(&schema_reply);

    let mut entries = vec![classify_entry("Invoice"), schema_gen_entry(&schema_reply)];
    let mut pages = Vec::new();
    let mut truth_pages = Vec::new();
    for p in 0..ITEM_PAGES {
        let text = item_page_text(p);
        let truth = item_page_truth(p);
        let truth_flat = flatten(&truth).expect("truth flattens");
        entries.push(entry_exact(
            &basic_judge_request(&truth, &truth_flat).user_prompt,
            &judge_reply(&truth, &truth),
        ));
        entries.push(entry_exact(
            &extraction_request(P0_EXTRACT, &schema, &text, p, "Invoice").user_prompt,
            &truth.to_string(),
        ));
        pages.push(text);
        truth_pages.push(truth);
    }
    entries.extend(driver_tail());

    let doc_path = root.join("items.txt");
    std::fs::write(&doc_path, pages.join("\u{c}")).expect("fixture write");
    let truth_path = root.join("items_truth.json");
    write_json(&truth_path, &json!({"pages": truth_pages}));
    let script = root.join("script.json");
    write_json(&script, &json!({"model": "fixture", "entries": entries}));
    let config = root.join("config.json");
    write_json(&config, &config_value(&script, seed, 2, None));
    Fixture {
        root: root.to_path_buf(),
        config,
        docs: vec![doc_path],
        truths: vec![truth_path],
    }
}

/// A document the classifier cannot place: extraction must never start.
pub fn write_unknown_fixture(root: &Path) -> Fixture {
    let entries = vec![classify_entry("Poem")];
    let doc_path = root.join("mystery.txt");
    std::fs::write(&doc_path, "Roses are red\nViolets are blue").expect("fixture write");
    let script = root.join("script.json");
    write_json(&script, &json!({"model": "fixture", "entries": entries}));
    let config = root.join("config.json");
    write_json(&config, &config_value(&script, 0, 2, None));
    Fixture {
        root: root.to_path_buf(),
        config,
        docs: vec![doc_path],
        truths: Vec::new(),
    }
}

pub fn formagent(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_formagent"))
        .args(args)
        .output()
        .expect("formagent binary runs")
}

pub fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("process exited without a signal")
}

pub fn stdout_json(output: &Output) -> Value {
    serde_json::from_slice(&output.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&output.stdout),
            String::from_utf8_lossy(&output.stderr)
        )
    })
}
