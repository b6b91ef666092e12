//! LLM-judged semantic equivalence. One batched judge call covers all
//! fields of a document pair; a single re-ask of the identical request
//! is attempted on an unusable reply before giving up. All request
//! builders are pure so callers can precompute exact prompts.

use std::collections::BTreeMap;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::json::{flatten, FlatFields};
use crate::metrics::{cosine_similarity, exact_match, ScoreTriple};
use crate::provider::{ChatRequest, Provider};

const JUDGE_SYSTEM_PROMPT: &str = "You are a strict evaluator of form-document extraction. \
Field names and formats may differ between documents; judge whether values are semantically \
equivalent. Reply with exactly the JSON object requested and nothing else.";

const JUDGE_MAX_TOKENS: u32 = 2048;

/// Outcome for one field path in an enhanced comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldVerdict {
    /// Judge accepted the extracted value for this truth field.
    Matched,
    /// Both sides populate the path but the judge rejected the value.
    Unmatched,
    /// Truth has the path, the extraction does not.
    Missing,
    /// The extraction has a path truth does not.
    Extra,
}

/// Judge-scored table comparison components, each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableAnalysis {
    pub row_alignment: f64,
    pub header_match: f64,
    pub cell_accuracy: f64,
}

impl TableAnalysis {
    pub fn score(&self) -> f64 {
        (self.row_alignment + self.header_match + self.cell_accuracy) / 3.0
    }
}

/// Relative weights for the enhanced overall score. Renormalized over
/// field + confidence when the pair contains no tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnhancedWeights {
    pub field: f64,
    pub table: f64,
    pub confidence: f64,
}

impl Default for EnhancedWeights {
    fn default() -> Self {
        EnhancedWeights { field: 0.5, table: 0.3, confidence: 0.2 }
    }
}

impl EnhancedWeights {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.field, self.table, self.confidence];
        if parts.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Range(format!("enhanced weights must be non-negative: {self:?}")));
        }
        if self.field + self.confidence <= 0.0 {
            return Err(Error::Range(
                "field + confidence weight must be positive for table-free pairs".to_string(),
            ));
        }
        Ok(())
    }
}

/// Full enhanced-judge comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    /// exact and similarity are lexical; semantic is the judged overall.
    pub scores: ScoreTriple,
    /// Covers every flat path in the union of pred and truth.
    pub verdicts: BTreeMap<String, FieldVerdict>,
    pub table: Option<TableAnalysis>,
    pub field_score: f64,
    pub table_score: Option<f64>,
    pub confidence: f64,
}

fn render_fields(fields: &FlatFields) -> String {
    let mut out = String::new();
    for (path, value) in fields {
        out.push_str(path);
        out.push_str(" = ");
        out.push_str(value);
        out.push('\n');
    }
    out
}

fn pretty(value: &Value) -> String {
    serde_json::to_string_pretty(value).unwrap_or_else(|_| value.to_string())
}

/// True when the document contains an array with at least one object
/// element anywhere.
pub fn has_tables(doc: &Value) -> bool {
    match doc {
        Value::Array(items) => {
            items.iter().any(Value::is_object) || items.iter().any(has_tables)
        }
        Value::Object(map) => map.values().any(has_tables),
        _ => false,
    }
}

/// Prompt asking for a path -> bool map over the truth fields.
pub fn basic_judge_request(pred: &Value, truth_fields: &FlatFields) -> ChatRequest {
    let user = format!(
        "Ground-truth fields:\n{}\nExtracted document JSON:\n{}\n\n\
         For each ground-truth field path listed above, decide whether the extracted document \
         contains a semantically equivalent value anywhere. Reply with a JSON object mapping \
         every listed path to true or false.",
        render_fields(truth_fields),
        pretty(pred),
    );
    // No require_json: reply validation lives in the identical-request
    // re-ask loop, and the provider's corrective retry would mutate the
    // request.
    ChatRequest::new(JUDGE_SYSTEM_PROMPT, user).with_max_tokens(JUDGE_MAX_TOKENS)
}

/// Prompt asking for field verdicts plus table analysis and confidence.
pub fn enhanced_judge_request(pred: &Value, truth: &Value, truth_fields: &FlatFields) -> ChatRequest {
    let user = format!(
        "Ground-truth fields:\n{}\nGround-truth document JSON:\n{}\n\nExtracted document JSON:\n{}\n\n\
         Reply with a JSON object of the shape\n\
         {{\"fields\": {{<path>: true|false, ...}}, \"table\": {{\"row_alignment\": r, \
         \"header_match\": h, \"cell_accuracy\": c}} or null, \"confidence\": k}}\n\
         where \"fields\" maps every ground-truth path listed above to whether the extracted \
         document contains a semantically equivalent value, \"table\" scores the alignment of \
         repeated rows, their headers, and individual cells in [0,1] (null when neither document \
         contains tables), and \"confidence\" in [0,1] is your confidence in this assessment.",
        render_fields(truth_fields),
        pretty(truth),
        pretty(pred),
    );
    ChatRequest::new(JUDGE_SYSTEM_PROMPT, user).with_max_tokens(JUDGE_MAX_TOKENS)
}

/// Prompt asking whether each extracted field is supported by the page
/// text, for reference-free self-feedback.
pub fn support_judge_request(pred_fields: &FlatFields, page_text: &str) -> ChatRequest {
    let user = format!(
        "Source page text:\n{page_text}\n\nExtracted fields:\n{}\n\
         For each extracted field path listed above, decide whether its value is supported by \
         the source page text. Reply with a JSON object mapping every listed path to true or \
         false.",
        render_fields(pred_fields),
    );
    ChatRequest::new(JUDGE_SYSTEM_PROMPT, user).with_max_tokens(JUDGE_MAX_TOKENS)
}

/// Sends a judge request, re-sending the identical request once if the
/// reply fails `parse`. Provider failures become evaluation-unavailable;
/// a second bad reply becomes judge-unusable.
fn ask_judge<T>(
    judge: &dyn Provider,
    request: &ChatRequest,
    parse: impl Fn(&str) -> Option<T>,
) -> Result<T> {
    for attempt in 0..2 {
        let response = judge
            .complete(request)
            .map_err(|e| Error::EvaluationUnavailable(format!("judge call failed: {e}")))?;
        if let Some(parsed) = parse(&response.text) {
            return Ok(parsed);
        }
        if attempt == 0 {
            log::warn!("judge reply was unusable, re-asking once");
        }
    }
    Err(Error::JudgeUnusable(
        "judge reply was unusable twice for the same request".to_string(),
    ))
}

/// Strict parse of a path -> bool map covering every expected path.
fn parse_bool_map(text: &str, expected: &FlatFields) -> Option<HashMap<String, bool>> {
    let value: Value = serde_json::from_str(text).ok()?;
    let map = value.as_object()?;
    let mut out = HashMap::with_capacity(expected.len());
    for path in expected.keys() {
        out.insert(path.clone(), map.get(path)?.as_bool()?);
    }
    Some(out)
}

/// Fraction of ground-truth fields the judge accepts. Empty truth is
/// vacuously perfect and makes no judge call.
pub fn semantic_match_basic(pred: &Value, truth: &Value, judge: &dyn Provider) -> Result<f64> {
    let truth_fields = flatten(truth)?;
    flatten(pred)?;
    if truth_fields.is_empty() {
        return Ok(1.0);
    }
    let request = basic_judge_request(pred, &truth_fields);
    let verdicts = ask_judge(judge, &request, |text| parse_bool_map(text, &truth_fields))?;
    let matched = verdicts.values().filter(|v| **v).count();
    Ok(matched as f64 / truth_fields.len() as f64)
}

/// Fraction of extracted fields the judge finds supported by the page
/// text. An empty extraction supports nothing and scores 0 without a
/// judge call.
pub fn support_score(pred: &Value, page_text: &str, judge: &dyn Provider) -> Result<f64> {
    let pred_fields = flatten(pred)?;
    if pred_fields.is_empty() {
        log::warn!("empty extraction scored 0 support against page text");
        return Ok(0.0);
    }
    let request = support_judge_request(&pred_fields, page_text);
    let verdicts = ask_judge(judge, &request, |text| parse_bool_map(text, &pred_fields))?;
    let supported = verdicts.values().filter(|v| **v).count();
    Ok(supported as f64 / pred_fields.len() as f64)
}

fn in_unit(x: f64) -> bool {
    x.is_finite() && (0.0..=1.0).contains(&x)
}

struct EnhancedReply {
    fields: HashMap<String, bool>,
    table: Option<TableAnalysis>,
    confidence: f64,
}

fn parse_enhanced_reply(
    text: &str,
    truth_fields: &FlatFields,
    expect_table: bool,
) -> Option<EnhancedReply> {
    let value: Value = serde_json::from_str(text).ok()?;
    let obj = value.as_object()?;

    let fields_value = Value::Object(obj.get("fields")?.as_object()?.clone());
    let fields = parse_bool_map(&fields_value.to_string(), truth_fields)?;

    let confidence = obj.get("confidence")?.as_f64()?;
    if !in_unit(confidence) {
        return None;
    }

    let table = match obj.get("table") {
        Some(Value::Object(t)) => {
            let get = |k: &str| t.get(k).and_then(Value::as_f64).filter(|x| in_unit(*x));
            Some(TableAnalysis {
                row_alignment: get("row_alignment")?,
                header_match: get("header_match")?,
                cell_accuracy: get("cell_accuracy")?,
            })
        }
        _ => None,
    };
    if expect_table && table.is_none() {
        return None;
    }
    Some(EnhancedReply { fields, table, confidence })
}

/// Enhanced judged comparison covering fields, tables, and confidence.
///
/// overall = w_field·field + w_table·table + w_conf·confidence; when the
/// pair has no tables the table term drops and the remaining weights
/// renormalize (0.5/0.3/0.2 becomes roughly 0.714/0.286).
pub fn semantic_match_enhanced(
    pred: &Value,
    truth: &Value,
    judge: &dyn Provider,
    weights: &EnhancedWeights,
) -> Result<MatchReport> {
    weights.validate()?;
    let truth_fields = flatten(truth)?;
    let pred_fields = flatten(pred)?;
    let tables_present = has_tables(pred) || has_tables(truth);

    let reply = if truth_fields.is_empty() && !tables_present {
        EnhancedReply { fields: HashMap::new(), table: None, confidence: 1.0 }
    } else {
        let request = enhanced_judge_request(pred, truth, &truth_fields);
        ask_judge(judge, &request, |text| {
            parse_enhanced_reply(text, &truth_fields, tables_present)
        })?
    };

    let mut verdicts = BTreeMap::new();
    for path in truth_fields.keys() {
        let verdict = if reply.fields.get(path).copied().unwrap_or(false) {
            FieldVerdict::Matched
        } else if pred_fields.contains_key(path) {
            FieldVerdict::Unmatched
        } else {
            FieldVerdict::Missing
        };
        verdicts.insert(path.clone(), verdict);
    }
    for path in pred_fields.keys() {
        if !truth_fields.contains_key(path) {
            verdicts.insert(path.clone(), FieldVerdict::Extra);
        }
    }

    let field_score = if truth_fields.is_empty() {
        1.0
    } else {
        let matched = verdicts.values().filter(|v| **v == FieldVerdict::Matched).count();
        matched as f64 / truth_fields.len() as f64
    };

    let table = if tables_present { reply.table } else { None };
    let table_score = table.as_ref().map(TableAnalysis::score);
    let overall = match table_score {
        Some(ts) => {
            let total = weights.field + weights.table + weights.confidence;
            (weights.field * field_score + weights.table * ts + weights.confidence * reply.confidence)
                / total
        }
        None => {
            let total = weights.field + weights.confidence;
            (weights.field * field_score + weights.confidence * reply.confidence) / total
        }
    };

    Ok(MatchReport {
        scores: ScoreTriple {
            exact: exact_match(pred, truth)?,
            semantic: overall,
            similarity: cosine_similarity(pred, truth)?,
        },
        verdicts,
        table,
        field_score,
        table_score,
        confidence: reply.confidence,
    })
}
