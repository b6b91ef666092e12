//! Evaluation scores: lexical kernels (exact match, cosine similarity,
//! fuzzy precision/recall/F1), probability transforms (perplexity,
//! linear confidence), and the judge-based semantic matches in
//! [`judge`]. The same scores double as in-the-loop reward signals for
//! the episodic environments.

pub mod judge;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::json::flatten;
use crate::provider::Provider;

/// The three extraction scores used as environment state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreTriple {
    pub exact: f64,
    pub semantic: f64,
    pub similarity: f64,
}

impl ScoreTriple {
    pub fn new(exact: f64, semantic: f64, similarity: f64) -> Self {
        ScoreTriple { exact, semantic, similarity }
    }

    pub fn zero() -> Self {
        ScoreTriple::new(0.0, 0.0, 0.0)
    }

    /// Combined score sigma: the component sum, in [0, 3].
    pub fn combined(&self) -> f64 {
        self.exact + self.semantic + self.similarity
    }

    pub fn as_vec(&self) -> Vec<f64> {
        vec![self.exact, self.semantic, self.similarity]
    }

    /// All components at or above their per-metric thresholds.
    pub fn meets(&self, thresholds: &ScoreTriple) -> bool {
        self.exact >= thresholds.exact
            && self.semantic >= thresholds.semantic
            && self.similarity >= thresholds.similarity
    }
}

/// Fraction of union field paths whose values match exactly after trim
/// and case-fold. Both docs empty -> 1.0 by convention.
pub fn exact_match(pred: &Value, truth: &Value) -> Result<f64> {
    let p = flatten(pred)?;
    let t = flatten(truth)?;
    let union: std::collections::BTreeSet<&String> = p.keys().chain(t.keys()).collect();
    if union.is_empty() {
        return Ok(1.0);
    }
    let matches = union
        .iter()
        .filter(|path| match (p.get(**path), t.get(**path)) {
            (Some(a), Some(b)) => a.trim().to_lowercase() == b.trim().to_lowercase(),
            _ => false,
        })
        .count();
    Ok(matches as f64 / union.len() as f64)
}

/// Lowercased alphanumeric tokens of a text.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Token-frequency bag over a whole text.
pub fn token_bag(text: &str) -> HashMap<String, f64> {
    let mut bag: HashMap<String, f64> = HashMap::new();
    for tok in tokenize(text) {
        *bag.entry(tok).or_insert(0.0) += 1.0;
    }
    bag
}

/// Token-frequency bag over all flattened values of a document. Keys are
/// excluded: dynamic schemas make key names diverge while values agree.
pub fn value_token_bag(doc: &Value) -> Result<HashMap<String, f64>> {
    let flat = flatten(doc)?;
    let mut bag: HashMap<String, f64> = HashMap::new();
    for value in flat.values() {
        for tok in tokenize(value) {
            *bag.entry(tok).or_insert(0.0) += 1.0;
        }
    }
    Ok(bag)
}

/// Cosine of two token bags. Both empty -> 1.0; exactly one empty -> 0.0.
pub fn cosine_of_bags(a: &HashMap<String, f64>, b: &HashMap<String, f64>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let dot: f64 = a
        .iter()
        .filter_map(|(tok, x)| b.get(tok).map(|y| x * y))
        .sum();
    let na2: f64 = a.values().map(|x| x * x).sum();
    let nb2: f64 = b.values().map(|x| x * x).sum();
    // Single sqrt keeps identical bags at exactly 1.0; clamp guards rounding.
    (dot / (na2 * nb2).sqrt()).min(1.0)
}

/// Cosine similarity between the value-token bags of two documents.
pub fn cosine_similarity(pred: &Value, truth: &Value) -> Result<f64> {
    Ok(cosine_of_bags(&value_token_bag(pred)?, &value_token_bag(truth)?))
}

/// exp(-mean(logprobs)). Lower is more confident generation.
pub fn perplexity(logprobs: &[f64]) -> Result<f64> {
    if logprobs.is_empty() {
        return Err(Error::EmptyLogprobs);
    }
    if logprobs.iter().any(|lp| !lp.is_finite()) {
        return Err(Error::Range("perplexity requires finite logprobs".to_string()));
    }
    let mean = logprobs.iter().sum::<f64>() / logprobs.len() as f64;
    Ok((-mean).exp())
}

/// e^logprob as a percentage. Positive logprobs are a provider anomaly:
/// clamped to 100 with a warning rather than rejected.
pub fn linear_confidence(logprob: f64) -> Result<f64> {
    if !logprob.is_finite() {
        return Err(Error::Range(format!("logprob must be finite, got {logprob}")));
    }
    if logprob > 0.0 {
        log::warn!("positive logprob {logprob} clamped to 100% confidence");
        return Ok(100.0);
    }
    Ok(logprob.exp() * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
}

/// Levenshtein edit distance over characters.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            cur[j + 1] = (prev[j + 1] + 1).min(cur[j] + 1).min(prev[j] + cost);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// 1 - distance/max_len after trim and case-fold. Two empty strings are
/// identical (similarity 1).
pub fn normalized_similarity(a: &str, b: &str) -> f64 {
    let a = a.trim().to_lowercase();
    let b = b.trim().to_lowercase();
    let max_len = a.chars().count().max(b.chars().count());
    if max_len == 0 {
        return 1.0;
    }
    1.0 - levenshtein(&a, &b) as f64 / max_len as f64
}

/// Precision/recall/F1 under greedy one-to-one fuzzy value assignment.
///
/// Values are compared path-agnostically: candidate pairs at or above
/// the similarity threshold are taken in descending-similarity order,
/// each value usable once. Empty sides follow the undefined->0
/// convention.
pub fn fuzzy_prf(pred: &Value, truth: &Value, threshold: f64) -> Result<PrfReport> {
    if !(0.0..=1.0).contains(&threshold) || !threshold.is_finite() {
        return Err(Error::Range(format!(
            "fuzzy threshold {threshold} is outside [0, 1]"
        )));
    }
    let pred_values: Vec<String> = flatten(pred)?.into_values().collect();
    let truth_values: Vec<String> = flatten(truth)?.into_values().collect();

    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, pv) in pred_values.iter().enumerate() {
        for (j, tv) in truth_values.iter().enumerate() {
            let sim = normalized_similarity(pv, tv);
            if sim >= threshold {
                candidates.push((sim, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut pred_used = vec![false; pred_values.len()];
    let mut truth_used = vec![false; truth_values.len()];
    let mut tp = 0usize;
    for (_, i, j) in candidates {
        if !pred_used[i] && !truth_used[j] {
            pred_used[i] = true;
            truth_used[j] = true;
            tp += 1;
        }
    }

    let precision = if pred_values.is_empty() {
        0.0
    } else {
        tp as f64 / pred_values.len() as f64
    };
    let recall = if truth_values.is_empty() {
        0.0
    } else {
        tp as f64 / truth_values.len() as f64
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(PrfReport { precision, recall, f1, threshold })
}

/// What an extraction is scored against.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    /// Benchmark mode: labeled JSON.
    GroundTruth(Value),
    /// Self-feedback mode: the reconstructed page text stands in for
    /// ground truth; exact match has no meaning and scores 0.
    PageText(String),
}

/// Scores an extraction against a reference, producing the environment
/// state triple.
pub fn score_extraction(
    pred: &Value,
    reference: &Reference,
    judge_provider: &dyn Provider,
) -> Result<ScoreTriple> {
    match reference {
        Reference::GroundTruth(truth) => Ok(ScoreTriple {
            exact: exact_match(pred, truth)?,
            semantic: judge::semantic_match_basic(pred, truth, judge_provider)?,
            similarity: cosine_similarity(pred, truth)?,
        }),
        Reference::PageText(text) => {
            let similarity = cosine_of_bags(&value_token_bag(pred)?, &token_bag(text));
            Ok(ScoreTriple {
                exact: 0.0,
                semantic: judge::support_score(pred, text, judge_provider)?,
                similarity,
            })
        }
    }
}
