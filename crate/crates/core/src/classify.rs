//! First-page document classification. One provider call produces a
//! label whose token logprobs are transformed into a percentage
//! confidence; unrecognized labels and sub-threshold confidence both
//! fall back to Unknown for manual review.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::linear_confidence;
use crate::provider::{ChatRequest, Provider, DEFAULT_LOGPROB_FALLBACK};

/// Confidence percentage below which a recognized label still becomes
/// Unknown.
pub const DEFAULT_CLASS_THRESHOLD_PCT: f64 = 60.0;

const CLASSIFY_MAX_TOKENS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DocumentClass {
    Invoice,
    PurchaseOrder,
    UtilityBill,
    Receipt,
    FinancialDocument,
    SalarySlip,
    Unknown,
}

impl DocumentClass {
    /// Every class a document can be assigned, Unknown last.
    pub const ALL: [DocumentClass; 7] = [
        DocumentClass::Invoice,
        DocumentClass::PurchaseOrder,
        DocumentClass::UtilityBill,
        DocumentClass::Receipt,
        DocumentClass::FinancialDocument,
        DocumentClass::SalarySlip,
        DocumentClass::Unknown,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DocumentClass::Invoice => "Invoice",
            DocumentClass::PurchaseOrder => "PurchaseOrder",
            DocumentClass::UtilityBill => "UtilityBill",
            DocumentClass::Receipt => "Receipt",
            DocumentClass::FinancialDocument => "FinancialDocument",
            DocumentClass::SalarySlip => "SalarySlip",
            DocumentClass::Unknown => "Unknown",
        }
    }
}

impl std::fmt::Display for DocumentClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Maps a raw model label onto a class, ignoring case, whitespace, and
/// punctuation ("purchase order" and "Purchase-Order" both match).
/// Unknown itself is not a valid model answer.
pub fn parse_label(raw: &str) -> Option<DocumentClass> {
    let folded: String = raw
        .chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect();
    DocumentClass::ALL
        .into_iter()
        .filter(|c| *c != DocumentClass::Unknown)
        .find(|c| c.as_str().to_lowercase() == folded)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub class: DocumentClass,
    /// Percentage in [0, 100] from the label-token logprobs.
    pub confidence: f64,
    /// Verbatim model output for audit.
    pub raw_label: String,
}

/// Fixed classification prompt over the first page's text.
pub fn classification_request(first_page_text: &str) -> ChatRequest {
    let classes: Vec<&str> = DocumentClass::ALL
        .iter()
        .filter(|c| **c != DocumentClass::Unknown)
        .map(DocumentClass::as_str)
        .collect();
    let system = format!(
        "You classify form documents. Reply with exactly one of these labels and nothing \
         else: {}.",
        classes.join(", "),
    );
    let user = format!(
        "Classify the document whose first page reads:\n\n{first_page_text}"
    );
    ChatRequest::new(system, user)
        .logprobs()
        .with_max_tokens(CLASSIFY_MAX_TOKENS)
}

/// Classifies a document by its first page.
///
/// Confidence is e^(mean label-token logprob) as a percentage. A result
/// is Unknown when the label is unrecognized or confidence falls below
/// the threshold; the measured confidence is preserved either way.
pub fn classify(
    first_page_text: &str,
    provider: &dyn Provider,
    threshold_pct: f64,
) -> Result<ClassificationResult> {
    if first_page_text.trim().is_empty() {
        return Err(Error::Shape("cannot classify an empty first page".to_string()));
    }
    if !threshold_pct.is_finite() || !(0.0..=100.0).contains(&threshold_pct) {
        return Err(Error::Range(format!(
            "classification threshold {threshold_pct} is outside [0, 100]"
        )));
    }

    let response = provider.complete(&classification_request(first_page_text))?;
    let raw_label = response.text.trim().to_string();
    let logprobs = response.logprobs_or(DEFAULT_LOGPROB_FALLBACK);
    let mean = logprobs.iter().sum::<f64>() / logprobs.len() as f64;
    let confidence = linear_confidence(mean)?;

    let class = match parse_label(&raw_label) {
        Some(c) if confidence >= threshold_pct => c,
        Some(c) => {
            log::warn!(
                "label {c} at {confidence:.2}% is below the {threshold_pct}% threshold; \
                 classifying as Unknown"
            );
            DocumentClass::Unknown
        }
        None => {
            log::warn!("unrecognized document label {raw_label:?}; classifying as Unknown");
            DocumentClass::Unknown
        }
    };
    Ok(ClassificationResult { class, confidence, raw_label })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{LlmClient, ScriptedBackend, ScriptedReply};
    use std::sync::Arc;

    fn provider_replying(reply: ScriptedReply) -> LlmClient {
        let backend = ScriptedBackend::new("classify-test").reply_contains("", reply);
        LlmClient::new(Arc::new(backend))
    }

    #[test]
    fn certain_invoice_scores_100() {
        let p = provider_replying(ScriptedReply::text("Invoice").with_logprobs(vec![0.0]));
        let r = classify("ACME invoice #42", &p, DEFAULT_CLASS_THRESHOLD_PCT).unwrap();
        assert_eq!(r.class, DocumentClass::Invoice);
        assert_eq!(r.confidence, 100.0);
        assert_eq!(r.raw_label, "Invoice");
    }

    #[test]
    fn low_confidence_label_becomes_unknown() {
        let p = provider_replying(ScriptedReply::text("Invoice").with_logprobs(vec![-2.0]));
        let r = classify("blurry scan", &p, 60.0).unwrap();
        assert_eq!(r.class, DocumentClass::Unknown);
        assert!((r.confidence - 13.53).abs() < 0.01);
        assert_eq!(r.raw_label, "Invoice");
    }

    #[test]
    fn unrecognized_label_becomes_unknown() {
        let p = provider_replying(ScriptedReply::text("Poem").with_logprobs(vec![0.0]));
        let r = classify("roses are red", &p, 60.0).unwrap();
        assert_eq!(r.class, DocumentClass::Unknown);
        assert_eq!(r.raw_label, "Poem");
        assert_eq!(r.confidence, 100.0);
    }

    #[test]
    fn label_matching_normalizes_punctuation_and_case() {
        assert_eq!(parse_label("purchase order"), Some(DocumentClass::PurchaseOrder));
        assert_eq!(parse_label("Purchase-Order"), Some(DocumentClass::PurchaseOrder));
        assert_eq!(parse_label(" INVOICE "), Some(DocumentClass::Invoice));
        assert_eq!(parse_label("salary slip"), Some(DocumentClass::SalarySlip));
        assert_eq!(parse_label("unknown"), None);
        assert_eq!(parse_label("poem"), None);
    }

    #[test]
    fn mean_of_label_token_logprobs() {
        let p = provider_replying(
            ScriptedReply::text("Utility Bill").with_logprobs(vec![-0.1, -0.3]),
        );
        let r = classify("power company statement", &p, 60.0).unwrap();
        assert_eq!(r.class, DocumentClass::UtilityBill);
        assert!((r.confidence - (-0.2f64).exp() * 100.0).abs() < 1e-9);
    }

    #[test]
    fn missing_logprobs_use_pessimistic_fallback() {
        let p = provider_replying(ScriptedReply::text("Receipt"));
        let r = classify("corner store receipt", &p, 60.0).unwrap();
        // e^-0.3 = 74.08% is above the 60% default threshold.
        assert_eq!(r.class, DocumentClass::Receipt);
        assert!((r.confidence - (-0.3f64).exp() * 100.0).abs() < 1e-9);
    }

    #[test]
    fn threshold_monotonicity() {
        // Lowering the threshold never turns a known class into Unknown.
        for threshold in [80.0, 60.0, 13.0, 0.0] {
            let p = provider_replying(ScriptedReply::text("Invoice").with_logprobs(vec![-2.0]));
            let r = classify("scan", &p, threshold).unwrap();
            if threshold <= 13.53 {
                assert_eq!(r.class, DocumentClass::Invoice, "threshold {threshold}");
            } else {
                assert_eq!(r.class, DocumentClass::Unknown, "threshold {threshold}");
            }
        }
    }

    #[test]
    fn input_validation() {
        let p = provider_replying(ScriptedReply::text("Invoice"));
        assert!(matches!(classify("  ", &p, 60.0), Err(Error::Shape(_))));
        assert!(matches!(classify("text", &p, 120.0), Err(Error::Range(_))));
    }

    #[test]
    fn provider_errors_propagate() {
        let backend = ScriptedBackend::new("classify-test");
        let p = LlmClient::new(Arc::new(backend));
        assert!(classify("text", &p, 60.0).is_err());
    }
}
