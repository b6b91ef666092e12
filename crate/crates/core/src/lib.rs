//! Agentic extraction engine for form-like documents.
//!
//! The pipeline turns OCR output (or plain text) into structured JSON:
//! layout-aware text reconstruction, document classification, episodic
//! schema building and extraction refinement driven by meta-prompting
//! actions, pluggable action policies (LLM-guided, ε-greedy, softmax
//! contextual bandit), and a set of evaluation metrics used both for
//! benchmarking against ground truth and as in-the-loop reward signals.
//!
//! Modules mirror those stages:
//! - [`layout`]: OCR block geometry to layout-preserving page text
//! - [`json`]: document flattening, schema inference, complexity
//! - [`metrics`]: exact/cosine/semantic/fuzzy scores and confidence
//! - [`provider`]: LLM access with scripted playback, retries, caching
//! - [`classify`]: document-class routing with linear confidence
//! - [`metaprompt`]: the five prompt-refinement actions
//! - [`env`]: episodic schema-build and extraction environments
//! - [`policy`]: action-selection strategies over those environments
//! - [`pipeline`]: end-to-end baseline and agentic document runs
//! - [`config`]: run configuration shared by library and CLI

pub mod classify;
pub mod config;
pub mod env;
pub mod error;
pub mod json;
pub mod layout;
pub mod metaprompt;
pub mod metrics;
pub mod pipeline;
pub mod policy;
pub mod provider;

pub use error::{Error, Result};
