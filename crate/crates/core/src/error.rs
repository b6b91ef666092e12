use std::path::PathBuf;

use thiserror::Error;

/// Unified error type for the whole engine.
///
/// Variants are grouped by origin: input handling (geometry, parsing,
/// shapes), provider transport, scripted playback, evaluation, and
/// lifecycle contract violations (stepping a finished episode and the
/// like). The CLI maps these onto process exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context} at line {line}, column {column}: {message}")]
    Parse {
        context: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported document shape: {0}")]
    Shape(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("lifecycle contract violated: {0}")]
    Contract(String),

    #[error("missing context: {0}")]
    MissingContext(String),

    #[error("authentication failed: {0}")]
    Auth(String),

    #[error("transport failure: {0}")]
    Transport(String),

    #[error("transport failed after {attempts} attempts: {message}")]
    ExhaustedRetries { attempts: u32, message: String },

    #[error("no scripted reply matches request {key}")]
    ScriptedMiss { key: String },

    #[error("reply is not valid JSON after one corrective retry: {0}")]
    MalformedReply(String),

    #[error("evaluation unavailable: {0}")]
    EvaluationUnavailable(String),

    #[error("judge reply unusable after one re-ask: {0}")]
    JudgeUnusable(String),

    #[error("perplexity undefined for an empty logprob sequence")]
    EmptyLogprobs,

    #[error("extraction failed: {0}")]
    ExtractionFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn parse_json(context: impl Into<String>, err: &serde_json::Error) -> Self {
        Error::Parse {
            context: context.into(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    /// True for failures worth retrying at the transport layer.
    pub fn is_retriable(&self) -> bool {
        matches!(self, Error::Transport(_))
    }
}
