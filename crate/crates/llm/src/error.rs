use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("backend {backend} unavailable: {reason}")]
    BackendUnavailable { backend: String, reason: String },
    #[error("no recorded completion for {purpose} prompt {hash_prefix}")]
    ReplayMiss { purpose: String, hash_prefix: String },
    #[error("no scripted response for {purpose} prompt {hash_prefix}")]
    ScriptMiss { purpose: String, hash_prefix: String },
    #[error("backend {backend} cannot accept image attachment {attachment}")]
    CapabilityMismatch { backend: String, attachment: String },
    #[error("completion could not be parsed: {0}")]
    Unparseable(String),
    #[error("template {template}: {message}")]
    Template { template: String, message: String },
    #[error("transcript store {path}: {message}")]
    Store { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, LlmError>;
