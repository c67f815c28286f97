use labloop_analysis::AnalysisError;
use labloop_atomistic::{DftError, StructError};
use labloop_core::CanonicalError;
use labloop_llm::LlmError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("no analysis results to summarize")]
    NoFindings,
    #[error("guidance text is empty")]
    EmptyGuidance,
    #[error("invalid claim: {0}")]
    InvalidClaim(String),
    #[error("research question is empty")]
    EmptyQuestion,
    #[error("literature client {client} unavailable after {attempts} attempts: {reason}")]
    ClientUnavailable { client: String, attempts: usize, reason: String },
    #[error("literature client {client} returned an empty answer")]
    EmptyAnswer { client: String },
    #[error("invalid instrument catalog: {0}")]
    Catalog(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("run {0} not found")]
    NotFound(String),
    #[error("run {run_id} is terminal ({stage})")]
    TerminalRun { run_id: String, stage: String },
    #[error("run {0} is waiting for guidance")]
    AwaitingGuidance(String),
    #[error("run {run_id} is at {stage}, not waiting for guidance")]
    WrongStage { run_id: String, stage: String },
    #[error("corrupt run state at {path}: {diagnostics}")]
    CorruptState { path: String, diagnostics: String },
    #[error("storage failure at {path}: {message}")]
    Storage { path: String, message: String },
    #[error("report failed validation: {0}")]
    InvalidReport(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Structure(#[from] StructError),
    #[error(transparent)]
    Dft(#[from] DftError),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
}

impl WorkflowError {
    /// True when the failure came from a completion backend or literature client.
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            WorkflowError::Llm(_)
                | WorkflowError::ClientUnavailable { .. }
                | WorkflowError::EmptyAnswer { .. }
                | WorkflowError::Structure(StructError::Backend(_) | StructError::UnparseableCompletion(_))
        )
    }
}

pub type Result<T, E = WorkflowError> = std::result::Result<T, E>;
