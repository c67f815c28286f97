//! HTTP service and command-line front end over the workflow engine.

pub mod cli;
pub mod clients;
pub mod http;
pub mod view;

use labloop_workflow::WorkflowError;

/// How a workflow error surfaces at the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    NotFound,
    Conflict,
    Invalid,
    Backend,
    Internal,
}

pub fn classify(err: &WorkflowError) -> ErrorClass {
    use WorkflowError as E;
    if err.is_backend() {
        return ErrorClass::Backend;
    }
    match err {
        E::NotFound(_) => ErrorClass::NotFound,
        E::TerminalRun { .. } | E::AwaitingGuidance(_) | E::WrongStage { .. } => ErrorClass::Conflict,
        E::InvalidInput(_) | E::EmptyGuidance | E::Catalog(_) => ErrorClass::Invalid,
        _ => ErrorClass::Internal,
    }
}

/// Machine-readable error code used in response bodies.
pub fn error_code(err: &WorkflowError) -> &'static str {
    use WorkflowError as E;
    match err {
        E::NoFindings => "no_findings",
        E::EmptyGuidance => "empty_guidance",
        E::InvalidClaim(_) => "invalid_claim",
        E::EmptyQuestion => "empty_question",
        E::ClientUnavailable { .. } => "client_unavailable",
        E::EmptyAnswer { .. } => "empty_answer",
        E::Catalog(_) => "invalid_catalog",
        E::InvalidInput(_) => "invalid_input",
        E::NotFound(_) => "not_found",
        E::TerminalRun { .. } => "terminal_run",
        E::AwaitingGuidance(_) => "awaiting_guidance",
        E::WrongStage { .. } => "wrong_stage",
        E::CorruptState { .. } => "corrupt_state",
        E::Storage { .. } => "storage",
        E::InvalidReport(_) => "invalid_report",
        E::Llm(_) => "backend",
        E::Analysis(_) => "analysis",
        E::Structure(_) => "structure",
        E::Dft(_) => "dft",
        E::Canonical(_) => "canonical",
    }
}
