use labloop_llm::LlmError;
use thiserror::Error;

use crate::generate::Attempt;

#[derive(Debug, Error)]
pub enum StructError {
    #[error("empty structure request")]
    EmptyRequest,
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("unknown element `{0}`")]
    UnknownElement(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("instruction {index}: selector matches no atoms")]
    SelectorEmpty { index: usize },
    #[error("instruction {index}: {message}")]
    InstructionConflict { index: usize, message: String },
    #[error("invalid structure: {0}")]
    InvalidStructure(String),
    #[error("{0} atoms exceed the rendering limit")]
    TooManyAtoms(usize),
    #[error("completion could not be turned into a plan: {0}")]
    UnparseableCompletion(String),
    #[error("structure still failing validation after {} attempts", .trace.len())]
    Unresolved { trace: Vec<Attempt> },
    #[error(transparent)]
    Backend(LlmError),
}

impl From<LlmError> for StructError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Unparseable(m) => StructError::UnparseableCompletion(m),
            other => StructError::Backend(other),
        }
    }
}

#[derive(Debug, Error)]
pub enum DftError {
    #[error("structure has no atoms")]
    EmptyStructure,
    #[error("INCAR specification is empty")]
    EmptySpec,
    #[error("POSCAR line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Structure(#[from] StructError),
}

pub type Result<T, E = StructError> = std::result::Result<T, E>;
