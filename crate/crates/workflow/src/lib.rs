//! Orchestration of analysis, claim generation, novelty assessment,
//! recommendations and structure generation as resumable runs.

pub mod catalog;
pub mod claims;
pub mod engine;
pub mod error;
pub mod literature;
pub mod novelty;
pub mod recommend;
pub mod run;
pub mod store;
pub mod tools;

pub use catalog::InstrumentCatalog;
pub use engine::{next_stage, Engine};
pub use error::{Result, WorkflowError};
pub use literature::{
    LiteratureClient, MockLiteratureClient, RecordingLiteratureClient, RemoteLiteratureClient, RemoteLiteratureConfig,
    ReplayLiteratureClient,
};
pub use run::{edges, is_edge, Event, RecommendConfig, RunConfig, RunInput, RunKind, Stage, WorkflowRun};
pub use store::RunStore;
pub use tools::{AnalysisParams, AnalysisTool};
