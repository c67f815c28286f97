//! Shared vocabulary for the experiment-to-simulation pipeline.
//!
//! Everything that crosses a module boundary lives here: experiment inputs,
//! claims, research questions, novelty assessments, recommendations and the
//! report document that bundles them. Reports are persisted in a canonical
//! text format (see [`canonical`]) so that golden files stay byte-stable.

pub mod canonical;
pub mod ids;
pub mod report;
pub mod types;
pub mod validate;

pub use canonical::{canonical_f64, canonical_parse, canonical_serialize, CanonicalError};
pub use ids::{content_id, digest_hex};
pub use report::{
    AnalysisSummary, ArtifactRef, AttemptSummary, Finding, InputSummary, KeyNumber, Provenance, ReportDocument,
    SimulationSection, REPORT_SCHEMA_VERSION,
};
pub use types::{
    score_category, Claim, ClaimOrigin, ExperimentInput, Guidance, InputKind, NoveltyAssessment,
    NoveltyCategory, Recommendation, RecommendationKind, Region, ResearchQuestion, Target,
    Timestamp,
};
pub use validate::{validate_report, Violation};
