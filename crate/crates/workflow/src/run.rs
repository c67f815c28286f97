//! Persistent run state: stages, the edge set, the event log and the
//! per-run configuration snapshot.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use labloop_atomistic::{BuildPlan, DftObjective, ValidationReport};
use labloop_core::{
    AnalysisSummary, Claim, ExperimentInput, Guidance, NoveltyAssessment, Recommendation, ResearchQuestion, Timestamp,
};
use serde::{Deserialize, Serialize};

use crate::catalog::InstrumentCatalog;
use crate::literature::LiteratureReport;
use crate::recommend::DEFAULT_MIN_SCORE_FOR_SIMULATION;
use crate::tools::{AnalysisParams, Hotspot, ToolChoice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    NoveltyAssessment,
    StructureSimulation,
}

impl RunKind {
    pub fn name(self) -> &'static str {
        match self {
            RunKind::NoveltyAssessment => "novelty_assessment",
            RunKind::StructureSimulation => "structure_simulation",
        }
    }
}

impl fmt::Display for RunKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The stage a run has reached, i.e. the last stage that completed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Created,
    // novelty assessment
    ToolSelection,
    Analysis,
    Summary,
    AwaitingGuidance,
    Claims,
    Questions,
    Literature,
    Scoring,
    Recommendations,
    Reported,
    // structure simulation
    Planning,
    Building,
    Validating,
    Refining,
    DftPrep,
    Completed,
    Unresolved,
    Failed,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Created => "created",
            Stage::ToolSelection => "tool_selection",
            Stage::Analysis => "analysis",
            Stage::Summary => "summary",
            Stage::AwaitingGuidance => "awaiting_guidance",
            Stage::Claims => "claims",
            Stage::Questions => "questions",
            Stage::Literature => "literature",
            Stage::Scoring => "scoring",
            Stage::Recommendations => "recommendations",
            Stage::Reported => "reported",
            Stage::Planning => "planning",
            Stage::Building => "building",
            Stage::Validating => "validating",
            Stage::Refining => "refining",
            Stage::DftPrep => "dft_prep",
            Stage::Completed => "completed",
            Stage::Unresolved => "unresolved",
            Stage::Failed => "failed",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Stage::Reported | Stage::Completed | Stage::Unresolved | Stage::Failed)
    }

    /// Stages whose completion produces a report document.
    pub fn has_report(self) -> bool {
        matches!(self, Stage::Reported | Stage::Completed)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Every transition a run of `kind` may take. Any non-terminal stage may
/// also fall to `Failed`.
pub fn edges(kind: RunKind) -> &'static [(Stage, Stage)] {
    use Stage::*;
    match kind {
        RunKind::NoveltyAssessment => &[
            (Created, ToolSelection),
            (ToolSelection, Analysis),
            (Analysis, Summary),
            (Summary, AwaitingGuidance),
            (Summary, Claims),
            (AwaitingGuidance, Claims),
            (Claims, Questions),
            (Questions, Literature),
            (Literature, Scoring),
            (Scoring, Recommendations),
            (Scoring, Reported),
            (Recommendations, Reported),
        ],
        RunKind::StructureSimulation => &[
            (Created, Planning),
            (Planning, Building),
            (Building, Validating),
            (Validating, Refining),
            (Refining, Building),
            (Validating, DftPrep),
            (Validating, Unresolved),
            (DftPrep, Completed),
        ],
    }
}

pub fn is_edge(kind: RunKind, from: Stage, to: Stage) -> bool {
    (to == Stage::Failed && !from.is_terminal()) || edges(kind).contains(&(from, to))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub timestamp: Timestamp,
    pub stage: Stage,
    pub event: String,
    #[serde(default)]
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecommendConfig {
    pub experiments: bool,
    pub simulations: bool,
}

impl Default for RecommendConfig {
    fn default() -> Self {
        Self { experiments: false, simulations: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Stop after the summary until guidance is submitted or skipped.
    pub pause_for_guidance: bool,
    /// Continue past the guidance checkpoint without waiting.
    pub skip_guidance: bool,
    pub recommend: RecommendConfig,
    pub min_score_for_sim: u8,
    pub max_claims: usize,
    pub max_attempts: usize,
    pub objective: DftObjective,
    /// Ask the literature client for DFT parameters during preparation.
    pub literature_parameters: bool,
    pub literature_concurrency: usize,
    pub catalog: Option<InstrumentCatalog>,
    pub analysis: AnalysisParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pause_for_guidance: false,
            skip_guidance: false,
            recommend: RecommendConfig::default(),
            min_score_for_sim: DEFAULT_MIN_SCORE_FOR_SIMULATION,
            max_claims: crate::claims::DEFAULT_MAX_CLAIMS,
            max_attempts: labloop_atomistic::DEFAULT_MAX_ATTEMPTS,
            objective: DftObjective::DefectRelaxation,
            literature_parameters: false,
            literature_concurrency: 2,
            catalog: None,
            analysis: AnalysisParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RunInput {
    /// An experimental artifact; `data_ref` names the stored copy once the run exists.
    Experiment(ExperimentInput),
    Request { text: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredArtifact {
    pub name: String,
    pub media_type: String,
    pub sha256: String,
}

/// Intermediate results of a novelty-assessment run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NoveltyState {
    pub tool: Option<ToolChoice>,
    pub findings: Vec<labloop_core::Finding>,
    pub hotspots: Vec<Hotspot>,
    pub summary: Option<AnalysisSummary>,
    pub claims: Vec<Claim>,
    pub questions: Vec<ResearchQuestion>,
    pub literature: Vec<LiteratureReport>,
    pub assessments: Vec<NoveltyAssessment>,
    pub recommendations: Vec<Recommendation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub attempt: usize,
    pub plan: BuildPlan,
    pub formula: Option<String>,
    pub atom_count: Option<usize>,
    pub report: Option<ValidationReport>,
}

/// Intermediate results of a structure-simulation run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationState {
    pub attempts: Vec<AttemptRecord>,
    pub files: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowRun {
    pub run_id: String,
    pub kind: RunKind,
    pub stage: Stage,
    /// Set when the run failed.
    #[serde(default)]
    pub failure: Option<String>,
    /// Set by an explicit skip at the guidance checkpoint.
    #[serde(default)]
    pub guidance_skipped: bool,
    pub input: RunInput,
    pub config: RunConfig,
    pub config_hash: String,
    pub events: Vec<Event>,
    pub guidance: Vec<Guidance>,
    pub artifacts: Vec<StoredArtifact>,
    pub backends: BTreeSet<String>,
    pub literature_clients: BTreeSet<String>,
    pub templates: BTreeSet<String>,
    pub caveats: Vec<String>,
    #[serde(default)]
    pub novelty: NoveltyState,
    #[serde(default)]
    pub simulation: SimulationState,
}

impl WorkflowRun {
    pub fn is_terminal(&self) -> bool {
        self.stage.is_terminal()
    }

    /// True when the run is paused and nothing will let it continue except
    /// guidance or an explicit skip.
    pub fn awaiting_guidance(&self) -> bool {
        self.stage == Stage::AwaitingGuidance && !self.guidance_skipped && !self.config.skip_guidance
    }

    pub fn next_seq(&self) -> u64 {
        self.events.last().map_or(0, |e| e.seq + 1)
    }

    /// Logical clock: the sequence number of the next event.
    pub fn now(&self) -> Timestamp {
        Timestamp(self.next_seq())
    }

    pub fn created_at(&self) -> Timestamp {
        self.events.first().map_or(Timestamp(0), |e| e.timestamp)
    }

    pub fn push_event(&mut self, stage: Stage, event: impl Into<String>, artifacts: Vec<String>) -> Event {
        let seq = self.next_seq();
        let e = Event { seq, timestamp: Timestamp(seq), stage, event: event.into(), artifacts };
        self.events.push(e.clone());
        e
    }

    pub fn artifact(&self, name: &str) -> Option<&StoredArtifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }

    pub fn material(&self) -> String {
        match &self.input {
            RunInput::Experiment(e) => e.material().unwrap_or("an unspecified material").to_string(),
            RunInput::Request { .. } => String::new(),
        }
    }

    pub fn metadata(&self) -> BTreeMap<String, String> {
        match &self.input {
            RunInput::Experiment(e) => e.metadata.clone(),
            RunInput::Request { .. } => BTreeMap::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failed_is_reachable_only_from_live_stages() {
        assert!(is_edge(RunKind::NoveltyAssessment, Stage::Claims, Stage::Failed));
        assert!(!is_edge(RunKind::NoveltyAssessment, Stage::Reported, Stage::Failed));
        assert!(!is_edge(RunKind::NoveltyAssessment, Stage::Planning, Stage::Building));
        assert!(is_edge(RunKind::StructureSimulation, Stage::Refining, Stage::Building));
    }

    #[test]
    fn every_edge_starts_at_a_live_stage() {
        for kind in [RunKind::NoveltyAssessment, RunKind::StructureSimulation] {
            for (from, to) in edges(kind) {
                assert!(!from.is_terminal(), "{from} -> {to}");
            }
        }
    }
}
