use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::types::{Claim, Guidance, NoveltyAssessment, Recommendation, ResearchQuestion, Timestamp};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// A named number reported by an analysis tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyNumber {
    pub name: String,
    pub value: f64,
    pub unit: String,
}

impl KeyNumber {
    pub fn new(name: impl Into<String>, value: f64, unit: impl Into<String>) -> Self {
        Self { name: name.into(), value: crate::canonical_f64(value), unit: unit.into() }
    }
}

/// Structured output of one analysis tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub tool: String,
    pub numbers: Vec<KeyNumber>,
    #[serde(default)]
    pub observations: Vec<String>,
    pub artifacts: Vec<String>,
}

/// Structured findings plus the narrative a backend wrote about them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub metadata_digest: String,
    pub findings: Vec<Finding>,
    pub narrative: String,
    /// Numbers quoted in the narrative with no counterpart in `findings`.
    #[serde(default)]
    pub number_mismatches: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub name: String,
    pub media_type: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSummary {
    pub kind: String,
    #[serde(default)]
    pub data_ref: Option<String>,
    #[serde(default)]
    pub request: Option<String>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

/// One pass of the build/validate loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptSummary {
    pub attempt: u32,
    pub plan_digest: String,
    pub issue_codes: Vec<String>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSection {
    pub request: String,
    pub objective: String,
    pub formula: String,
    pub atom_count: usize,
    pub attempts: Vec<AttemptSummary>,
    pub resolved: bool,
    /// Artifact names of the emitted input files.
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub backends: Vec<String>,
    pub literature_clients: Vec<String>,
    pub config_hash: String,
    /// template id@version -> content hash
    pub prompt_templates: BTreeMap<String, String>,
    pub started_at: Timestamp,
    pub finished_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub run_id: String,
    pub run_kind: String,
    pub input: InputSummary,
    pub analyses: Vec<AnalysisSummary>,
    pub claims: Vec<Claim>,
    pub questions: Vec<ResearchQuestion>,
    pub assessments: Vec<NoveltyAssessment>,
    pub recommendations: Vec<Recommendation>,
    pub guidance: Vec<Guidance>,
    pub simulation: Option<SimulationSection>,
    pub artifacts: Vec<ArtifactRef>,
    #[serde(default)]
    pub caveats: Vec<String>,
    pub provenance: Provenance,
}

impl ReportDocument {
    /// An empty report for `run_id`, used as the starting point by pipelines.
    pub fn empty(run_id: impl Into<String>, run_kind: impl Into<String>, input: InputSummary) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            run_id: run_id.into(),
            run_kind: run_kind.into(),
            input,
            analyses: Vec::new(),
            claims: Vec::new(),
            questions: Vec::new(),
            assessments: Vec::new(),
            recommendations: Vec::new(),
            guidance: Vec::new(),
            simulation: None,
            artifacts: Vec::new(),
            caveats: Vec::new(),
            provenance: Provenance::default(),
        }
    }

    pub fn artifact(&self, name: &str) -> Option<&ArtifactRef> {
        self.artifacts.iter().find(|a| a.name == name)
    }
}
