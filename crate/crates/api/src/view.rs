//! Response bodies. Each is a projection of stored run state.

use labloop_core::Timestamp;
use labloop_workflow::{Event, RunKind, Stage, WorkflowRun};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFlags {
    pub awaiting_guidance: bool,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactEntry {
    pub name: String,
    pub media_type: String,
    pub sha256: String,
    pub href: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiRunView {
    pub run_id: String,
    pub kind: RunKind,
    pub stage: Stage,
    pub created_at: Timestamp,
    pub flags: RunFlags,
    pub failure: Option<String>,
    pub event_count: usize,
    pub artifacts: Vec<ArtifactEntry>,
    /// Present once the run has a report.
    pub report: Option<String>,
}

impl ApiRunView {
    pub fn of(run: &WorkflowRun) -> Self {
        let base = format!("/v1/runs/{}", run.run_id);
        Self {
            run_id: run.run_id.clone(),
            kind: run.kind,
            stage: run.stage,
            created_at: run.created_at(),
            flags: RunFlags { awaiting_guidance: run.awaiting_guidance(), terminal: run.is_terminal() },
            failure: run.failure.clone(),
            event_count: run.events.len(),
            artifacts: run
                .artifacts
                .iter()
                .map(|a| ArtifactEntry {
                    name: a.name.clone(),
                    media_type: a.media_type.clone(),
                    sha256: a.sha256.clone(),
                    href: format!("{base}/artifacts/{}", a.name),
                })
                .collect(),
            report: run.stage.has_report().then(|| format!("{base}/report")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Created {
    pub run_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventsBody {
    pub run_id: String,
    pub stage: Stage,
    pub terminal: bool,
    pub awaiting_guidance: bool,
    pub events: Vec<Event>,
}

impl EventsBody {
    pub fn of(run: &WorkflowRun, events: Vec<Event>) -> Self {
        Self {
            run_id: run.run_id.clone(),
            stage: run.stage,
            terminal: run.is_terminal(),
            awaiting_guidance: run.awaiting_guidance(),
            events,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunList {
    pub runs: Vec<ApiRunView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}
