//! On-disk run storage. One directory per run:
//!
//! ```text
//! runs/<id>/state.doc        canonical WorkflowRun (the commit point)
//! runs/<id>/artifacts/*      binary and JSON artifacts
//! runs/<id>/report.doc       canonical report, once the run has one
//! runs/<id>/transcripts/*    backend and literature exchanges (.jsonl)
//! ```
//!
//! Every file is written to a temporary sibling and renamed into place.
//! Artifacts are written before the state that references them, so a crash
//! between stages leaves the previous state intact.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use labloop_core::{canonical_parse, canonical_serialize, digest_hex, ReportDocument};
use labloop_llm::{append_transcripts, Transcript};

use crate::error::{Result, WorkflowError};
use crate::literature::{append_literature_transcripts, LiteratureTranscript};
use crate::run::{StoredArtifact, WorkflowRun};

pub const STATE_FILE: &str = "state.doc";
pub const REPORT_FILE: &str = "report.doc";
pub const LLM_TRANSCRIPTS: &str = "llm.jsonl";
pub const LITERATURE_TRANSCRIPTS: &str = "literature.jsonl";

#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

fn storage(path: &Path, e: impl ToString) -> WorkflowError {
    WorkflowError::Storage { path: path.display().to_string(), message: e.to_string() }
}

/// Write `bytes` to `path` via a temporary file and an atomic rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().ok_or_else(|| storage(path, "no parent directory"))?;
    fs::create_dir_all(dir).map_err(|e| storage(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(|e| storage(&tmp, e))?;
    f.write_all(bytes).map_err(|e| storage(&tmp, e))?;
    f.sync_all().map_err(|e| storage(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| storage(path, e))
}

/// Artifact names are plain file names; anything that could escape the
/// run directory is rejected.
pub fn valid_artifact_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('.')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

impl RunStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let runs = root.join("runs");
        fs::create_dir_all(&runs).map_err(|e| storage(&runs, e))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join("runs").join(run_id)
    }

    pub fn artifact_path(&self, run_id: &str, name: &str) -> PathBuf {
        self.run_dir(run_id).join("artifacts").join(name)
    }

    pub fn transcript_path(&self, run_id: &str, file: &str) -> PathBuf {
        self.run_dir(run_id).join("transcripts").join(file)
    }

    pub fn exists(&self, run_id: &str) -> bool {
        valid_artifact_name(run_id) && self.run_dir(run_id).join(STATE_FILE).is_file()
    }

    /// Run ids in name order.
    pub fn list(&self) -> Result<Vec<String>> {
        let runs = self.root.join("runs");
        let mut ids: Vec<String> = fs::read_dir(&runs)
            .map_err(|e| storage(&runs, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().to_str().map(str::to_string))
            .filter(|id| self.exists(id))
            .collect();
        ids.sort();
        Ok(ids)
    }

    pub fn save(&self, run: &WorkflowRun) -> Result<()> {
        let bytes = canonical_serialize(run)?;
        write_atomic(&self.run_dir(&run.run_id).join(STATE_FILE), &bytes)
    }

    /// Load a run and check that every artifact it references is present
    /// and unchanged. Damage is reported, never repaired.
    pub fn load(&self, run_id: &str) -> Result<WorkflowRun> {
        if !self.exists(run_id) {
            return Err(WorkflowError::NotFound(run_id.to_string()));
        }
        let path = self.run_dir(run_id).join(STATE_FILE);
        let corrupt = |d: String| WorkflowError::CorruptState { path: path.display().to_string(), diagnostics: d };
        let bytes = fs::read(&path).map_err(|e| storage(&path, e))?;
        let run: WorkflowRun = canonical_parse(&bytes).map_err(|e| corrupt(e.to_string()))?;
        if run.run_id != run_id {
            return Err(corrupt(format!("state names run {} but lives under {run_id}", run.run_id)));
        }
        let mut problems = Vec::new();
        for w in run.events.windows(2) {
            if w[1].seq != w[0].seq + 1 || w[1].timestamp < w[0].timestamp {
                problems.push(format!("event log out of order at seq {}", w[1].seq));
            }
        }
        for a in &run.artifacts {
            match fs::read(self.artifact_path(run_id, &a.name)) {
                Err(e) => problems.push(format!("artifact {}: {e}", a.name)),
                Ok(b) if digest_hex(&b) != a.sha256 => problems.push(format!("artifact {} does not match its recorded digest", a.name)),
                Ok(_) => {}
            }
        }
        if problems.is_empty() {
            Ok(run)
        } else {
            Err(corrupt(problems.join("; ")))
        }
    }

    pub fn write_artifact(&self, run_id: &str, name: &str, media_type: &str, bytes: &[u8]) -> Result<StoredArtifact> {
        if !valid_artifact_name(name) {
            return Err(WorkflowError::InvalidInput(format!("artifact name {name:?}")));
        }
        write_atomic(&self.artifact_path(run_id, name), bytes)?;
        Ok(StoredArtifact { name: name.into(), media_type: media_type.into(), sha256: digest_hex(bytes) })
    }

    pub fn read_artifact(&self, run_id: &str, name: &str) -> Result<Vec<u8>> {
        if !valid_artifact_name(name) {
            return Err(WorkflowError::NotFound(format!("{run_id}/{name}")));
        }
        let p = self.artifact_path(run_id, name);
        fs::read(&p).map_err(|_| WorkflowError::NotFound(format!("{run_id}/{name}")))
    }

    pub fn write_report(&self, run_id: &str, report: &ReportDocument) -> Result<Vec<u8>> {
        let bytes = canonical_serialize(report)?;
        write_atomic(&self.run_dir(run_id).join(REPORT_FILE), &bytes)?;
        Ok(bytes)
    }

    /// Canonical report bytes exactly as stored.
    pub fn read_report(&self, run_id: &str) -> Result<Vec<u8>> {
        let p = self.run_dir(run_id).join(REPORT_FILE);
        fs::read(&p).map_err(|_| WorkflowError::NotFound(format!("{run_id}/{REPORT_FILE}")))
    }

    pub fn append_llm(&self, run_id: &str, items: &[Transcript]) -> Result<()> {
        if items.is_empty() {
            return Ok(());
        }
        Ok(append_transcripts(&self.transcript_path(run_id, LLM_TRANSCRIPTS), items)?)
    }

    pub fn append_literature(&self, run_id: &str, items: &[LiteratureTranscript]) -> Result<()> {
        if items.is_empty() {
            return Ok(());
        }
        append_literature_transcripts(&self.transcript_path(run_id, LITERATURE_TRANSCRIPTS), items)
    }
}
