use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::Completion;
use crate::error::{LlmError, Result};
use crate::prompt::{Prompt, Purpose};

/// One recorded backend exchange. The full prompt text is kept next to its
/// hash so collisions can be detected on replay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub prompt_hash: String,
    pub purpose: Purpose,
    pub template: String,
    pub prompt_text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attachments: Vec<String>,
    pub completion: String,
    pub backend: String,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
}

impl Transcript {
    pub fn new(prompt: &Prompt, completion: &Completion) -> Self {
        Self {
            prompt_hash: prompt.hash(),
            purpose: prompt.purpose,
            template: prompt.template_key(),
            prompt_text: prompt.text.clone(),
            attachments: prompt.attachments.iter().map(|a| a.sha256.clone()).collect(),
            completion: completion.text.clone(),
            backend: completion.backend.clone(),
            latency_ms: completion.latency_ms,
            prompt_tokens: completion.prompt_tokens,
            completion_tokens: completion.completion_tokens,
        }
    }

    pub fn to_completion(&self) -> Completion {
        Completion {
            text: self.completion.clone(),
            backend: self.backend.clone(),
            latency_ms: self.latency_ms,
            prompt_tokens: self.prompt_tokens,
            completion_tokens: self.completion_tokens,
        }
    }
}

fn store_err(path: &Path, e: impl ToString) -> LlmError {
    LlmError::Store { path: path.display().to_string(), message: e.to_string() }
}

/// Read transcripts from a `.jsonl` file, a single `.json` transcript, or a
/// directory of either (files visited in name order).
pub fn read_transcripts(path: &Path) -> Result<Vec<Transcript>> {
    if path.is_dir() {
        let mut entries: Vec<_> = fs::read_dir(path)
            .map_err(|e| store_err(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("json" | "jsonl")))
            .collect();
        entries.sort();
        let mut out = Vec::new();
        for p in entries {
            out.extend(read_transcripts(&p)?);
        }
        return Ok(out);
    }
    let text = fs::read_to_string(path).map_err(|e| store_err(path, e))?;
    if path.extension().and_then(|e| e.to_str()) == Some("json") {
        return serde_json::from_str(&text).map(|t| vec![t]).map_err(|e| store_err(path, e));
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| store_err(path, format!("line {}: {e}", i + 1))))
        .collect()
}

/// Append transcripts to a `.jsonl` file, creating it if needed.
pub fn append_transcripts(path: &Path, items: &[Transcript]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| store_err(path, e))?;
    }
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path).map_err(|e| store_err(path, e))?;
    for t in items {
        let line = serde_json::to_string(t).map_err(|e| store_err(path, e))?;
        writeln!(f, "{line}").map_err(|e| store_err(path, e))?;
    }
    Ok(())
}
