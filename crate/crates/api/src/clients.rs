//! `kind:argument` specifications for completion backends and literature clients.

use std::path::Path;
use std::sync::Arc;

use labloop_llm::{Backend, RemoteBackend, RemoteConfig, ReplayBackend, ScriptedBackend};
use labloop_workflow::{
    LiteratureClient, MockLiteratureClient, RemoteLiteratureClient, RemoteLiteratureConfig, ReplayLiteratureClient,
};

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error("{flag}: expected kind:argument, got {spec:?}")]
    Malformed { flag: &'static str, spec: String },
    #[error("{flag}: unknown kind {kind:?} (expected one of {expected})")]
    UnknownKind { flag: &'static str, kind: String, expected: &'static str },
    #[error("{flag}: {message}")]
    Load { flag: &'static str, message: String },
}

fn split<'a>(flag: &'static str, spec: &'a str) -> Result<(&'a str, &'a str), SpecError> {
    match spec.split_once(':') {
        Some((k, a)) if !a.is_empty() => Ok((k, a)),
        _ => Err(SpecError::Malformed { flag, spec: spec.into() }),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(flag: &'static str, path: &str) -> Result<T, SpecError> {
    let text = std::fs::read_to_string(path).map_err(|e| SpecError::Load { flag, message: format!("{path}: {e}") })?;
    serde_json::from_str(&text).map_err(|e| SpecError::Load { flag, message: format!("{path}: {e}") })
}

/// `replay:<transcripts.jsonl>`, `scripted:<rules.json>` or `remote:<config.json>`.
pub fn backend_from_spec(spec: &str) -> Result<Arc<dyn Backend>, SpecError> {
    const FLAG: &str = "--backend";
    let load = |e: labloop_llm::LlmError| SpecError::Load { flag: FLAG, message: e.to_string() };
    let (kind, arg) = split(FLAG, spec)?;
    Ok(match kind {
        "replay" => Arc::new(ReplayBackend::from_path(Path::new(arg)).map_err(load)?),
        "scripted" => Arc::new(ScriptedBackend::from_file(Path::new(arg)).map_err(load)?),
        "remote" => Arc::new(RemoteBackend::new(read_json::<RemoteConfig>(FLAG, arg)?)),
        other => {
            return Err(SpecError::UnknownKind { flag: FLAG, kind: other.into(), expected: "replay, scripted, remote" })
        }
    })
}

/// `mock:<fixture.json>`, `replay:<transcripts.jsonl>` or `remote:<config.json>`.
pub fn literature_from_spec(spec: &str) -> Result<Arc<dyn LiteratureClient>, SpecError> {
    const FLAG: &str = "--literature";
    let load = |e: labloop_workflow::WorkflowError| SpecError::Load { flag: FLAG, message: e.to_string() };
    let (kind, arg) = split(FLAG, spec)?;
    Ok(match kind {
        "mock" => Arc::new(MockLiteratureClient::from_file(Path::new(arg)).map_err(load)?),
        "replay" => Arc::new(ReplayLiteratureClient::from_path(Path::new(arg)).map_err(load)?),
        "remote" => Arc::new(RemoteLiteratureClient::new(read_json::<RemoteLiteratureConfig>(FLAG, arg)?)),
        other => return Err(SpecError::UnknownKind { flag: FLAG, kind: other.into(), expected: "mock, replay, remote" }),
    })
}
