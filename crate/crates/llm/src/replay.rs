use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::backend::{Backend, Completion};
use crate::error::{LlmError, Result};
use crate::prompt::Prompt;
use crate::transcript::{append_transcripts, read_transcripts, Transcript};

/// Serves recorded completions by prompt hash; never touches the network.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    identity: String,
    by_hash: BTreeMap<String, Transcript>,
}

impl ReplayBackend {
    /// Later duplicates of a hash are ignored; a duplicate with different
    /// prompt text is a collision and is rejected.
    pub fn new(transcripts: Vec<Transcript>) -> Result<Self> {
        let identity = transcripts.first().map_or_else(|| "replay:empty".to_string(), |t| t.backend.clone());
        let mut by_hash = BTreeMap::new();
        for t in transcripts {
            match by_hash.get(&t.prompt_hash) {
                Some(existing) if existing_differs(existing, &t) => {
                    return Err(LlmError::Store {
                        path: "<transcripts>".into(),
                        message: format!("prompt hash {} recorded for two different prompts", &t.prompt_hash[..12]),
                    })
                }
                Some(_) => {}
                None => {
                    by_hash.insert(t.prompt_hash.clone(), t);
                }
            }
        }
        Ok(Self { identity, by_hash })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::new(read_transcripts(path)?)
    }

    pub fn len(&self) -> usize {
        self.by_hash.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_hash.is_empty()
    }
}

fn existing_differs(a: &Transcript, b: &Transcript) -> bool {
    a.prompt_text != b.prompt_text || a.template != b.template
}

impl Backend for ReplayBackend {
    /// The identity of the backend that produced the recording, so replayed
    /// reports are byte-identical to recorded ones.
    fn identity(&self) -> String {
        self.identity.clone()
    }

    fn supports_images(&self) -> bool {
        true
    }

    fn complete_raw(&self, prompt: &Prompt) -> Result<Completion> {
        let hash = prompt.hash();
        match self.by_hash.get(&hash) {
            Some(t) if t.prompt_text == prompt.text => Ok(t.to_completion()),
            _ => Err(LlmError::ReplayMiss { purpose: prompt.purpose.to_string(), hash_prefix: hash[..12].to_string() }),
        }
    }
}

/// Wraps another backend and keeps a transcript of every exchange, optionally
/// appending each one to a `.jsonl` file as it happens.
pub struct RecordingBackend<B> {
    inner: B,
    sink: Option<PathBuf>,
    log: Mutex<Vec<Transcript>>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self { inner, sink: None, log: Mutex::new(Vec::new()) }
    }

    pub fn persist_to(mut self, path: &Path) -> Self {
        self.sink = Some(path.to_path_buf());
        self
    }

    pub fn transcripts(&self) -> Vec<Transcript> {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn into_inner(self) -> B {
        self.inner
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn identity(&self) -> String {
        self.inner.identity()
    }

    fn supports_images(&self) -> bool {
        self.inner.supports_images()
    }

    fn complete_raw(&self, prompt: &Prompt) -> Result<Completion> {
        let completion = self.inner.complete_raw(prompt)?;
        let t = Transcript::new(prompt, &completion);
        let mut log = self.log.lock().unwrap_or_else(|e| e.into_inner());
        if !log.iter().any(|x| x.prompt_hash == t.prompt_hash) {
            if let Some(path) = &self.sink {
                append_transcripts(path, std::slice::from_ref(&t))?;
            }
            log.push(t);
        }
        Ok(completion)
    }
}
