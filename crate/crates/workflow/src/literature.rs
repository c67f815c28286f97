//! Literature clients: a fixture-backed mock, transcript record/replay and a
//! remote HTTP client, plus the retrying query used by the pipeline.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use labloop_core::{digest_hex, ResearchQuestion, Timestamp};
use labloop_llm::Semaphore;
use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Result, WorkflowError};

/// Attached to every report from the remote service, which reads text only.
pub const FIGURE_CAVEAT: &str =
    "The literature service searches article text only; figures and figure-only results in the cited work were not examined.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Citation {
    pub id: String,
    #[serde(default)]
    pub snippet: String,
}

/// A client's answer before it is tied to a question and a time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiteratureAnswer {
    pub answer: String,
    #[serde(default)]
    pub citations: Vec<Citation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiteratureReport {
    pub question_id: String,
    pub question: String,
    pub answer_text: String,
    pub citations: Vec<Citation>,
    pub client: String,
    pub retrieved_at: Timestamp,
    #[serde(default)]
    pub caveats: Vec<String>,
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientError {
    /// Worth retrying (timeouts, rate limits, server errors).
    Transient(String),
    Fatal(String),
}

/// A literature search service. Implementations must be safe to share.
pub trait LiteratureClient: Send + Sync {
    fn identity(&self) -> String;

    fn ask(&self, question: &str) -> std::result::Result<LiteratureAnswer, ClientError>;

    /// Caveats to attach to every report from this client.
    fn caveats(&self) -> Vec<String> {
        Vec::new()
    }
}

impl<C: LiteratureClient + ?Sized> LiteratureClient for std::sync::Arc<C> {
    fn identity(&self) -> String {
        (**self).identity()
    }
    fn ask(&self, question: &str) -> std::result::Result<LiteratureAnswer, ClientError> {
        (**self).ask(question)
    }
    fn caveats(&self) -> Vec<String> {
        (**self).caveats()
    }
}

impl<C: LiteratureClient + ?Sized> LiteratureClient for &C {
    fn identity(&self) -> String {
        (**self).identity()
    }
    fn ask(&self, question: &str) -> std::result::Result<LiteratureAnswer, ClientError> {
        (**self).ask(question)
    }
    fn caveats(&self) -> Vec<String> {
        (**self).caveats()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: usize,
    /// Delay before the second attempt; doubled afterwards.
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 3, base_delay_ms: 250 }
    }
}

/// Ask `client` with the default retry policy (3 attempts, exponential backoff).
pub fn query_literature(question: &ResearchQuestion, client: &dyn LiteratureClient, at: Timestamp) -> Result<LiteratureReport> {
    query_literature_with(question, client, at, RetryPolicy::default())
}

pub fn query_literature_with(
    question: &ResearchQuestion,
    client: &dyn LiteratureClient,
    at: Timestamp,
    policy: RetryPolicy,
) -> Result<LiteratureReport> {
    let text = question.text.trim();
    if text.is_empty() {
        return Err(WorkflowError::EmptyQuestion);
    }
    let attempts = policy.attempts.max(1);
    let mut last = String::new();
    for attempt in 1..=attempts {
        if attempt > 1 {
            std::thread::sleep(Duration::from_millis(policy.base_delay_ms << (attempt - 2)));
        }
        match client.ask(text) {
            Ok(a) => {
                tracing::info!(client = %client.identity(), attempts = attempt, "literature query answered");
                if a.answer.trim().is_empty() {
                    return Err(WorkflowError::EmptyAnswer { client: client.identity() });
                }
                return Ok(LiteratureReport {
                    question_id: question.claim_id.clone(),
                    question: text.to_string(),
                    answer_text: a.answer,
                    citations: a.citations,
                    client: client.identity(),
                    retrieved_at: at,
                    caveats: client.caveats(),
                    attempts: attempt,
                });
            }
            Err(ClientError::Transient(m)) => {
                tracing::warn!(client = %client.identity(), attempt, error = %m, "literature query failed");
                last = m;
            }
            Err(ClientError::Fatal(m)) => {
                return Err(WorkflowError::ClientUnavailable { client: client.identity(), attempts: attempt, reason: m })
            }
        }
    }
    Err(WorkflowError::ClientUnavailable { client: client.identity(), attempts, reason: last })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockEntry {
    /// Case-insensitive regular expression matched against the question.
    pub pattern: String,
    pub answer: String,
    #[serde(default)]
    pub citations: Vec<Citation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MockFile {
    name: String,
    #[serde(default)]
    entries: Vec<MockEntry>,
    #[serde(default)]
    fallback: Option<LiteratureAnswer>,
}

/// Canned answers keyed by question pattern; the first match wins.
pub struct MockLiteratureClient {
    name: String,
    entries: Vec<(Regex, MockEntry)>,
    fallback: Option<LiteratureAnswer>,
    failures: AtomicUsize,
}

impl MockLiteratureClient {
    pub fn new(name: &str) -> Self {
        Self { name: name.into(), entries: Vec::new(), fallback: None, failures: AtomicUsize::new(0) }
    }

    pub fn entry(mut self, pattern: &str, answer: &str, citations: Vec<Citation>) -> Result<Self> {
        let e = MockEntry { pattern: pattern.into(), answer: answer.into(), citations };
        let re = compile(&e.pattern)?;
        self.entries.push((re, e));
        Ok(self)
    }

    /// Answer for questions no pattern matches (e.g. "no prior reports").
    pub fn fallback(mut self, answer: &str) -> Self {
        self.fallback = Some(LiteratureAnswer { answer: answer.into(), citations: vec![] });
        self
    }

    /// Fail the next `n` calls with a transient error.
    pub fn failing_first(self, n: usize) -> Self {
        self.failures.store(n, Ordering::SeqCst);
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: MockFile = serde_json::from_str(text).map_err(|e| WorkflowError::InvalidInput(format!("literature fixture: {e}")))?;
        let mut c = Self::new(&f.name);
        for e in f.entries {
            let re = compile(&e.pattern)?;
            c.entries.push((re, e));
        }
        c.fallback = f.fallback;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(|e| storage(path, e))?)
    }
}

fn compile(pattern: &str) -> Result<Regex> {
    RegexBuilder::new(pattern)
        .case_insensitive(true)
        .build()
        .map_err(|e| WorkflowError::InvalidInput(format!("literature pattern {pattern:?}: {e}")))
}

fn storage(path: &Path, e: impl ToString) -> WorkflowError {
    WorkflowError::Storage { path: path.display().to_string(), message: e.to_string() }
}

impl LiteratureClient for MockLiteratureClient {
    fn identity(&self) -> String {
        format!("mock:{}", self.name)
    }

    fn ask(&self, question: &str) -> std::result::Result<LiteratureAnswer, ClientError> {
        if self.failures.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1)).is_ok() {
            return Err(ClientError::Transient("injected failure".into()));
        }
        if let Some((_, e)) = self.entries.iter().find(|(re, _)| re.is_match(question)) {
            return Ok(LiteratureAnswer { answer: e.answer.clone(), citations: e.citations.clone() });
        }
        self.fallback.clone().ok_or_else(|| ClientError::Fatal(format!("no fixture entry matches {question:?}")))
    }
}

/// One recorded literature exchange.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiteratureTranscript {
    pub question_hash: String,
    pub question: String,
    pub answer: LiteratureAnswer,
    pub client: String,
    #[serde(default)]
    pub caveats: Vec<String>,
}

pub fn question_hash(question: &str) -> String {
    digest_hex(question.trim().as_bytes())
}

pub fn read_literature_transcripts(path: &Path) -> Result<Vec<LiteratureTranscript>> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| storage(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    let mut out = Vec::new();
    for f in files {
        let text = fs::read_to_string(&f).map_err(|e| storage(&f, e))?;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            out.push(serde_json::from_str(line).map_err(|e| storage(&f, format!("line {}: {e}", i + 1)))?);
        }
    }
    Ok(out)
}

pub fn append_literature_transcripts(path: &Path, items: &[LiteratureTranscript]) -> Result<()> {
    if items.is_empty() {
        return Ok(());
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| storage(dir, e))?;
    }
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path).map_err(|e| storage(path, e))?;
    let mut buf = String::new();
    for t in items {
        buf.push_str(&serde_json::to_string(t).expect("transcript serializes"));
        buf.push('\n');
    }
    f.write_all(buf.as_bytes()).map_err(|e| storage(path, e))?;
    f.sync_all().map_err(|e| storage(path, e))
}

/// Serves recorded answers by question hash; a miss is a fatal error.
pub struct ReplayLiteratureClient {
    identity: String,
    caveats: Vec<String>,
    by_hash: BTreeMap<String, LiteratureTranscript>,
}

impl ReplayLiteratureClient {
    pub fn new(transcripts: Vec<LiteratureTranscript>) -> Self {
        let identity = transcripts.first().map_or_else(|| "replay:empty".to_string(), |t| t.client.clone());
        let caveats = transcripts.first().map(|t| t.caveats.clone()).unwrap_or_default();
        let mut by_hash = BTreeMap::new();
        for t in transcripts {
            by_hash.entry(t.question_hash.clone()).or_insert(t);
        }
        Self { identity, caveats, by_hash }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Ok(Self::new(read_literature_transcripts(path)?))
    }
}

impl LiteratureClient for ReplayLiteratureClient {
    fn identity(&self) -> String {
        self.identity.clone()
    }

    fn ask(&self, question: &str) -> std::result::Result<LiteratureAnswer, ClientError> {
        let h = question_hash(question);
        self.by_hash
            .get(&h)
            .map(|t| t.answer.clone())
            .ok_or_else(|| ClientError::Fatal(format!("no recorded answer for question {}", &h[..12])))
    }

    fn caveats(&self) -> Vec<String> {
        self.caveats.clone()
    }
}

/// Wraps a client and keeps every successful exchange.
pub struct RecordingLiteratureClient<C> {
    inner: C,
    log: Mutex<Vec<LiteratureTranscript>>,
}

impl<C: LiteratureClient> RecordingLiteratureClient<C> {
    pub fn new(inner: C) -> Self {
        Self { inner, log: Mutex::new(Vec::new()) }
    }

    pub fn transcripts(&self) -> Vec<LiteratureTranscript> {
        self.log.lock().expect("log lock").clone()
    }
}

impl<C: LiteratureClient> LiteratureClient for RecordingLiteratureClient<C> {
    fn identity(&self) -> String {
        self.inner.identity()
    }

    fn ask(&self, question: &str) -> std::result::Result<LiteratureAnswer, ClientError> {
        let answer = self.inner.ask(question)?;
        self.log.lock().expect("log lock").push(LiteratureTranscript {
            question_hash: question_hash(question),
            question: question.trim().to_string(),
            answer: answer.clone(),
            client: self.inner.identity(),
            caveats: self.inner.caveats(),
        });
        Ok(answer)
    }

    fn caveats(&self) -> Vec<String> {
        self.inner.caveats()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteLiteratureConfig {
    pub endpoint: String,
    /// Environment variable holding the bearer token.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
}

fn default_timeout() -> u64 {
    300
}
fn default_concurrency() -> usize {
    2
}

impl RemoteLiteratureConfig {
    pub fn new(endpoint: &str) -> Self {
        Self { endpoint: endpoint.into(), auth_env: None, timeout_secs: default_timeout(), max_concurrency: default_concurrency() }
    }
}

/// POSTs `{"question": ...}` and expects `{"answer": ..., "citations": [{"id", "snippet"}]}`.
pub struct RemoteLiteratureClient {
    config: RemoteLiteratureConfig,
    agent: ureq::Agent,
    gate: Semaphore,
}

impl RemoteLiteratureClient {
    pub fn new(config: RemoteLiteratureConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let gate = Semaphore::new(config.max_concurrency);
        Self { config, agent, gate }
    }
}

impl LiteratureClient for RemoteLiteratureClient {
    fn identity(&self) -> String {
        format!("remote:{}", self.config.endpoint)
    }

    fn ask(&self, question: &str) -> std::result::Result<LiteratureAnswer, ClientError> {
        let _permit = self.gate.acquire();
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(var) = &self.config.auth_env {
            let token = std::env::var(var).map_err(|_| ClientError::Fatal(format!("environment variable {var} is not set")))?;
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send_json(serde_json::json!({ "question": question })).map_err(|e| ClientError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        match status {
            200 => resp.body_mut().read_json::<LiteratureAnswer>().map_err(|e| ClientError::Fatal(format!("invalid response body: {e}"))),
            408 | 425 | 429 | 500..=599 => Err(ClientError::Transient(format!("HTTP {status}"))),
            _ => Err(ClientError::Fatal(format!("HTTP {status}"))),
        }
    }

    fn caveats(&self) -> Vec<String> {
        vec![FIGURE_CAVEAT.to_string()]
    }
}
