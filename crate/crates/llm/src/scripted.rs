use std::path::Path;
use std::sync::Mutex;

use regex::Regex;
use serde::Deserialize;

use crate::backend::{Backend, Completion};
use crate::error::{LlmError, Result};
use crate::prompt::{Prompt, Purpose};

/// One row of a scripted pattern table. Successive matching calls walk
/// through `responses`; the last response repeats once the list is exhausted.
#[derive(Debug)]
pub struct Rule {
    pub purpose: Option<Purpose>,
    pub pattern: Regex,
    pub responses: Vec<String>,
}

/// Deterministic canned completions keyed by purpose and a regex over the prompt text.
#[derive(Debug)]
pub struct ScriptedBackend {
    name: String,
    rules: Vec<Rule>,
    calls: Mutex<Vec<usize>>,
}

#[derive(Deserialize)]
struct RuleFile {
    purpose: Option<Purpose>,
    #[serde(default = "any_pattern")]
    pattern: String,
    responses: Vec<String>,
}

fn any_pattern() -> String {
    ".*".into()
}

#[derive(Deserialize)]
struct ScriptFile {
    name: String,
    rules: Vec<RuleFile>,
}

impl ScriptedBackend {
    pub fn new(name: &str) -> Self {
        Self { name: name.into(), rules: Vec::new(), calls: Mutex::new(Vec::new()) }
    }

    /// Add a rule; `pattern` is a regex searched in the prompt text.
    pub fn on(mut self, purpose: Purpose, pattern: &str, response: impl Into<String>) -> Self {
        self.push(Some(purpose), pattern, vec![response.into()]);
        self
    }

    /// Add a rule answering successive matching calls in order.
    pub fn on_sequence(mut self, purpose: Purpose, pattern: &str, responses: Vec<String>) -> Self {
        self.push(Some(purpose), pattern, responses);
        self
    }

    fn push(&mut self, purpose: Option<Purpose>, pattern: &str, responses: Vec<String>) {
        let pattern = Regex::new(&format!("(?s){pattern}")).unwrap_or_else(|e| panic!("bad scripted pattern {pattern:?}: {e}"));
        assert!(!responses.is_empty(), "scripted rule needs at least one response");
        self.rules.push(Rule { purpose, pattern, responses });
        self.calls.get_mut().unwrap().push(0);
    }

    /// Load a JSON table `{"name": ..., "rules": [{"purpose", "pattern", "responses"}]}`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let err = |m: String| LlmError::Store { path: path.display().to_string(), message: m };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        Self::from_json(&text).map_err(|e| match e {
            LlmError::Unparseable(m) => err(m),
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScriptFile = serde_json::from_str(text).map_err(|e| LlmError::Unparseable(e.to_string()))?;
        let mut me = Self::new(&file.name);
        for r in file.rules {
            Regex::new(&r.pattern).map_err(|e| LlmError::Unparseable(format!("pattern {:?}: {e}", r.pattern)))?;
            if r.responses.is_empty() {
                return Err(LlmError::Unparseable("rule without responses".into()));
            }
            me.push(r.purpose, &r.pattern, r.responses);
        }
        Ok(me)
    }
}

impl Backend for ScriptedBackend {
    fn identity(&self) -> String {
        format!("scripted:{}", self.name)
    }

    fn supports_images(&self) -> bool {
        true
    }

    fn complete_raw(&self, prompt: &Prompt) -> Result<Completion> {
        let idx = self
            .rules
            .iter()
            .position(|r| r.purpose.map_or(true, |p| p == prompt.purpose) && r.pattern.is_match(&prompt.text))
            .ok_or_else(|| LlmError::ScriptMiss {
                purpose: prompt.purpose.to_string(),
                hash_prefix: prompt.hash()[..12].to_string(),
            })?;
        let mut calls = self.calls.lock().unwrap_or_else(|e| e.into_inner());
        let rule = &self.rules[idx];
        let text = rule.responses[calls[idx].min(rule.responses.len() - 1)].clone();
        calls[idx] += 1;
        Ok(Completion::text(&self.identity(), text))
    }
}
