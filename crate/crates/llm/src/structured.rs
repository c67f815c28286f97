use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::backend::{complete, Backend, Completion};
use crate::error::{LlmError, Result};
use crate::prompt::{Prompt, FORMAT_REMINDER};

/// Pull the JSON value out of a completion. The first fenced ```json block
/// wins; a bare fenced block or a reply that is itself JSON is accepted too.
pub fn extract_block(text: &str) -> Result<Value> {
    let mut candidates = Vec::new();
    for (open, lang_only) in [("```json", true), ("```", false)] {
        let mut rest = text;
        while let Some(start) = rest.find(open) {
            let after = &rest[start + open.len()..];
            if !lang_only && !after.starts_with(['\n', '\r']) {
                rest = after;
                continue;
            }
            match after.find("```") {
                Some(end) => {
                    candidates.push(after[..end].trim());
                    rest = &after[end + 3..];
                }
                None => break,
            }
        }
    }
    candidates.push(text.trim());
    let mut last = String::from("no fenced json block");
    for c in candidates {
        match serde_json::from_str::<Value>(c) {
            Ok(v) => return Ok(v),
            Err(e) if !c.is_empty() => last = e.to_string(),
            Err(_) => {}
        }
    }
    Err(LlmError::Unparseable(last))
}

/// Decode a completion into `T`.
pub fn parse_block<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_value(extract_block(text)?).map_err(|e| LlmError::Unparseable(e.to_string()))
}

/// Outcome of a structured call: the decoded value plus every exchange made
/// (one, or two if the format-reminder retry was needed).
#[derive(Debug, Clone)]
pub struct Structured<T> {
    pub value: T,
    pub exchanges: Vec<(Prompt, Completion)>,
}

/// Complete `prompt` and decode its block; on a parse failure retry exactly
/// once with [`FORMAT_REMINDER`] appended.
pub fn complete_structured<T: DeserializeOwned>(prompt: &Prompt, backend: &dyn Backend) -> Result<Structured<T>> {
    let first = complete(prompt, backend)?;
    match parse_block(&first.text) {
        Ok(value) => Ok(Structured { value, exchanges: vec![(prompt.clone(), first)] }),
        Err(_) => {
            let retry = prompt.clone().with_suffix(FORMAT_REMINDER);
            let second = complete(&retry, backend)?;
            let value = parse_block(&second.text)?;
            Ok(Structured { value, exchanges: vec![(prompt.clone(), first), (retry, second)] })
        }
    }
}
