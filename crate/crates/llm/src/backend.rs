use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{LlmError, Result};
use crate::prompt::Prompt;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub backend: String,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
}

impl Completion {
    pub fn text(backend: &str, text: impl Into<String>) -> Self {
        Self { text: text.into(), backend: backend.into(), latency_ms: 0, prompt_tokens: None, completion_tokens: None }
    }
}

/// A completion source. Implementations must be safe to share across threads.
pub trait Backend: Send + Sync {
    /// Stable identity recorded in report provenance.
    fn identity(&self) -> String;

    fn supports_images(&self) -> bool {
        false
    }

    /// Produce a completion. Callers normally go through [`complete`], which
    /// enforces the capability contract first.
    fn complete_raw(&self, prompt: &Prompt) -> Result<Completion>;
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn identity(&self) -> String {
        (**self).identity()
    }

    fn supports_images(&self) -> bool {
        (**self).supports_images()
    }

    fn complete_raw(&self, prompt: &Prompt) -> Result<Completion> {
        (**self).complete_raw(prompt)
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn identity(&self) -> String {
        (**self).identity()
    }

    fn supports_images(&self) -> bool {
        (**self).supports_images()
    }

    fn complete_raw(&self, prompt: &Prompt) -> Result<Completion> {
        (**self).complete_raw(prompt)
    }
}

/// Complete `prompt`, rejecting image attachments the backend cannot take.
pub fn complete(prompt: &Prompt, backend: &dyn Backend) -> Result<Completion> {
    if !backend.supports_images() {
        if let Some(a) = prompt.attachments.iter().find(|a| a.is_image()) {
            return Err(LlmError::CapabilityMismatch { backend: backend.identity(), attachment: a.name.clone() });
        }
    }
    backend.complete_raw(prompt)
}

/// Counting semaphore bounding concurrent calls into one backend.
#[derive(Debug)]
pub struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

pub struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Self { permits: Mutex::new(permits.max(1)), cv: Condvar::new() }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.permits.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.cv.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}
