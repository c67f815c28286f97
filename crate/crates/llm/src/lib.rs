//! Completion backends behind one trait: a remote chat-completions client,
//! a scripted pattern table, and record/replay over prompt hashes. Prompt
//! templates are versioned files compiled into the crate.

mod backend;
mod error;
mod prompt;
mod remote;
mod replay;
mod scripted;
mod structured;
mod transcript;

pub use backend::{complete, Backend, Completion, Permit, Semaphore};
pub use error::{LlmError, Result};
pub use prompt::{template, template_hashes, Attachment, Prompt, Purpose, Template, FORMAT_REMINDER};
pub use remote::{RemoteBackend, RemoteConfig};
pub use replay::{RecordingBackend, ReplayBackend};
pub use scripted::{Rule, ScriptedBackend};
pub use structured::{complete_structured, extract_block, parse_block, Structured};
pub use transcript::{append_transcripts, read_transcripts, Transcript};
