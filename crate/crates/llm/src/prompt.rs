use std::collections::BTreeMap;
use std::fmt;

use labloop_core::digest_hex;
use serde::{Deserialize, Serialize};

use crate::error::{LlmError, Result};

/// What a completion is used for; scripted backends key their tables on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Purpose {
    Summarize,
    Claims,
    Guidance,
    Categorize,
    Plan,
    ValidateSemantic,
    Recommend,
    SelectTool,
}

impl Purpose {
    pub fn as_str(self) -> &'static str {
        match self {
            Purpose::Summarize => "summarize",
            Purpose::Claims => "claims",
            Purpose::Guidance => "guidance",
            Purpose::Categorize => "categorize",
            Purpose::Plan => "plan",
            Purpose::ValidateSemantic => "validate-semantic",
            Purpose::Recommend => "recommend",
            Purpose::SelectTool => "select-tool",
        }
    }
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An artifact referenced by a prompt. Image attachments carry a textual
/// digest used in place of the pixels for text-only backends.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attachment {
    pub name: String,
    pub media_type: String,
    pub sha256: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub digest_text: String,
    /// Raw bytes, only needed by image-capable remote backends.
    #[serde(skip)]
    pub data: Option<Vec<u8>>,
}

impl Attachment {
    pub fn image(name: &str, bytes: Vec<u8>, digest_text: String) -> Self {
        Self { name: name.into(), media_type: "image/png".into(), sha256: digest_hex(&bytes), digest_text, data: Some(bytes) }
    }

    pub fn is_image(&self) -> bool {
        self.media_type.starts_with("image/")
    }
}

/// A versioned prompt template with `{{name}}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub id: String,
    pub version: u32,
    pub purpose: Purpose,
    pub body: String,
}

impl Template {
    pub fn key(&self) -> String {
        format!("{}@{}", self.id, self.version)
    }

    pub fn hash(&self) -> String {
        digest_hex(self.body.as_bytes())
    }

    /// Substitute every placeholder; unknown or unused variables are errors so
    /// template edits cannot silently drop inputs.
    pub fn render(&self, vars: &BTreeMap<&str, String>) -> Result<Prompt> {
        let err = |message: String| LlmError::Template { template: self.key(), message };
        let mut out = String::with_capacity(self.body.len());
        let mut used = std::collections::BTreeSet::new();
        let mut rest = self.body.as_str();
        while let Some(start) = rest.find("{{") {
            out.push_str(&rest[..start]);
            let after = &rest[start + 2..];
            let end = after.find("}}").ok_or_else(|| err("unterminated placeholder".into()))?;
            let name = after[..end].trim();
            let value = vars.get(name).ok_or_else(|| err(format!("missing variable `{name}`")))?;
            out.push_str(value);
            used.insert(name.to_string());
            rest = &after[end + 2..];
        }
        out.push_str(rest);
        if let Some(extra) = vars.keys().find(|k| !used.contains(**k)) {
            return Err(err(format!("variable `{extra}` is not used by the template")));
        }
        Ok(Prompt {
            template_id: self.id.clone(),
            template_version: self.version,
            template_hash: self.hash(),
            purpose: self.purpose,
            text: out,
            attachments: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub template_id: String,
    pub template_version: u32,
    pub template_hash: String,
    pub purpose: Purpose,
    pub text: String,
    #[serde(default)]
    pub attachments: Vec<Attachment>,
}

impl Prompt {
    pub fn template_key(&self) -> String {
        format!("{}@{}", self.template_id, self.template_version)
    }

    /// Hash over template version, interpolated text and attachment digests.
    pub fn hash(&self) -> String {
        let mut buf = format!("{}\n{}\n", self.template_key(), self.text);
        for a in &self.attachments {
            buf.push_str(&a.sha256);
            buf.push('\n');
        }
        digest_hex(buf.as_bytes())
    }

    pub fn with_attachment(mut self, a: Attachment) -> Self {
        self.attachments.push(a);
        self
    }

    /// Append a follow-up instruction (used for the single format-reminder retry).
    pub fn with_suffix(mut self, suffix: &str) -> Self {
        self.text.push_str("\n\n");
        self.text.push_str(suffix);
        self
    }

    /// Replace image attachments by their text digests when the backend cannot
    /// accept images.
    pub fn adapt_for(mut self, supports_images: bool) -> Self {
        if supports_images {
            return self;
        }
        let (images, other): (Vec<_>, Vec<_>) = self.attachments.into_iter().partition(Attachment::is_image);
        for a in images {
            self.text.push_str(&format!("\n\n[image {} sha256:{}]\n{}", a.name, &a.sha256[..12.min(a.sha256.len())], a.digest_text));
        }
        self.attachments = other;
        self
    }
}

macro_rules! template {
    ($id:literal, $version:literal, $purpose:expr) => {
        ($id, $version, $purpose, include_str!(concat!("../prompts/", $id, "@", $version, ".txt")))
    };
}

const SHIPPED: &[(&str, u32, Purpose, &str)] = &[
    template!("summarize", 1, Purpose::Summarize),
    template!("claims", 1, Purpose::Claims),
    template!("guidance", 1, Purpose::Guidance),
    template!("categorize", 1, Purpose::Categorize),
    template!("plan", 1, Purpose::Plan),
    template!("refine", 1, Purpose::Plan),
    template!("validate_semantic", 1, Purpose::ValidateSemantic),
    template!("recommend_simulation", 1, Purpose::Recommend),
    template!("recommend_experiment", 1, Purpose::Recommend),
    template!("select_tool", 1, Purpose::SelectTool),
];

/// Instruction appended when a completion lacks a parseable block.
pub const FORMAT_REMINDER: &str = "Your previous reply could not be parsed. Reply again with exactly one fenced ```json block that follows the schema above, and nothing that contradicts it.";

/// Latest shipped version of template `id`.
pub fn template(id: &str) -> Template {
    SHIPPED
        .iter()
        .filter(|t| t.0 == id)
        .max_by_key(|t| t.1)
        .map(|&(id, version, purpose, body)| Template { id: id.into(), version, purpose, body: body.into() })
        .unwrap_or_else(|| panic!("prompt template `{id}` is not shipped"))
}

/// `id@version → sha256` for every shipped template.
pub fn template_hashes() -> BTreeMap<String, String> {
    SHIPPED.iter().map(|&(id, v, _, body)| (format!("{id}@{v}"), digest_hex(body.as_bytes()))).collect()
}
