use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Milliseconds since the Unix epoch (or since the start of a logical clock).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InputKind {
    Image2D,
    HyperCube,
    Curve1D,
}

impl fmt::Display for InputKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            InputKind::Image2D => "Image2D",
            InputKind::HyperCube => "HyperCube",
            InputKind::Curve1D => "Curve1D",
        };
        f.write_str(s)
    }
}

/// A raw experimental artifact plus its free-form metadata.
///
/// Well-known metadata keys: `technique`, `material`, `pixel_size_nm`,
/// `step_size_nm`, `notes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentInput {
    pub kind: InputKind,
    pub data_ref: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl ExperimentInput {
    pub fn new(kind: InputKind, data_ref: impl Into<String>) -> Self {
        Self { kind, data_ref: data_ref.into(), metadata: BTreeMap::new() }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    pub fn material(&self) -> Option<&str> {
        self.metadata.get("material").map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClaimOrigin {
    Automated,
    HumanGuided,
}

/// A falsifiable statement distilled from the analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub id: String,
    pub statement: String,
    /// Names of analysis artifacts supporting the statement.
    pub evidence: Vec<String>,
    pub keywords: Vec<String>,
    pub has_evidence_grounding: bool,
    pub origin: ClaimOrigin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResearchQuestion {
    pub claim_id: String,
    pub text: String,
}

/// The five rubric levels, from most to least novel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NoveltyCategory {
    Groundbreaking,
    HighImpactNewInsight,
    PartiallyNovel,
    Scooped,
    TextbookKnowledge,
}

impl NoveltyCategory {
    pub const ALL: [NoveltyCategory; 5] = [
        NoveltyCategory::Groundbreaking,
        NoveltyCategory::HighImpactNewInsight,
        NoveltyCategory::PartiallyNovel,
        NoveltyCategory::Scooped,
        NoveltyCategory::TextbookKnowledge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoveltyCategory::Groundbreaking => "Groundbreaking",
            NoveltyCategory::HighImpactNewInsight => "HighImpactNewInsight",
            NoveltyCategory::PartiallyNovel => "PartiallyNovel",
            NoveltyCategory::Scooped => "Scooped",
            NoveltyCategory::TextbookKnowledge => "TextbookKnowledge",
        }
    }
}

impl fmt::Display for NoveltyCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoveltyCategory {
    type Err = String;

    /// Accepts the canonical names case-insensitively, ignoring spaces,
    /// hyphens and underscores.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        NoveltyCategory::ALL
            .into_iter()
            .find(|c| c.name().to_lowercase() == key)
            .ok_or_else(|| format!("unknown novelty category {s:?}"))
    }
}

/// Fixed rubric: 5 = groundbreaking down to 1 = textbook knowledge.
pub fn score_category(category: NoveltyCategory) -> u8 {
    match category {
        NoveltyCategory::Groundbreaking => 5,
        NoveltyCategory::HighImpactNewInsight => 4,
        NoveltyCategory::PartiallyNovel => 3,
        NoveltyCategory::Scooped => 2,
        NoveltyCategory::TextbookKnowledge => 1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyAssessment {
    pub claim_id: String,
    pub literature_report: String,
    pub citations: Vec<String>,
    pub category: NoveltyCategory,
    pub justification: String,
    pub score: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RecommendationKind {
    NextExperiment,
    Simulation,
}

/// Axis-aligned region on the sample, in `unit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Target {
    Locus {
        region: Option<Region>,
        step_size: f64,
        step_unit: String,
        technique: String,
    },
    StructureRequest {
        request: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub kind: RecommendationKind,
    pub title: String,
    pub rationale: String,
    /// 1 is the highest priority.
    pub priority: u32,
    pub target: Option<Target>,
    /// Claims this recommendation follows up on.
    #[serde(default)]
    pub claim_ids: Vec<String>,
    /// Constraint violations found when checking against an instrument catalog.
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Expert text injected at a pause point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guidance {
    pub text: String,
    pub author: String,
    pub timestamp: Timestamp,
    pub stage: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn rubric_is_a_bijection_onto_one_to_five() {
        let scores: BTreeSet<u8> = NoveltyCategory::ALL.iter().map(|c| score_category(*c)).collect();
        assert_eq!(scores, (1..=5).collect());
        assert_eq!(score_category(NoveltyCategory::TextbookKnowledge), 1);
        assert_eq!(score_category(NoveltyCategory::Scooped), 2);
        assert_eq!(score_category(NoveltyCategory::HighImpactNewInsight), 4);
    }

    #[test]
    fn category_parsing_is_lenient_on_spacing() {
        assert_eq!("partially novel".parse(), Ok(NoveltyCategory::PartiallyNovel));
        assert_eq!("HIGH_IMPACT_NEW_INSIGHT".parse(), Ok(NoveltyCategory::HighImpactNewInsight));
        assert!("novel-ish".parse::<NoveltyCategory>().is_err());
    }
}
