use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::report::{ReportDocument, REPORT_SCHEMA_VERSION};
use crate::types::{score_category, ClaimOrigin, NoveltyCategory, RecommendationKind, Target};

/// A broken invariant in a report. Violations are data, not faults.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    SchemaVersion { found: u32 },
    EmptyStatement { claim_id: String },
    DuplicateClaimId { claim_id: String },
    DanglingEvidence { claim_id: String, reference: String },
    UngroundedFlag { claim_id: String },
    HumanGuidedWithoutGuidance { claim_id: String },
    QuestionFormat { claim_id: String },
    UnknownClaim { claim_id: String },
    RubricMismatch { claim_id: String, category: NoveltyCategory, score: u8 },
    MissingCitations { claim_id: String },
    PriorityGap { kind: RecommendationKind },
    MissingUnits { title: String },
    NonFiniteNumber { location: String },
}

impl Violation {
    /// Short code, e.g. `RubricMismatch`.
    pub fn code(&self) -> &'static str {
        match self {
            Violation::SchemaVersion { .. } => "SchemaVersion",
            Violation::EmptyStatement { .. } => "EmptyStatement",
            Violation::DuplicateClaimId { .. } => "DuplicateClaimId",
            Violation::DanglingEvidence { .. } => "DanglingEvidence",
            Violation::UngroundedFlag { .. } => "UngroundedFlag",
            Violation::HumanGuidedWithoutGuidance { .. } => "HumanGuidedWithoutGuidance",
            Violation::QuestionFormat { .. } => "QuestionFormat",
            Violation::UnknownClaim { .. } => "UnknownClaim",
            Violation::RubricMismatch { .. } => "RubricMismatch",
            Violation::MissingCitations { .. } => "MissingCitations",
            Violation::PriorityGap { .. } => "PriorityGap",
            Violation::MissingUnits { .. } => "MissingUnits",
            Violation::NonFiniteNumber { .. } => "NonFiniteNumber",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Check every report-level invariant. An empty result means the document is valid.
pub fn validate_report(doc: &ReportDocument) -> Vec<Violation> {
    let mut out = Vec::new();
    if doc.schema_version != REPORT_SCHEMA_VERSION {
        out.push(Violation::SchemaVersion { found: doc.schema_version });
    }

    let artifact_names: BTreeSet<&str> = doc.artifacts.iter().map(|a| a.name.as_str()).collect();
    let mut claim_ids = BTreeSet::new();
    for claim in &doc.claims {
        if !claim_ids.insert(claim.id.as_str()) {
            out.push(Violation::DuplicateClaimId { claim_id: claim.id.clone() });
        }
        if claim.statement.trim().is_empty() {
            out.push(Violation::EmptyStatement { claim_id: claim.id.clone() });
        }
        for reference in &claim.evidence {
            if !artifact_names.contains(reference.as_str()) {
                out.push(Violation::DanglingEvidence {
                    claim_id: claim.id.clone(),
                    reference: reference.clone(),
                });
            }
        }
        if claim.has_evidence_grounding && claim.evidence.is_empty() {
            out.push(Violation::UngroundedFlag { claim_id: claim.id.clone() });
        }
        if claim.origin == ClaimOrigin::HumanGuided && doc.guidance.is_empty() {
            out.push(Violation::HumanGuidedWithoutGuidance { claim_id: claim.id.clone() });
        }
    }

    for q in &doc.questions {
        if !claim_ids.contains(q.claim_id.as_str()) {
            out.push(Violation::UnknownClaim { claim_id: q.claim_id.clone() });
        }
        if !q.text.ends_with('?') {
            out.push(Violation::QuestionFormat { claim_id: q.claim_id.clone() });
        }
    }

    for a in &doc.assessments {
        if !claim_ids.contains(a.claim_id.as_str()) {
            out.push(Violation::UnknownClaim { claim_id: a.claim_id.clone() });
        }
        if score_category(a.category) != a.score {
            out.push(Violation::RubricMismatch {
                claim_id: a.claim_id.clone(),
                category: a.category,
                score: a.score,
            });
        }
        let may_lack_citations =
            matches!(a.category, NoveltyCategory::Groundbreaking | NoveltyCategory::PartiallyNovel);
        if a.citations.is_empty() && !may_lack_citations {
            out.push(Violation::MissingCitations { claim_id: a.claim_id.clone() });
        }
    }

    let mut priorities: BTreeMap<RecommendationKind, Vec<u32>> = BTreeMap::new();
    for r in &doc.recommendations {
        priorities.entry(r.kind).or_default().push(r.priority);
        if let Some(Target::Locus { region, step_unit, .. }) = &r.target {
            let region_unitless = region.as_ref().is_some_and(|g| g.unit.trim().is_empty());
            if step_unit.trim().is_empty() || region_unitless {
                out.push(Violation::MissingUnits { title: r.title.clone() });
            }
        }
    }
    for (kind, mut p) in priorities {
        p.sort_unstable();
        if p.iter().enumerate().any(|(i, v)| *v as usize != i + 1) {
            out.push(Violation::PriorityGap { kind });
        }
    }

    for summary in &doc.analyses {
        for f in &summary.findings {
            for n in &f.numbers {
                if !n.value.is_finite() {
                    out.push(Violation::NonFiniteNumber { location: format!("{}.{}", f.tool, n.name) });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::{ArtifactRef, InputSummary};
    use crate::types::{Claim, NoveltyAssessment, Recommendation};

    fn well_formed() -> ReportDocument {
        let mut doc = ReportDocument::empty(
            "run-1",
            "NoveltyAssessment",
            InputSummary { kind: "Image2D".into(), data_ref: Some("img.png".into()), request: None, metadata: Default::default() },
        );
        doc.artifacts.push(ArtifactRef { name: "env_map.png".into(), media_type: "image/png".into(), sha256: "00".into() });
        doc.claims.push(Claim {
            id: "c1".into(),
            statement: "sulfur vacancies form line defects".into(),
            evidence: vec!["env_map.png".into()],
            keywords: vec!["vacancy".into()],
            has_evidence_grounding: true,
            origin: ClaimOrigin::Automated,
        });
        doc.assessments.push(NoveltyAssessment {
            claim_id: "c1".into(),
            literature_report: "reported before".into(),
            citations: vec!["doi:10.1/x".into()],
            category: NoveltyCategory::Scooped,
            justification: "seen".into(),
            score: 2,
        });
        doc.recommendations.push(Recommendation {
            kind: RecommendationKind::Simulation,
            title: "vacancy line model".into(),
            rationale: "quantify".into(),
            priority: 1,
            target: Some(Target::StructureRequest { request: "MoS2 5x5 with a line of 4 sulfur vacancies".into() }),
            claim_ids: vec!["c1".into()],
            warnings: vec![],
        });
        doc
    }

    #[test]
    fn well_formed_report_has_no_violations() {
        assert_eq!(validate_report(&well_formed()), vec![]);
    }

    #[test]
    fn scooped_with_score_four_is_a_rubric_mismatch() {
        let mut doc = well_formed();
        doc.assessments[0].score = 4;
        let v = validate_report(&doc);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].code(), "RubricMismatch");
    }

    #[test]
    fn missing_artifact_is_dangling_evidence() {
        let mut doc = well_formed();
        doc.claims[0].evidence.push("nn_plot.png".into());
        let codes: Vec<_> = validate_report(&doc).iter().map(|v| v.code()).collect();
        assert_eq!(codes, vec!["DanglingEvidence"]);
    }

    #[test]
    fn priorities_must_be_contiguous_per_kind() {
        let mut doc = well_formed();
        doc.recommendations[0].priority = 2;
        assert_eq!(validate_report(&doc)[0].code(), "PriorityGap");
    }

    #[test]
    fn human_guided_claim_requires_guidance() {
        let mut doc = well_formed();
        doc.claims[0].origin = ClaimOrigin::HumanGuided;
        assert_eq!(validate_report(&doc)[0].code(), "HumanGuidedWithoutGuidance");
    }

    #[test]
    fn scooped_needs_citations_but_partially_novel_does_not() {
        let mut doc = well_formed();
        doc.assessments[0].citations.clear();
        assert_eq!(validate_report(&doc)[0].code(), "MissingCitations");
        doc.assessments[0].category = NoveltyCategory::PartiallyNovel;
        doc.assessments[0].score = 3;
        assert!(validate_report(&doc).is_empty());
    }
}
