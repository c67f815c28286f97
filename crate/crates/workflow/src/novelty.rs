//! Rubric categorization of literature reports and the DFT-parameter
//! adapter over a literature client.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use labloop_atomistic::{DftObjective, ParameterAdvice, ParameterSource};
use labloop_core::{score_category, Claim, NoveltyAssessment, NoveltyCategory, ResearchQuestion, Timestamp};
use labloop_llm::{complete, parse_block, template, Backend, LlmError, FORMAT_REMINDER};
use regex::Regex;
use serde::{Deserialize, Deserializer};

use crate::error::Result;
use crate::literature::{query_literature, LiteratureClient, LiteratureReport};

/// Retry instruction when a category that needs prior work was chosen
/// although the search returned no sources.
pub const UNCITED_REMINDER: &str = "The search returned no sources, so only groundbreaking or partially_novel can apply. Reply again with exactly one fenced ```json block.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Categorized {
    pub category: NoveltyCategory,
    pub justification: String,
    pub retries: usize,
}

fn category_from_str<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<NoveltyCategory, D::Error> {
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

#[derive(Debug, Deserialize)]
struct CategoryBlock {
    #[serde(deserialize_with = "category_from_str")]
    category: NoveltyCategory,
    #[serde(default)]
    justification: String,
}

/// Whether `category` may stand without citations.
pub fn allows_no_citations(category: NoveltyCategory) -> bool {
    matches!(category, NoveltyCategory::Groundbreaking | NoveltyCategory::PartiallyNovel)
}

fn format_citations(report: &LiteratureReport) -> String {
    if report.citations.is_empty() {
        return "(none)".into();
    }
    report
        .citations
        .iter()
        .map(|c| if c.snippet.is_empty() { format!("- {}", c.id) } else { format!("- {}: {}", c.id, c.snippet) })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Classify `report` against the five-level rubric. A reply that cannot be
/// parsed, or that needs citations the report does not have, is retried once.
pub fn categorize_report(report: &LiteratureReport, claim: &Claim, backend: &dyn Backend) -> Result<Categorized> {
    let vars = BTreeMap::from([
        ("claim", claim.statement.clone()),
        ("question", report.question.clone()),
        ("report", report.answer_text.trim().to_string()),
        ("citations", format_citations(report)),
    ]);
    let prompt = template("categorize").render(&vars)?;
    let uncited = report.citations.is_empty();
    let check = |text: &str| -> std::result::Result<CategoryBlock, (LlmError, &'static str)> {
        let b: CategoryBlock = parse_block(text).map_err(|e| (e, FORMAT_REMINDER))?;
        if uncited && !allows_no_citations(b.category) {
            return Err((LlmError::Unparseable(format!("category {} requires cited prior work", b.category)), UNCITED_REMINDER));
        }
        Ok(b)
    };
    let first = complete(&prompt, backend)?;
    let (block, retries) = match check(&first.text) {
        Ok(b) => (b, 0),
        Err((_, reminder)) => {
            let second = complete(&prompt.clone().with_suffix(reminder), backend)?;
            (check(&second.text).map_err(|(e, _)| e)?, 1)
        }
    };
    Ok(Categorized { category: block.category, justification: block.justification.trim().to_string(), retries })
}

/// Rubric score plus the report, as stored in the final document.
pub fn assessment(report: &LiteratureReport, categorized: &Categorized) -> NoveltyAssessment {
    NoveltyAssessment {
        claim_id: report.question_id.clone(),
        literature_report: report.answer_text.clone(),
        citations: report.citations.iter().map(|c| c.id.clone()).collect(),
        category: categorized.category,
        justification: categorized.justification.clone(),
        score: score_category(categorized.category),
    }
}

/// Query and categorize each claim independently, preserving order.
pub fn assess_claims(
    claims: &[Claim],
    questions: &[ResearchQuestion],
    client: &dyn LiteratureClient,
    backend: &dyn Backend,
    at: Timestamp,
) -> Result<Vec<(LiteratureReport, NoveltyAssessment)>> {
    let mut out = Vec::with_capacity(claims.len());
    for claim in claims {
        let question = questions
            .iter()
            .find(|q| q.claim_id == claim.id)
            .ok_or_else(|| crate::error::WorkflowError::InvalidClaim(format!("claim {} has no research question", claim.id)))?;
        let report = query_literature(question, client, at)?;
        let cat = categorize_report(&report, claim, backend)?;
        let a = assessment(&report, &cat);
        out.push((report, a));
    }
    Ok(out)
}

fn objective_phrase(o: DftObjective) -> &'static str {
    match o {
        DftObjective::DefectRelaxation => "defect relaxation",
        DftObjective::ElectronicStructure => "electronic-structure",
        DftObjective::SinglePointEnergy => "total-energy",
    }
}

fn advice_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\b(ENCUT|ISMEAR|SIGMA|KDENSITY|k-?point length)\s*(?:=|:|of)\s*(-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)").expect("valid regex")
    })
}

/// Asks a literature client which parameters published calculations used and
/// extracts `TAG = value` statements from the answer.
pub struct LiteratureParameterSource<'a> {
    pub client: &'a dyn LiteratureClient,
}

impl LiteratureParameterSource<'_> {
    pub fn question(formula: &str, objective: DftObjective) -> String {
        format!(
            "Which plane-wave cutoff (ENCUT), smearing (ISMEAR, SIGMA) and k-point density have published {} DFT calculations of {formula} used?",
            objective_phrase(objective)
        )
    }
}

impl ParameterSource for LiteratureParameterSource<'_> {
    fn recommend(&self, formula: &str, objective: DftObjective) -> std::result::Result<Vec<ParameterAdvice>, String> {
        let q = ResearchQuestion { claim_id: format!("dft-{formula}"), text: Self::question(formula, objective) };
        let report = query_literature(&q, self.client, Timestamp(0)).map_err(|e| e.to_string())?;
        let citation = report.citations.first().map(|c| c.id.clone()).unwrap_or_else(|| report.client.clone());
        let mut out: Vec<ParameterAdvice> = Vec::new();
        for c in advice_regex().captures_iter(&report.answer_text) {
            let tag = c[1].to_ascii_uppercase();
            let tag = if tag.starts_with('K') && tag != "KDENSITY" { "KDENSITY".to_string() } else { tag };
            if out.iter().any(|a| a.tag == tag) {
                continue;
            }
            out.push(ParameterAdvice { tag, value: c[2].to_string(), citation: citation.clone() });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::literature::{Citation, MockLiteratureClient};
    use labloop_core::ClaimOrigin;
    use labloop_llm::{Purpose, ScriptedBackend};

    fn claim() -> Claim {
        Claim {
            id: "c1".into(),
            statement: "sulfur vacancy lines".into(),
            evidence: vec![],
            keywords: vec![],
            has_evidence_grounding: false,
            origin: ClaimOrigin::Automated,
        }
    }

    fn report(citations: usize) -> LiteratureReport {
        LiteratureReport {
            question_id: "c1".into(),
            question: "Has anyone observed sulfur vacancy lines?".into(),
            answer_text: "Yes, several groups.".into(),
            citations: (0..citations).map(|i| Citation { id: format!("doi:{i}"), snippet: String::new() }).collect(),
            client: "mock:m".into(),
            retrieved_at: Timestamp(0),
            caveats: vec![],
            attempts: 1,
        }
    }

    #[test]
    fn categories_map_to_rubric_scores() {
        for (name, cat, score) in [
            ("scooped", NoveltyCategory::Scooped, 2),
            ("partially_novel", NoveltyCategory::PartiallyNovel, 3),
            ("groundbreaking", NoveltyCategory::Groundbreaking, 5),
        ] {
            let b = ScriptedBackend::new("s").on(Purpose::Categorize, "", format!("```json\n{{\"category\": \"{name}\", \"justification\": \"j\"}}\n```"));
            let c = categorize_report(&report(1), &claim(), &b).unwrap();
            assert_eq!(c.category, cat);
            assert_eq!(assessment(&report(1), &c).score, score);
        }
    }

    #[test]
    fn unknown_category_is_retried_once() {
        let b = ScriptedBackend::new("s").on_sequence(
            Purpose::Categorize,
            "",
            vec!["{\"category\": \"kind of new\"}".into(), "{\"category\": \"textbook knowledge\", \"justification\": \"old\"}".into()],
        );
        let c = categorize_report(&report(2), &claim(), &b).unwrap();
        assert_eq!((c.category, c.retries), (NoveltyCategory::TextbookKnowledge, 1));
    }

    #[test]
    fn uncited_reports_only_admit_two_categories() {
        let b = ScriptedBackend::new("s").on_sequence(
            Purpose::Categorize,
            "",
            vec!["{\"category\": \"scooped\"}".into(), "{\"category\": \"partially_novel\"}".into()],
        );
        let c = categorize_report(&report(0), &claim(), &b).unwrap();
        assert_eq!(c.category, NoveltyCategory::PartiallyNovel);
        let b = ScriptedBackend::new("s").on(Purpose::Categorize, "", "{\"category\": \"scooped\"}");
        assert!(categorize_report(&report(0), &claim(), &b).is_err());
    }

    #[test]
    fn parameter_source_reads_tag_values() {
        let q = LiteratureParameterSource::question("Mo16S31", DftObjective::DefectRelaxation);
        let client = MockLiteratureClient::new("dft")
            .entry(
                &regex::escape(&q),
                "Most studies use ENCUT = 500 eV with ISMEAR: 0 and SIGMA of 0.05; a k-point length of 40 is common.",
                vec![Citation { id: "doi:10.1/x".into(), snippet: String::new() }],
            )
            .unwrap();
        let src = LiteratureParameterSource { client: &client };
        let advice = src.recommend("Mo16S31", DftObjective::DefectRelaxation).unwrap();
        let tags: Vec<(&str, &str)> = advice.iter().map(|a| (a.tag.as_str(), a.value.as_str())).collect();
        assert_eq!(tags, vec![("ENCUT", "500"), ("ISMEAR", "0"), ("SIGMA", "0.05"), ("KDENSITY", "40")]);
        assert!(advice.iter().all(|a| a.citation == "doi:10.1/x"));
    }
}
