//! Follow-up recommendations: atomic models for simulation and targeted
//! measurements, ranked by the novelty of the claims they test.

use std::collections::BTreeMap;

use labloop_core::{AnalysisSummary, Claim, NoveltyAssessment, Recommendation, RecommendationKind, Target};
use labloop_llm::{complete_structured, template, Backend};
use serde::Deserialize;

use crate::catalog::{length_scale, InstrumentCatalog};
use crate::claims::{fmt_number, format_findings};
use crate::error::Result;
use crate::tools::Hotspot;

/// Claims scoring below this are not worth a simulation.
pub const DEFAULT_MIN_SCORE_FOR_SIMULATION: u8 = 2;

#[derive(Debug, Deserialize)]
struct SimulationDraft {
    request: String,
    #[serde(default)]
    rationale: String,
}

/// Claims ordered by novelty, highest first; ties keep claim order.
pub fn ranked<'a>(claims: &'a [Claim], assessments: &'a [NoveltyAssessment]) -> Vec<(&'a Claim, &'a NoveltyAssessment)> {
    let mut out: Vec<_> = claims.iter().filter_map(|c| assessments.iter().find(|a| a.claim_id == c.id).map(|a| (c, a))).collect();
    out.sort_by(|a, b| b.1.score.cmp(&a.1.score));
    out
}

/// One structure request per sufficiently novel claim, priorities 1..N in
/// descending score order.
pub fn recommend_simulations(
    claims: &[Claim],
    assessments: &[NoveltyAssessment],
    summary: &AnalysisSummary,
    material: &str,
    min_score: u8,
    backend: &dyn Backend,
) -> Result<Vec<Recommendation>> {
    let mut out = Vec::new();
    for (claim, a) in ranked(claims, assessments).into_iter().filter(|(_, a)| a.score >= min_score) {
        let vars = BTreeMap::from([
            ("material", material.to_string()),
            ("claim", claim.statement.clone()),
            ("score", a.score.to_string()),
            ("justification", a.justification.clone()),
            ("findings", format_findings(&summary.findings)),
        ]);
        let prompt = template("recommend_simulation").render(&vars)?;
        let draft = complete_structured::<SimulationDraft>(&prompt, backend)?.value;
        let request = draft.request.trim().to_string();
        if request.is_empty() {
            tracing::warn!(claim = %claim.id, "empty structure request; skipped");
            continue;
        }
        out.push(Recommendation {
            kind: RecommendationKind::Simulation,
            title: format!("Model: {request}"),
            rationale: draft.rationale.trim().to_string(),
            priority: out.len() as u32 + 1,
            target: Some(Target::StructureRequest { request }),
            claim_ids: vec![claim.id.clone()],
            warnings: vec![],
        });
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct ExperimentDraft {
    title: String,
    #[serde(default)]
    rationale: String,
    #[serde(default)]
    technique: Option<String>,
    #[serde(default)]
    region: Option<String>,
    #[serde(default)]
    step_size: Option<f64>,
    #[serde(default)]
    step_unit: Option<String>,
    #[serde(default)]
    claims: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct ExperimentDrafts {
    recommendations: Vec<ExperimentDraft>,
}

fn describe_catalog(catalog: Option<&InstrumentCatalog>) -> String {
    match catalog {
        None => "(no catalog supplied)".into(),
        Some(c) if c.instruments.is_empty() => "(no catalog supplied)".into(),
        Some(c) => c
            .instruments
            .iter()
            .map(|i| format!("- {} ({}): minimum step {}, field of view up to {}", i.name, i.technique, i.min_step, i.max_field_of_view))
            .collect::<Vec<_>>()
            .join("\n"),
    }
}

fn describe_hotspots(hotspots: &[Hotspot]) -> String {
    if hotspots.is_empty() {
        return "(none)".into();
    }
    hotspots
        .iter()
        .map(|h| {
            let r = &h.region;
            format!(
                "- {}: {} at x {}..{} {u}, y {}..{} {u}",
                h.id,
                h.description,
                fmt_number(r.x0),
                fmt_number(r.x1),
                fmt_number(r.y0),
                fmt_number(r.y1),
                u = r.unit
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub struct ExperimentContext<'a> {
    pub technique: &'a str,
    pub material: &'a str,
    pub summary: &'a AnalysisSummary,
    pub claims: &'a [Claim],
    pub assessments: &'a [NoveltyAssessment],
    pub hotspots: &'a [Hotspot],
    pub catalog: Option<&'a InstrumentCatalog>,
}

/// Measurement proposals targeting regions of interest. Proposals that break
/// catalog limits are kept with warnings; a proposed step without a length
/// unit has no meaningful target and is reported with a warning instead.
pub fn recommend_experiments(ctx: &ExperimentContext<'_>, backend: &dyn Backend) -> Result<Vec<Recommendation>> {
    let claims_text = ranked(ctx.claims, ctx.assessments)
        .iter()
        .map(|(c, a)| format!("- {} (score {}): {}", c.id, a.score, c.statement))
        .collect::<Vec<_>>()
        .join("\n");
    let vars = BTreeMap::from([
        ("technique", ctx.technique.to_string()),
        ("material", ctx.material.to_string()),
        ("findings", format_findings(&ctx.summary.findings)),
        ("claims", if claims_text.is_empty() { "(none)".into() } else { claims_text }),
        ("hotspots", describe_hotspots(ctx.hotspots)),
        ("catalog", describe_catalog(ctx.catalog)),
    ]);
    let prompt = template("recommend_experiment").render(&vars)?;
    let drafts = complete_structured::<ExperimentDrafts>(&prompt, backend)?.value;
    let known: Vec<&str> = ctx.claims.iter().map(|c| c.id.as_str()).collect();
    let mut out = Vec::new();
    for d in drafts.recommendations {
        let title = d.title.trim().to_string();
        if title.is_empty() {
            continue;
        }
        let mut warnings = Vec::new();
        let technique = d.technique.map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).unwrap_or_else(|| ctx.technique.to_string());
        let region = match d.region.as_deref().map(str::trim).filter(|r| !r.is_empty() && *r != "null") {
            None => None,
            Some(id) => match ctx.hotspots.iter().find(|h| h.id.eq_ignore_ascii_case(id)) {
                Some(h) => Some(h.region.clone()),
                None => {
                    warnings.push(format!("unknown region {id:?}"));
                    None
                }
            },
        };
        let step_unit = d.step_unit.map(|u| u.trim().to_string()).filter(|u| !u.is_empty() && u != "null");
        let target = match (d.step_size, step_unit) {
            (Some(step), Some(unit)) if step.is_finite() && step > 0.0 => {
                if let Some(catalog) = ctx.catalog.filter(|c| !c.instruments.is_empty()) {
                    let extent = region.as_ref().filter(|r| length_scale(&r.unit).is_some()).map(|r| ((r.x1 - r.x0).max(r.y1 - r.y0), r.unit.as_str()));
                    warnings.extend(catalog.violations(&technique, Some((step, &unit)), extent));
                }
                Some(Target::Locus { region, step_size: step, step_unit: unit, technique })
            }
            (Some(_), _) => {
                warnings.push("proposed step has no valid value and unit; no measurement target attached".into());
                None
            }
            (None, _) => region.map(|r| {
                let unit = r.unit.clone();
                Target::Locus { region: Some(r), step_size: 0.0, step_unit: unit, technique }
            }),
        };
        out.push(Recommendation {
            kind: RecommendationKind::NextExperiment,
            title,
            rationale: d.rationale.trim().to_string(),
            priority: out.len() as u32 + 1,
            target,
            claim_ids: d.claims.into_iter().filter(|c| known.contains(&c.as_str())).collect(),
            warnings,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use labloop_core::{ClaimOrigin, NoveltyCategory, Region};
    use labloop_llm::{Purpose, ScriptedBackend};

    fn claim(id: &str) -> Claim {
        Claim {
            id: id.into(),
            statement: format!("statement {id}"),
            evidence: vec![],
            keywords: vec![],
            has_evidence_grounding: false,
            origin: ClaimOrigin::Automated,
        }
    }

    fn assessed(id: &str, score: u8) -> NoveltyAssessment {
        let category = NoveltyCategory::ALL.iter().copied().find(|c| labloop_core::score_category(*c) == score).unwrap();
        NoveltyAssessment {
            claim_id: id.into(),
            literature_report: String::new(),
            citations: vec!["doi:x".into()],
            category,
            justification: "j".into(),
            score,
        }
    }

    fn summary() -> AnalysisSummary {
        AnalysisSummary { metadata_digest: "d".into(), findings: vec![], narrative: "n".into(), number_mismatches: vec![] }
    }

    #[test]
    fn simulations_follow_score_order_and_threshold() {
        let claims = [claim("a"), claim("b"), claim("c")];
        let asmt = [assessed("a", 1), assessed("b", 3), assessed("c", 4)];
        let b = ScriptedBackend::new("s")
            .on(Purpose::Recommend, "statement c", r#"{"request": "4x4 supercell with C", "rationale": "r"}"#)
            .on(Purpose::Recommend, "statement b", r#"{"request": "4x4 supercell with B", "rationale": "r"}"#);
        let recs = recommend_simulations(&claims, &asmt, &summary(), "MoS2", 2, &b).unwrap();
        let got: Vec<(u32, &str)> = recs.iter().map(|r| (r.priority, r.claim_ids[0].as_str())).collect();
        assert_eq!(got, vec![(1, "c"), (2, "b")]);
    }

    #[test]
    fn catalog_violations_become_warnings() {
        let catalog = InstrumentCatalog::from_json(
            r#"{"instruments": [{"name": "T1", "technique": "TEPL", "min_step": {"value": 10, "unit": "nm"},
                "max_field_of_view": {"value": 5, "unit": "um"}}]}"#,
        )
        .unwrap();
        let hotspots = [Hotspot { id: "A1".into(), description: "d".into(), region: Region { x0: 0.0, y0: 0.0, x1: 200.0, y1: 100.0, unit: "nm".into() } }];
        let claims = [claim("a")];
        let asmt = [assessed("a", 3)];
        let b = ScriptedBackend::new("s").on(
            Purpose::Recommend,
            "",
            r#"{"recommendations": [
                {"title": "Fine map", "rationale": "r", "technique": "TEPL", "region": "A1", "step_size": 5, "step_unit": "nm", "claims": ["a", "zz"]},
                {"title": "Coarse map", "rationale": "r", "technique": "TEPL", "region": "A1", "step_size": 20, "step_unit": "nm", "claims": []},
                {"title": "Unitless", "rationale": "r", "technique": "TEPL", "region": null, "step_size": 3, "step_unit": null, "claims": []}]}"#,
        );
        let s = summary();
        let ctx = ExperimentContext { technique: "TEPL", material: "PTCDI", summary: &s, claims: &claims, assessments: &asmt, hotspots: &hotspots, catalog: Some(&catalog) };
        let recs = recommend_experiments(&ctx, &b).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].warnings.len(), 1);
        assert_eq!(recs[0].claim_ids, vec!["a".to_string()]);
        assert!(recs[1].warnings.is_empty());
        assert!(matches!(&recs[1].target, Some(Target::Locus { region: Some(r), .. }) if r.x1 == 200.0));
        assert!(recs[2].target.is_none() && !recs[2].warnings.is_empty());
        assert_eq!(recs.iter().map(|r| r.priority).collect::<Vec<_>>(), vec![1, 2, 3]);
    }
}
