//! Narrative summaries, claim extraction, guidance integration and the
//! claim → research-question conversion.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use labloop_core::{canonical_serialize, content_id, digest_hex, AnalysisSummary, Claim, ClaimOrigin, Finding, Guidance, ResearchQuestion};
use labloop_llm::{complete, complete_structured, template, Backend};
use regex::Regex;
use serde::Deserialize;

use crate::error::{Result, WorkflowError};

pub const DEFAULT_MAX_CLAIMS: usize = 5;
/// Relative tolerance when matching narrative numbers against findings.
pub const NUMBER_TOLERANCE: f64 = 0.01;

/// Identity and subject of the run the claims belong to.
#[derive(Debug, Clone, Copy)]
pub struct ClaimContext<'a> {
    pub run_id: &'a str,
    pub material: &'a str,
}

/// Claims plus how many format-reminder retries the backend needed.
#[derive(Debug, Clone, PartialEq)]
pub struct ClaimSet {
    pub claims: Vec<Claim>,
    pub retries: usize,
}

/// Four significant digits; integers print without a fraction.
pub fn fmt_number(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        return format!("{v:.0}");
    }
    let digits = (3 - v.abs().log10().floor() as i32).clamp(0, 12) as usize;
    let s = format!("{v:.digits$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Findings as the bullet list the prompts interpolate.
pub fn format_findings(findings: &[Finding]) -> String {
    let mut out = String::new();
    for f in findings {
        out.push_str(&format!("- {}:", f.tool));
        for n in &f.numbers {
            let unit = if n.unit.is_empty() { String::new() } else { format!(" {}", n.unit) };
            out.push_str(&format!("\n    {} = {}{unit}", n.name, fmt_number(n.value)));
        }
        for o in &f.observations {
            out.push_str(&format!("\n    note: {o}"));
        }
        if !f.artifacts.is_empty() {
            out.push_str(&format!("\n    artifacts: {}", f.artifacts.join(", ")));
        }
        out.push('\n');
    }
    out.trim_end().to_string()
}

fn number_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?").expect("valid regex"))
}

/// Numbers quoted in `narrative` that match no finding within 1 %.
///
/// Digits glued to a preceding letter (formulas such as `MoS2`) are not numbers.
pub fn unmatched_numbers(narrative: &str, findings: &[Finding]) -> Vec<String> {
    let known: Vec<f64> = findings.iter().flat_map(|f| f.numbers.iter().map(|n| n.value)).collect();
    let mut out = Vec::new();
    for m in number_regex().find_iter(narrative) {
        let before = narrative[..m.start()].chars().next_back();
        if before.is_some_and(|c| c.is_alphanumeric() || c == '.' || c == '_') {
            continue;
        }
        let Ok(x) = m.as_str().parse::<f64>() else { continue };
        let hit = known.iter().any(|&k| {
            let k = k.abs();
            let x = x.abs();
            if k == 0.0 {
                x == 0.0
            } else {
                (x - k).abs() <= NUMBER_TOLERANCE * k
            }
        });
        if !hit && !out.contains(&m.as_str().to_string()) {
            out.push(m.as_str().to_string());
        }
    }
    out
}

fn meta(metadata: &BTreeMap<String, String>, key: &str, fallback: &str) -> String {
    metadata.get(key).filter(|v| !v.trim().is_empty()).cloned().unwrap_or_else(|| fallback.to_string())
}

/// Ask the backend for a narrative over the structured findings. Numbers in
/// the narrative that do not appear in the findings are flagged, not fatal.
pub fn summarize_analysis(findings: &[Finding], metadata: &BTreeMap<String, String>, backend: &dyn Backend) -> Result<AnalysisSummary> {
    if findings.is_empty() || findings.iter().all(|f| f.artifacts.is_empty() && f.numbers.is_empty()) {
        return Err(WorkflowError::NoFindings);
    }
    let vars = BTreeMap::from([
        ("technique", meta(metadata, "technique", "characterization")),
        ("material", meta(metadata, "material", "an unspecified material")),
        ("notes", meta(metadata, "notes", "none")),
        ("findings", format_findings(findings)),
    ]);
    let prompt = template("summarize").render(&vars)?;
    let narrative = complete(&prompt, backend)?.text;
    let number_mismatches = unmatched_numbers(&narrative, findings);
    Ok(AnalysisSummary {
        metadata_digest: digest_hex(&canonical_serialize(metadata)?),
        findings: findings.to_vec(),
        narrative,
        number_mismatches,
    })
}

#[derive(Debug, Deserialize)]
struct DraftClaim {
    statement: String,
    #[serde(default)]
    evidence: Vec<String>,
    #[serde(default)]
    keywords: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct ClaimsBlock {
    claims: Vec<DraftClaim>,
}

fn artifact_names(summary: &AnalysisSummary) -> Vec<String> {
    let mut seen = BTreeSet::new();
    summary.findings.iter().flat_map(|f| f.artifacts.iter()).filter(|a| seen.insert(a.as_str())).cloned().collect()
}

fn statement_key(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").trim_end_matches('.').to_lowercase()
}

/// Turn drafts into claims, dropping evidence that names unknown artifacts
/// and statements already present in `existing`.
fn admit(
    drafts: Vec<DraftClaim>,
    existing: &[Claim],
    artifacts: &[String],
    ctx: ClaimContext<'_>,
    origin: ClaimOrigin,
    max_claims: usize,
) -> Result<Vec<Claim>> {
    let mut seen: BTreeSet<String> = existing.iter().map(|c| statement_key(&c.statement)).collect();
    let mut out = Vec::new();
    for d in drafts {
        let statement = d.statement.split_whitespace().collect::<Vec<_>>().join(" ");
        if statement.is_empty() {
            return Err(WorkflowError::InvalidClaim("empty statement".into()));
        }
        if !seen.insert(statement_key(&statement)) {
            continue;
        }
        if out.len() == max_claims {
            break;
        }
        let mut evidence: Vec<String> = Vec::new();
        for e in d.evidence {
            if artifacts.contains(&e) && !evidence.contains(&e) {
                evidence.push(e);
            }
        }
        let keywords = d.keywords.into_iter().map(|k| k.trim().to_string()).filter(|k| !k.is_empty()).collect();
        out.push(Claim {
            id: content_id(ctx.run_id, "claims", existing.len() + out.len()),
            statement,
            has_evidence_grounding: !evidence.is_empty(),
            evidence,
            keywords,
            origin,
        });
    }
    Ok(out)
}

/// Extract up to `max_claims` claims, in backend order.
pub fn generate_claims(summary: &AnalysisSummary, ctx: ClaimContext<'_>, backend: &dyn Backend, max_claims: usize) -> Result<ClaimSet> {
    let artifacts = artifact_names(summary);
    let vars = BTreeMap::from([
        ("material", ctx.material.to_string()),
        ("narrative", summary.narrative.trim().to_string()),
        ("findings", format_findings(&summary.findings)),
        ("artifacts", artifacts.join(", ")),
        ("max_claims", max_claims.to_string()),
    ]);
    let prompt = template("claims").render(&vars)?;
    let reply = complete_structured::<ClaimsBlock>(&prompt, backend)?;
    let claims = admit(reply.value.claims, &[], &artifacts, ctx, ClaimOrigin::Automated, max_claims)?;
    Ok(ClaimSet { claims, retries: reply.exchanges.len() - 1 })
}

/// Extend `claims` with hypotheses prompted by expert guidance. Existing
/// claims are returned unchanged and in order; new ones are `HumanGuided`.
pub fn integrate_guidance(
    claims: &[Claim],
    guidance: &Guidance,
    summary: &AnalysisSummary,
    ctx: ClaimContext<'_>,
    backend: &dyn Backend,
    max_claims: usize,
) -> Result<ClaimSet> {
    if guidance.text.trim().is_empty() {
        return Err(WorkflowError::EmptyGuidance);
    }
    let artifacts = artifact_names(summary);
    let existing = if claims.is_empty() {
        "(none)".to_string()
    } else {
        claims.iter().map(|c| format!("- {}", c.statement)).collect::<Vec<_>>().join("\n")
    };
    let vars = BTreeMap::from([
        ("material", ctx.material.to_string()),
        ("narrative", summary.narrative.trim().to_string()),
        ("artifacts", artifacts.join(", ")),
        ("existing_claims", existing),
        ("guidance", guidance.text.trim().to_string()),
        ("max_claims", max_claims.to_string()),
    ]);
    let prompt = template("guidance").render(&vars)?;
    let reply = complete_structured::<ClaimsBlock>(&prompt, backend)?;
    let added = admit(reply.value.claims, claims, &artifacts, ctx, ClaimOrigin::HumanGuided, max_claims)?;
    let mut all = claims.to_vec();
    all.extend(added);
    Ok(ClaimSet { claims: all, retries: reply.exchanges.len() - 1 })
}

const FORMULAS: &[(&str, &str)] = &[
    ("MoS2", "molybdenum disulfide"),
    ("MoSe2", "molybdenum diselenide"),
    ("MoTe2", "molybdenum ditelluride"),
    ("WS2", "tungsten disulfide"),
    ("WSe2", "tungsten diselenide"),
    ("WTe2", "tungsten ditelluride"),
    ("NbSe2", "niobium diselenide"),
    ("ReS2", "rhenium disulfide"),
    ("hBN", "hexagonal boron nitride"),
    ("h-BN", "hexagonal boron nitride"),
    ("rGO", "reduced graphene oxide"),
    ("GO", "graphene oxide"),
    ("TiO2", "titanium dioxide"),
    ("ZnO", "zinc oxide"),
    ("GaN", "gallium nitride"),
    ("SiC", "silicon carbide"),
    ("SrTiO3", "strontium titanate"),
    ("BaTiO3", "barium titanate"),
    ("Bi2Se3", "bismuth selenide"),
    ("CrI3", "chromium triiodide"),
    ("MoO3", "molybdenum trioxide"),
];

const DETERMINERS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "some", "several", "many", "multiple", "numerous", "no", "each",
    "every", "any", "two", "three", "four", "five", "both",
];

/// Words that make a statement a clause rather than a noun phrase.
const FINITE_VERBS: &[&str] = &[
    "is", "are", "was", "were", "has", "have", "had", "can", "could", "may", "might", "will", "would", "do", "does", "did",
    "show", "shows", "exhibit", "exhibits", "induce", "induces", "form", "correlate", "correlates", "coincide",
    "coincides", "correspond", "corresponds", "arise", "arises", "originate", "originates", "cause", "causes", "lead",
    "host", "hosts", "indicate", "indicates", "suggest", "suggests", "reduce", "reduces", "increase", "increases",
    "enhance", "enhances", "dominate", "dominates", "govern", "governs", "display", "displays", "contain", "contains",
    "appear", "appears", "occur", "occurs", "exist", "exists", "emerge", "emerges", "produce", "produces", "modulate",
    "modulates", "act", "consist", "consists",
];

/// Words that end the head noun phrase.
const PHRASE_BREAKS: &[&str] = &[
    "of", "in", "on", "at", "with", "within", "along", "across", "near", "between", "containing", "organized",
    "organised", "that", "which", "from", "into", "under", "over", "for", "by", "to", "forming", "located", "arranged",
];

fn subscripts_to_digits(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            '₀'..='₉' => char::from_digit(c as u32 - '₀' as u32, 10).expect("digit"),
            _ => c,
        })
        .collect()
}

fn formula_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let mut names: Vec<&str> = FORMULAS.iter().map(|f| f.0).collect();
        names.sort_by_key(|n| std::cmp::Reverse(n.len()));
        let alt = names.iter().map(|n| regex::escape(n)).collect::<Vec<_>>().join("|");
        Regex::new(&format!(r"(^|[^\w-])({alt})\b")).expect("valid regex")
    })
}

fn present_in_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(?:(?:is|are)\s+)?present\s+in\b").expect("valid regex"))
}

/// Replace known chemical formulas by their names.
pub fn expand_formulas(text: &str) -> String {
    let text = subscripts_to_digits(text);
    formula_regex()
        .replace_all(&text, |c: &regex::Captures<'_>| {
            let name = FORMULAS.iter().find(|f| f.0 == &c[2]).map_or(&c[2], |f| f.1);
            format!("{}{name}", &c[1])
        })
        .into_owned()
}

fn is_acronym(token: &str) -> bool {
    let mut chars = token.chars();
    let first_upper = chars.next().is_some_and(char::is_uppercase);
    token.chars().any(|c| c.is_ascii_digit())
        || token.chars().skip(1).any(char::is_uppercase)
        || (first_upper && token.chars().count() == 1)
}

fn is_plural(word: &str) -> bool {
    let w = word.to_lowercase();
    w.ends_with('s') && !(w.ends_with("ss") || w.ends_with("us") || w.ends_with("is"))
}

fn article_for(word: &str) -> &'static str {
    let lower = word.to_lowercase();
    if is_acronym(word) {
        return if word.starts_with(['A', 'E', 'F', 'H', 'I', 'L', 'M', 'N', 'O', 'R', 'S', 'X']) { "an" } else { "a" };
    }
    let vowel = lower.starts_with(['a', 'e', 'i', 'o', 'u']);
    let exception = ["uni", "use", "usu", "one", "eu"].iter().any(|p| lower.starts_with(p));
    if vowel && !exception {
        "an"
    } else {
        "a"
    }
}

fn word_of(token: &str) -> String {
    token.trim_matches(|c: char| !c.is_alphanumeric() && c != '-').to_lowercase()
}

/// Deterministic question for `claim` about `material`:
///
/// 1. strip trailing punctuation, 2. expand known formulas, 3. "present in" →
/// "in", 4. lowercase the first word unless it is an acronym or formula,
/// 5. noun phrases get an indefinite article where one is needed, clauses
/// are asked as "reported that …", 6. append "in <material>" when the
/// statement does not already mention it.
pub fn claim_to_question(claim: &Claim, material: &str) -> ResearchQuestion {
    let mut s = subscripts_to_digits(claim.statement.trim());
    s = s.trim_end_matches(['.', '!', '?', ';', ':', ',']).trim_end().to_string();
    s = expand_formulas(&s);
    s = present_in_regex().replace_all(&s, "in").into_owned();
    s = s.split_whitespace().collect::<Vec<_>>().join(" ");

    let mut tokens: Vec<String> = s.split(' ').map(str::to_string).collect();
    if let Some(first) = tokens.first_mut() {
        if !is_acronym(first) {
            let mut chars = first.chars();
            if let Some(c) = chars.next() {
                *first = c.to_lowercase().chain(chars).collect();
            }
        }
    }
    let words: Vec<String> = tokens.iter().map(|t| word_of(t)).collect();
    let clause = words.iter().skip(1).any(|w| FINITE_VERBS.contains(&w.as_str()));
    let mut body = tokens.join(" ");

    let material = expand_formulas(material.trim());
    let lower = body.to_lowercase();
    if !material.is_empty() && !lower.contains(&material.to_lowercase()) {
        body = format!("{body} in {material}");
    }

    let text = if clause {
        format!("Has anyone reported that {body}?")
    } else {
        let first = words.first().cloned().unwrap_or_default();
        let head = words.iter().take_while(|w| !PHRASE_BREAKS.contains(&w.as_str())).last().cloned().unwrap_or_default();
        let needs_article = !first.is_empty()
            && !DETERMINERS.contains(&first.as_str())
            && !first.chars().all(|c| c.is_ascii_digit() || c == '.')
            && !is_plural(&head);
        if needs_article {
            format!("Has anyone observed {} {body}?", article_for(&tokens[0]))
        } else {
            format!("Has anyone observed {body}?")
        }
    };
    ResearchQuestion { claim_id: claim.id.clone(), text }
}
