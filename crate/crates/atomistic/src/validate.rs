use std::collections::{BTreeMap, BTreeSet};

use labloop_llm::{complete_structured, template, Backend};
use serde::{Deserialize, Serialize};

use crate::elements::covalent_radius;
use crate::error::Result;
use crate::plan::{execute_plan, BuildPlan, Instruction, Selector};
use crate::render::render_views;
use crate::structure::{scale, AtomicStructure, Geometry, Vec3};

pub const CLASH_FACTOR: f64 = 0.6;
pub const BOND_TOLERANCE: f64 = 0.25;
pub const MIN_VACUUM: f64 = 8.0;
pub const MIN_CELL_VOLUME: f64 = 1.0;
/// Default thickness suggested when vacuum is missing.
pub const SUGGESTED_VACUUM: f64 = 15.0;
/// Neighbours further than this multiple of the radius sum are not bonded.
const BONDED_RANGE: f64 = 2.0;
const MAX_ISSUES_PER_CODE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IssueCode {
    Clash,
    BondLength,
    Stoichiometry,
    CountMismatch,
    Vacuum,
    CellShape,
    RequestMismatch,
}

impl IssueCode {
    pub fn as_str(self) -> &'static str {
        match self {
            IssueCode::Clash => "CLASH",
            IssueCode::BondLength => "BOND_LENGTH",
            IssueCode::Stoichiometry => "STOICHIOMETRY",
            IssueCode::CountMismatch => "COUNT_MISMATCH",
            IssueCode::Vacuum => "VACUUM",
            IssueCode::CellShape => "CELL_SHAPE",
            IssueCode::RequestMismatch => "REQUEST_MISMATCH",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// Machine-applicable form of a hint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanFix {
    /// Append this instruction to the plan.
    Append { instruction: Instruction },
    /// Drop the explicit lattice constant and use the preset value.
    UsePresetLatticeConstant,
    /// The plan is fine; rebuild the structure from it.
    Rebuild,
}

impl BuildPlan {
    pub fn with_fix(&self, fix: &PlanFix) -> BuildPlan {
        let mut out = self.clone();
        match fix {
            PlanFix::Append { instruction } => out.instructions.push(instruction.clone()),
            PlanFix::UsePresetLatticeConstant => {
                if let Some(Instruction::MakeLattice { lattice_constant, .. }) = out.instructions.first_mut() {
                    *lattice_constant = None;
                }
            }
            PlanFix::Rebuild => {}
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub code: IssueCode,
    pub severity: Severity,
    pub message: String,
    pub hint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fix: Option<PlanFix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn new(issues: Vec<Issue>) -> Self {
        let passed = !issues.iter().any(|i| i.severity == Severity::Error);
        Self { issues, passed }
    }

    pub fn codes(&self) -> BTreeSet<IssueCode> {
        self.issues.iter().map(|i| i.code).collect()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    /// Bullet list used as refinement feedback.
    pub fn feedback(&self) -> String {
        self.issues
            .iter()
            .map(|i| {
                let sev = if i.severity == Severity::Error { "error" } else { "warning" };
                format!("- [{sev} {}] {} Fix: {}", i.code.as_str(), i.message, i.hint)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn radius(sym: &str) -> f64 {
    covalent_radius(sym).unwrap_or(1.5)
}

fn displace_fix(j: usize, vector: Vec3) -> PlanFix {
    PlanFix::Append { instruction: Instruction::Displace { selector: Selector::Indices { indices: vec![j] }, vector } }
}

fn push_capped(out: &mut Vec<Issue>, issue: Issue) {
    if out.iter().filter(|i| i.code == issue.code).count() < MAX_ISSUES_PER_CODE {
        out.push(issue);
    }
}

/// Backend-independent checks. Atom indices in messages and fixes refer to
/// the canonical order of `structure`.
pub fn check_geometry(s: &AtomicStructure, plan: &BuildPlan) -> ValidationReport {
    let mut issues = Vec::new();
    let periodic = s.pbc.iter().any(|&p| p);
    let cell_ok = !periodic || s.volume().abs() >= MIN_CELL_VOLUME;
    if !cell_ok {
        issues.push(Issue {
            code: IssueCode::CellShape,
            severity: Severity::Error,
            message: format!("periodic cell volume {:.4} Å³ is below {MIN_CELL_VOLUME} Å³", s.volume().abs()),
            hint: if plan.explicit_lattice_constant() {
                "remove the explicit lattice_constant from make_lattice so the preset value is used".into()
            } else {
                "rebuild the structure from the plan; the cell vectors are degenerate".into()
            },
            fix: Some(if plan.explicit_lattice_constant() { PlanFix::UsePresetLatticeConstant } else { PlanFix::Rebuild }),
        });
    }
    let geo = Geometry::new(s, !cell_ok);

    // pairwise distances, reused by the clash and bond checks
    let n = s.len();
    let mut nearest: Vec<Option<(usize, f64, Vec3)>> = vec![None; n];
    for i in 0..n {
        for j in i..n {
            let Some(sep) = geo.separation(i, j) else { continue };
            if j != i && sep.distance < CLASH_FACTOR * (radius(&s.species[i]) + radius(&s.species[j])) {
                let target = radius(&s.species[i]) + radius(&s.species[j]);
                push_capped(
                    &mut issues,
                    Issue {
                        code: IssueCode::Clash,
                        severity: Severity::Error,
                        message: format!(
                            "atoms {i} ({}) and {j} ({}) are {:.3} Å apart, below {CLASH_FACTOR} × {target:.2} Å",
                            s.species[i], s.species[j], sep.distance
                        ),
                        hint: format!("displace atom {j} away from atom {i} by {:.3} Å", target - sep.distance),
                        fix: Some(displace_fix(j, push_apart(sep.vector, sep.distance, target))),
                    },
                );
            }
            for (a, b, v) in [(i, j, sep.vector), (j, i, scale(sep.vector, -1.0))] {
                if nearest[a].is_none_or(|(_, d, _)| sep.distance < d) {
                    nearest[a] = Some((b, sep.distance, v));
                }
            }
        }
    }

    let mut seen = BTreeSet::new();
    for i in 0..n {
        let Some((j, d, v)) = nearest[i] else { continue };
        let target = radius(&s.species[i]) + radius(&s.species[j]);
        let ratio = d / target;
        let key = (i.min(j), i.max(j));
        if (ratio - 1.0).abs() <= BOND_TOLERANCE || ratio > BONDED_RANGE || !seen.insert(key) {
            continue;
        }
        let (verb, moved) = if ratio < 1.0 { ("short", "away from") } else { ("long", "towards") };
        // move the partner along the bond to the ideal length
        let (mover, anchor, vec) = if j == i { (i, i, v) } else { (key.1, key.0, if key.1 == j { v } else { scale(v, -1.0) }) };
        push_capped(
            &mut issues,
            Issue {
                code: IssueCode::BondLength,
                severity: Severity::Warning,
                message: format!(
                    "{verb} bond {}–{} between atoms {i} and {j}: {d:.3} Å vs {target:.2} Å expected",
                    s.species[i], s.species[j]
                ),
                hint: format!("displace atom {mover} {moved} atom {anchor} by {:.3} Å", (target - d).abs()),
                fix: Some(displace_fix(mover, push_apart(vec, d, target))),
            },
        );
    }

    if let Ok(expected) = execute_plan(plan) {
        if expected.len() != n {
            issues.push(Issue {
                code: IssueCode::CountMismatch,
                severity: Severity::Error,
                message: format!("structure has {n} atoms, the plan implies {}", expected.len()),
                hint: "rebuild the structure from the plan without manual edits".into(),
                fix: Some(PlanFix::Rebuild),
            });
        }
        if !same_stoichiometry(&s.composition(), &expected.composition()) {
            issues.push(Issue {
                code: IssueCode::Stoichiometry,
                severity: Severity::Error,
                message: format!("composition {} differs from the plan's {}", s.formula(), expected.formula()),
                hint: "rebuild the structure from the plan; substitute only the species the request names".into(),
                fix: Some(PlanFix::Rebuild),
            });
        }
    }

    if cell_ok {
        if let Some(frac) = s.fractional_positions() {
            let heights = s.heights();
            for k in (0..3).filter(|&k| !s.pbc[k]) {
                let span = largest_gap(frac.iter().map(|f| f[k])) * heights[k];
                if span < MIN_VACUUM {
                    issues.push(Issue {
                        code: IssueCode::Vacuum,
                        severity: Severity::Error,
                        message: format!("only {span:.2} Å of vacuum along non-periodic axis {k} (minimum {MIN_VACUUM} Å)"),
                        hint: format!("append set_vacuum on axis {k} with thickness {SUGGESTED_VACUUM} Å"),
                        fix: Some(PlanFix::Append {
                            instruction: Instruction::SetVacuum { axis: k, thickness: SUGGESTED_VACUUM },
                        }),
                    });
                }
            }
        }
    }

    issues.sort_by_key(|i| i.code);
    ValidationReport::new(issues)
}

fn push_apart(v: Vec3, d: f64, target: f64) -> Vec3 {
    let dir = if d > 1e-9 { scale(v, 1.0 / d) } else { [0.0, 0.0, 1.0] };
    scale(dir, target - d)
}

/// Largest circular gap (fractional units) between coordinates taken mod 1.
pub(crate) fn largest_gap(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.map(|x| x.rem_euclid(1.0)).collect();
    if v.is_empty() {
        return 1.0;
    }
    v.sort_by(f64::total_cmp);
    let wrap = v[0] + 1.0 - v[v.len() - 1];
    v.windows(2).map(|w| w[1] - w[0]).fold(wrap, f64::max)
}

fn same_stoichiometry(a: &BTreeMap<String, usize>, b: &BTreeMap<String, usize>) -> bool {
    let (na, nb) = (a.values().sum::<usize>() as f64, b.values().sum::<usize>() as f64);
    let keys: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    keys.into_iter().all(|k| {
        let fa = a.get(k).map_or(0.0, |&x| x as f64 / na.max(1.0));
        let fb = b.get(k).map_or(0.0, |&x| x as f64 / nb.max(1.0));
        (fa - fb).abs() < 1e-9
    })
}

#[derive(Deserialize)]
struct SemanticAnswer {
    issues: Vec<SemanticIssue>,
}

#[derive(Deserialize)]
struct SemanticIssue {
    message: String,
    #[serde(default)]
    hint: String,
}

/// Geometric checks plus, when a backend is given, a semantic comparison of
/// the request against the plan and a text digest of the rendered views.
/// Backend issues are added as REQUEST_MISMATCH; geometric results stand.
pub fn validate(s: &AtomicStructure, plan: &BuildPlan, request: &str, backend: Option<&dyn Backend>) -> Result<ValidationReport> {
    let mut report = check_geometry(s, plan);
    let Some(backend) = backend else { return Ok(report) };
    let digest = match render_views(s) {
        Ok(r) => r.digest(s),
        Err(e) => format!("renders unavailable: {e}"),
    };
    let vars = BTreeMap::from([
        ("request", request.to_string()),
        ("plan", serde_json::to_string_pretty(plan).expect("plan serializes")),
        ("render_digest", digest),
    ]);
    let prompt = template("validate_semantic").render(&vars)?;
    let answer = complete_structured::<SemanticAnswer>(&prompt, backend)?;
    for i in answer.value.issues {
        let hint = if i.hint.trim().is_empty() { "revise the plan so it matches the request".into() } else { i.hint };
        report.issues.push(Issue { code: IssueCode::RequestMismatch, severity: Severity::Error, message: i.message, hint, fix: None });
    }
    Ok(ValidationReport::new(report.issues))
}
