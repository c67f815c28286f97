use std::collections::BTreeMap;

use labloop_llm::{complete_structured, template, Backend};
use serde::Serialize;

use crate::error::{Result, StructError};
use crate::plan::{execute_plan, BuildPlan};
use crate::presets::presets;
use crate::structure::AtomicStructure;
use crate::validate::{validate, ValidationReport};

pub const DEFAULT_MAX_ATTEMPTS: usize = 3;

#[derive(Debug, Clone, Serialize)]
pub struct Attempt {
    pub attempt: usize,
    pub plan: BuildPlan,
    pub structure: AtomicStructure,
    pub report: ValidationReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct Generated {
    pub structure: AtomicStructure,
    pub plan: BuildPlan,
    pub report: ValidationReport,
    pub trace: Vec<Attempt>,
}

fn preset_list() -> String {
    presets().iter().map(|p| format!("\n- {}", p.describe())).collect()
}

fn parse_plan(value: BuildPlan) -> Result<BuildPlan> {
    value.check()?;
    Ok(value)
}

pub fn plan_from_request(request: &str, backend: &dyn Backend) -> Result<BuildPlan> {
    if request.trim().is_empty() {
        return Err(StructError::EmptyRequest);
    }
    let vars = BTreeMap::from([("request", request.trim().to_string()), ("presets", preset_list())]);
    let prompt = template("plan").render(&vars)?;
    parse_plan(complete_structured::<BuildPlan>(&prompt, backend)?.value)
}

/// Ask for a revised plan given the failing report.
pub fn refine_plan(request: &str, previous: &BuildPlan, report: &ValidationReport, backend: &dyn Backend) -> Result<BuildPlan> {
    let vars = BTreeMap::from([
        ("request", request.trim().to_string()),
        ("previous_plan", serde_json::to_string_pretty(previous).expect("plan serializes")),
        ("issues", report.feedback()),
    ]);
    let prompt = template("refine").render(&vars)?;
    parse_plan(complete_structured::<BuildPlan>(&prompt, backend)?.value)
}

/// plan → execute → validate, feeding hints back until the structure passes
/// or `max_attempts` plans have been tried.
pub fn generate_structure(request: &str, backend: &dyn Backend, max_attempts: usize) -> Result<Generated> {
    let max_attempts = max_attempts.max(1);
    let mut trace: Vec<Attempt> = Vec::new();
    let mut plan = plan_from_request(request, backend)?;
    for attempt in 1..=max_attempts {
        if attempt > 1 {
            let last = trace.last().expect("previous attempt");
            plan = refine_plan(request, &last.plan, &last.report, backend)?;
        }
        let structure = execute_plan(&plan)?;
        let report = validate(&structure, &plan, request, Some(backend))?;
        let passed = report.passed;
        trace.push(Attempt { attempt, plan: plan.clone(), structure, report });
        if passed {
            let last = trace.last().expect("just pushed").clone();
            return Ok(Generated { structure: last.structure, plan: last.plan, report: last.report, trace });
        }
    }
    Err(StructError::Unresolved { trace })
}
