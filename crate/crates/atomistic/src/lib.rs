//! Atomic structures from typed build plans, with geometric validation,
//! multi-view rendering, a plan/refine loop over a completion backend, and
//! VASP input preparation (POSCAR, INCAR, KPOINTS).

pub mod dftprep;
pub mod elements;
mod error;
pub mod faults;
pub mod generate;
pub mod plan;
pub mod presets;
pub mod render;
pub mod structure;
pub mod validate;

pub use dftprep::{
    default_incar, emit_incar, emit_kpoints, emit_poscar, kpoint_grid, parse_poscar, select_parameters, DftObjective,
    DftSetup, IncarSpec, IncarTag, IncarValue, KpointsSpec, ParameterAdvice, ParameterSource, TagProvenance,
};
pub use error::{DftError, Result, StructError};
pub use generate::{generate_structure, plan_from_request, refine_plan, Attempt, Generated, DEFAULT_MAX_ATTEMPTS};
pub use plan::{execute_plan, BuildPlan, Instruction, Placement, Selector};
pub use render::{render_views, Disc, RenderSet, RenderView};
pub use structure::AtomicStructure;
pub use validate::{check_geometry, validate, Issue, IssueCode, PlanFix, Severity, ValidationReport};
