use std::path::PathBuf;

use labloop_atomistic::{generate_structure, plan_from_request, IssueCode, Placement, Selector, Instruction, StructError};
use labloop_llm::{RecordingBackend, ReplayBackend, ScriptedBackend};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn script(name: &str) -> ScriptedBackend {
    ScriptedBackend::from_file(&fixtures().join("scripts").join(name)).unwrap()
}

const GRAPHENE: &str = "a 4x4 graphene supercell with a single vacancy";

#[test]
fn graphene_vacancy_first_try() {
    let b = script("graphene_vacancy.json");
    let g = generate_structure(GRAPHENE, &b, 3).unwrap();
    assert_eq!(g.structure.len(), 31);
    assert!(g.report.passed);
    assert_eq!(g.trace.len(), 1);
    match &g.plan.instructions[0] {
        Instruction::MakeLattice { preset, lattice_constant, vacuum } => {
            assert_eq!(preset, "graphene");
            assert_eq!(*lattice_constant, Some(2.46));
            assert_eq!(*vacuum, Some(15.0));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn refinement_converges_on_second_attempt() {
    let b = script("graphene_refine.json");
    let g = generate_structure(GRAPHENE, &b, 3).unwrap();
    assert_eq!(g.trace.len(), 2);
    assert!(g.trace[0].report.codes().contains(&IssueCode::Clash));
    assert!(g.trace[1].report.passed);
    assert_eq!(g.structure.len(), 31);
}

#[test]
fn always_faulty_is_unresolved_after_max_attempts() {
    let b = script("graphene_always_faulty.json");
    match generate_structure(GRAPHENE, &b, 3) {
        Err(StructError::Unresolved { trace }) => {
            assert_eq!(trace.len(), 3);
            assert!(trace.iter().all(|a| !a.report.passed));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn mos2_line_request_uses_nearest_line() {
    let b = script("mos2_line_vacancies.json");
    let plan = plan_from_request("MoS2 monolayer 5x5 with a line of 4 sulfur vacancies", &b).unwrap();
    assert!(plan.instructions.iter().any(|i| matches!(
        i,
        Instruction::RemoveAtoms { selector: Selector::Species { species, count: 4, placement: Placement::NearestLine { .. } } }
            if species == "S"
    )));
    let g = generate_structure("MoS2 monolayer 5x5 with a line of 4 sulfur vacancies", &b, 3).unwrap();
    assert_eq!(g.structure.formula(), "Mo25S46");
}

#[test]
fn empty_request_is_rejected() {
    let b = script("graphene_vacancy.json");
    assert!(matches!(plan_from_request("  ", &b), Err(StructError::EmptyRequest)));
}

#[test]
fn unknown_preset_is_reported() {
    let b = ScriptedBackend::new("p").on(
        labloop_llm::Purpose::Plan,
        ".*",
        "```json\n{\"plan\": [{\"op\": \"make_lattice\", \"preset\": \"hcp_Zn\"}]}\n```",
    );
    assert!(matches!(plan_from_request("zinc", &b), Err(StructError::UnknownPreset(_))));
}

#[test]
fn unparseable_after_one_retry() {
    let b = ScriptedBackend::new("p").on(labloop_llm::Purpose::Plan, ".*", "I would build graphene.");
    assert!(matches!(plan_from_request("graphene", &b), Err(StructError::UnparseableCompletion(_))));
}

/// The committed replay recording must reproduce the scripted run exactly.
/// Set LABLOOP_BLESS=1 to regenerate it after changing prompts or fixtures.
#[test]
fn replay_recording_matches_scripted_run() {
    let path = fixtures().join("replay/graphene_vacancy.jsonl");
    if std::env::var_os("LABLOOP_BLESS").is_some() {
        let _ = std::fs::remove_file(&path);
        let rec = RecordingBackend::new(script("graphene_vacancy.json")).persist_to(&path);
        generate_structure(GRAPHENE, &rec, 3).unwrap();
    }
    let live = generate_structure(GRAPHENE, &script("graphene_vacancy.json"), 3).unwrap();
    let replay = ReplayBackend::from_path(&path).unwrap();
    let replayed = generate_structure(GRAPHENE, &replay, 3).unwrap();
    assert_eq!(replayed.structure, live.structure);
    assert_eq!(replayed.report, live.report);
}
