use labloop_atomistic::faults::{fault_suite, graphene_4x4, graphene_with_bond};
use labloop_atomistic::{
    check_geometry, execute_plan, validate, AtomicStructure, BuildPlan, Instruction, IssueCode, PlanFix, Severity,
};
use labloop_llm::{Purpose, ScriptedBackend};
use proptest::prelude::*;

fn box_of(species: &[&str], positions: Vec<[f64; 3]>) -> AtomicStructure {
    AtomicStructure::new(
        species.iter().map(|s| s.to_string()).collect(),
        positions,
        [[20.0, 0.0, 0.0], [0.0, 20.0, 0.0], [0.0, 0.0, 20.0]],
        [false; 3],
    )
    .unwrap()
}

#[test]
fn coincident_atoms_clash() {
    let s = box_of(&["C", "C"], vec![[5.0; 3], [5.0; 3]]);
    let plan = BuildPlan::new(vec![Instruction::MakeLattice { preset: "graphene".into(), lattice_constant: None, vacuum: None }]);
    let r = check_geometry(&s, &plan);
    assert!(r.codes().contains(&IssueCode::Clash));
    assert!(!r.passed);
}

#[test]
fn compressed_bond_triggers_both_thresholds() {
    // 0.9 Å < 0.75·1.52 = 1.14 Å (bond) and < 0.6·1.52 = 0.912 Å (clash)
    let plan = graphene_with_bond(0.9);
    let r = check_geometry(&execute_plan(&plan).unwrap(), &plan);
    assert!(r.codes().contains(&IssueCode::BondLength));
    assert!(r.codes().contains(&IssueCode::Clash));
    // just above the clash boundary only the bond warning remains
    let plan = graphene_with_bond(0.92);
    let r = check_geometry(&execute_plan(&plan).unwrap(), &plan);
    assert_eq!(r.codes().into_iter().collect::<Vec<_>>(), [IssueCode::BondLength]);
    assert!(r.passed);
}

#[test]
fn pristine_graphene_passes_cleanly() {
    let plan = graphene_4x4();
    let r = check_geometry(&execute_plan(&plan).unwrap(), &plan);
    assert!(r.passed);
    assert!(r.issues.is_empty(), "{:?}", r.issues);
}

#[test]
fn fault_suite_flags_exactly_expected_codes() {
    for case in fault_suite() {
        let r = check_geometry(&case.structure, &case.plan);
        assert_eq!(r.codes(), case.expected, "{}: {:?}", case.name, r.issues);
    }
}

#[test]
fn every_error_has_hint_and_its_fix_clears_the_code() {
    for case in fault_suite() {
        let r = check_geometry(&case.structure, &case.plan);
        for issue in r.errors() {
            assert!(!issue.hint.trim().is_empty(), "{}: empty hint", case.name);
            let fix = issue.fix.as_ref().unwrap_or_else(|| panic!("{}: no fix for {:?}", case.name, issue.code));
            let fixed_plan = case.plan.with_fix(fix);
            let rebuilt = execute_plan(&fixed_plan).unwrap();
            let after = check_geometry(&rebuilt, &fixed_plan);
            assert!(!after.codes().contains(&issue.code), "{}: {:?} survives {fix:?}: {:?}", case.name, issue.code, after.issues);
        }
    }
}

#[test]
fn semantic_check_only_adds_request_mismatch() {
    let plan = graphene_4x4();
    let s = execute_plan(&plan).unwrap();
    let quiet = ScriptedBackend::new("v").on(Purpose::ValidateSemantic, ".*", "```json\n{\"issues\": []}\n```");
    let loud = ScriptedBackend::new("v").on(
        Purpose::ValidateSemantic,
        ".*",
        "```json\n{\"issues\": [{\"message\": \"no vacancy\", \"hint\": \"append remove_atoms for one C\"}]}\n```",
    );
    let base = validate(&s, &plan, "a graphene sheet with a vacancy", None).unwrap();
    assert_eq!(validate(&s, &plan, "a graphene sheet with a vacancy", Some(&quiet)).unwrap(), base);
    let flagged = validate(&s, &plan, "a graphene sheet with a vacancy", Some(&loud)).unwrap();
    assert!(!flagged.passed);
    let extra: Vec<_> = flagged.issues.iter().filter(|i| !base.issues.contains(i)).collect();
    assert_eq!(extra.len(), 1);
    assert_eq!(extra[0].code, IssueCode::RequestMismatch);
    assert_eq!(extra[0].severity, Severity::Error);
}

#[test]
fn missing_vacuum_fix_appends_set_vacuum() {
    let case = fault_suite().into_iter().find(|c| c.name == "missing_vacuum").unwrap();
    let r = check_geometry(&case.structure, &case.plan);
    assert!(matches!(
        r.issues[0].fix,
        Some(PlanFix::Append { instruction: Instruction::SetVacuum { axis: 2, .. } })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lattice_translation_changes_no_issue(case_idx in 0usize..6, a in -2i32..3, b in -2i32..3, c in -2i32..3) {
        let case = &fault_suite()[case_idx];
        let s = &case.structure;
        let l = s.lattice;
        let mut shift = [0.0; 3];
        for k in 0..3 {
            let n = [a, b, c][k] as f64 * if s.pbc[k] { 1.0 } else { 0.0 };
            for d in 0..3 {
                shift[d] += n * l[k][d];
            }
        }
        let before = check_geometry(s, &case.plan).codes();
        let after = check_geometry(&s.translated(shift), &case.plan).codes();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn arbitrary_rigid_shift_of_periodic_slab_keeps_codes(dx in -10.0f64..10.0, dy in -10.0f64..10.0) {
        let plan = graphene_with_bond(1.0);
        let s = execute_plan(&plan).unwrap();
        let before = check_geometry(&s, &plan).codes();
        prop_assert_eq!(before, check_geometry(&s.translated([dx, dy, 0.0]), &plan).codes());
    }
}
