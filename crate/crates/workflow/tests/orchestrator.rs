mod common;

use std::sync::Arc;

use common::*;
use labloop_core::{canonical_parse, ClaimOrigin, NoveltyCategory, RecommendationKind, ReportDocument, Target};
use labloop_workflow::{next_stage, Engine, RunConfig, RunInput, RunKind, RunStore, Stage, WorkflowError};

fn report_of(e: &Engine, id: &str) -> ReportDocument {
    canonical_parse(&e.report(id).unwrap()).unwrap()
}

/// Regenerates input files, replay transcripts and golden reports.
/// Run with `LABLOOP_BLESS=1 cargo test -p labloop-workflow --test orchestrator bless`.
#[test]
fn bless_fixtures() {
    if !blessing() {
        return;
    }
    write_inputs(&fixtures().join("inputs"));
    bless_novelty("mos2", mos2_input(), mos2_config(), None);
    bless_novelty("rgo", rgo_input(), rgo_config(), Some(GUIDANCE));
}

#[test]
fn inputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for (name, path) in write_inputs(dir.path()) {
        let stored = input_path(path.file_name().unwrap().to_str().unwrap());
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&stored).unwrap(), "{name} input drifted; re-bless");
    }
}

#[test]
fn mos2_scripted_run_finds_the_line_defect() {
    let dir = tempfile::tempdir().unwrap();
    let e = engine(dir.path(), scripted("mos2_novelty"), mock_literature("mos2"));
    let id = e.start_run(RunKind::NoveltyAssessment, mos2_input(), mos2_config()).unwrap();
    run_to_end(&e, &id, None);
    let run = e.resume(&id).unwrap();
    assert_eq!(run.stage, Stage::Reported);
    assert_eq!(run.novelty.tool.as_ref().unwrap().tool.name(), "atomistic");

    let r = report_of(&e, &id);
    assert_eq!(r.claims.len(), 2);
    assert!(r.claims[0].statement.contains("line defects"));
    assert!(r.claims.iter().all(|c| c.origin == ClaimOrigin::Automated && c.has_evidence_grounding));
    assert_eq!(r.assessments[0].category, NoveltyCategory::Scooped);
    assert_eq!(r.assessments[0].score, 2);
    assert_eq!(r.assessments[1].category, NoveltyCategory::TextbookKnowledge);
    for a in &r.assessments {
        assert!(!a.citations.is_empty());
    }
    for plot in ["intensity_histogram.png", "nn_distance_histogram.png", "environment_map.png"] {
        assert!(r.artifacts.iter().any(|a| a.name == plot), "missing {plot}");
        assert!(e.store().read_artifact(&id, plot).unwrap().starts_with(b"\x89PNG"));
    }
    assert_eq!(r.recommendations.len(), 1);
    let rec = &r.recommendations[0];
    assert_eq!(rec.kind, RecommendationKind::Simulation);
    assert_eq!(rec.claim_ids, vec![r.claims[0].id.clone()]);
    assert!(matches!(&rec.target, Some(Target::StructureRequest { request, .. }) if request.contains("line of 4 sulfur vacancies")));
}

fn replay_matches_golden(name: &str, input: RunInput, config: RunConfig, guidance: Option<&str>) {
    let golden = std::fs::read(fixtures().join("golden/reports").join(format!("{name}.doc"))).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (backend, lit) = replay(name);
    let e = engine(dir.path(), backend, lit);
    let id = e.start_run(RunKind::NoveltyAssessment, input, config).unwrap();
    run_to_end(&e, &id, guidance);
    assert!(e.report(&id).unwrap() == golden, "{name} replay differs from the golden report");
}

#[test]
fn mos2_replay_matches_golden_report() {
    replay_matches_golden("mos2", mos2_input(), mos2_config(), None);
}

#[test]
fn rgo_replay_matches_golden_report() {
    replay_matches_golden("rgo", rgo_input(), rgo_config(), Some(GUIDANCE));
}

#[test]
fn rgo_pauses_and_guidance_adds_a_claim() {
    let dir = tempfile::tempdir().unwrap();
    let e = engine(dir.path(), scripted("rgo_novelty"), mock_literature("rgo"));
    let id = e.start_run(RunKind::NoveltyAssessment, rgo_input(), rgo_config()).unwrap();
    e.advance_until_pause(&id).unwrap();
    let run = e.resume(&id).unwrap();
    assert_eq!(run.stage, Stage::AwaitingGuidance);
    assert!(run.awaiting_guidance());
    assert_eq!(run.novelty.tool.as_ref().unwrap().tool.name(), "spatiofreq");
    assert!(matches!(e.advance(&id), Err(WorkflowError::AwaitingGuidance(_))));
    assert!(matches!(e.submit_guidance(&id, "   ", "expert"), Err(WorkflowError::EmptyGuidance)));

    e.submit_guidance(&id, GUIDANCE, "expert").unwrap();
    e.advance_until_pause(&id).unwrap();
    let guided = report_of(&e, &id);
    assert_eq!(guided.guidance.len(), 1);
    let wrinkle = guided.claims.iter().find(|c| c.origin == ClaimOrigin::HumanGuided).expect("guided claim");
    assert!(wrinkle.statement.contains("wrinkles"));
    let titles: Vec<&str> = guided.recommendations.iter().map(|r| r.title.as_str()).collect();
    assert!(titles.iter().any(|t| t.contains("epoxide")), "{titles:?}");
    assert!(titles.iter().any(|t| t.contains("wrinkled")), "{titles:?}");

    // the same run without guidance: automated claims are unchanged, nothing is lost
    let dir2 = tempfile::tempdir().unwrap();
    let e2 = engine(dir2.path(), scripted("rgo_novelty"), mock_literature("rgo"));
    let id2 = e2.start_run(RunKind::NoveltyAssessment, rgo_input(), rgo_config()).unwrap();
    run_to_end(&e2, &id2, None);
    let plain = report_of(&e2, &id2);
    assert!(plain.claims.iter().all(|c| c.origin == ClaimOrigin::Automated));
    assert!(plain.claims.len() < guided.claims.len());
    for c in &plain.claims {
        assert!(guided.claims.iter().any(|g| g.statement == c.statement));
    }
    assert!(plain.recommendations.len() <= guided.recommendations.len());
}

#[test]
fn resuming_at_every_boundary_gives_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (backend, lit) = replay("rgo");
    let e = engine(dir.path(), backend.clone(), lit.clone());
    let id = e.start_run(RunKind::NoveltyAssessment, rgo_input(), rgo_config()).unwrap();
    run_to_end(&e, &id, Some(GUIDANCE));
    let reference = e.report(&id).unwrap();

    let stages = {
        let run = e.resume(&id).unwrap();
        run.events.len()
    };
    assert!(stages > 5);
    // stop after k steps, drop the engine, start a fresh one on the same store
    for k in 1..=9 {
        let dir = tempfile::tempdir().unwrap();
        let first = engine(dir.path(), backend.clone(), lit.clone());
        let id = first.start_run(RunKind::NoveltyAssessment, rgo_input(), rgo_config()).unwrap();
        for _ in 0..k {
            let run = first.resume(&id).unwrap();
            if run.is_terminal() {
                break;
            }
            if run.awaiting_guidance() {
                first.submit_guidance(&id, GUIDANCE, "expert").unwrap();
            } else {
                first.advance(&id).unwrap();
            }
        }
        drop(first);
        let second = engine(dir.path(), backend.clone(), lit.clone());
        run_to_end(&second, &id, Some(GUIDANCE));
        assert!(second.report(&id).unwrap() == reference, "report differs after resuming at step {k}");
    }
}

#[test]
fn guards_reject_misuse() {
    let dir = tempfile::tempdir().unwrap();
    let e = engine(dir.path(), scripted("mos2_novelty"), mock_literature("mos2"));
    assert!(matches!(e.resume("nope"), Err(WorkflowError::NotFound(_))));
    assert!(matches!(e.advance("../etc"), Err(WorkflowError::NotFound(_))));

    let id = e.start_run(RunKind::NoveltyAssessment, mos2_input(), mos2_config()).unwrap();
    assert!(matches!(e.report(&id), Err(WorkflowError::NotFound(_))));
    assert!(matches!(e.submit_guidance(&id, "x", "y"), Err(WorkflowError::WrongStage { .. })));
    assert!(matches!(e.skip_guidance(&id), Err(WorkflowError::WrongStage { .. })));
    run_to_end(&e, &id, None);
    assert!(matches!(e.advance(&id), Err(WorkflowError::TerminalRun { .. })));

    let missing = RunInput::Experiment(labloop_core::ExperimentInput::new(labloop_core::InputKind::Image2D, "/no/such/file.png"));
    assert!(matches!(e.start_run(RunKind::NoveltyAssessment, missing, RunConfig::default()), Err(WorkflowError::InvalidInput(_))));
    let wrong = RunInput::Request { text: GRAPHENE.into() };
    assert!(matches!(e.start_run(RunKind::NoveltyAssessment, wrong, RunConfig::default()), Err(WorkflowError::InvalidInput(_))));
}

#[test]
fn identical_starts_get_distinct_ids() {
    let dir = tempfile::tempdir().unwrap();
    let e = engine(dir.path(), scripted("mos2_novelty"), mock_literature("mos2"));
    let a = e.start_run(RunKind::NoveltyAssessment, mos2_input(), mos2_config()).unwrap();
    let b = e.start_run(RunKind::NoveltyAssessment, mos2_input(), mos2_config()).unwrap();
    assert_ne!(a, b);
    assert_eq!(e.store().list().unwrap().len(), 2);
}

#[test]
fn graphene_structure_run_completes_with_dft_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let e = engine(dir.path(), scripted("graphene_refine"), mock_literature("mos2"));
    let id = e.start_run(RunKind::StructureSimulation, RunInput::Request { text: GRAPHENE.into() }, RunConfig::default()).unwrap();
    e.advance_until_pause(&id).unwrap();
    let run = e.resume(&id).unwrap();
    assert_eq!(run.stage, Stage::Completed);
    let visited: Vec<Stage> = run.events.iter().map(|ev| ev.stage).collect();
    assert!(visited.contains(&Stage::Refining));
    for f in ["POSCAR", "INCAR", "KPOINTS"] {
        let a = run.artifact(f).unwrap_or_else(|| panic!("missing {f}"));
        assert_eq!(a.media_type, "text/plain");
    }
    let r = report_of(&e, &id);
    let sim = r.simulation.unwrap();
    assert!(sim.resolved);
    assert_eq!(sim.atom_count, 31);
    assert_eq!(sim.attempts.len(), 2);
}

#[test]
fn always_faulty_plan_ends_unresolved() {
    let dir = tempfile::tempdir().unwrap();
    let e = engine(dir.path(), scripted("graphene_always_faulty"), mock_literature("mos2"));
    let config = RunConfig { max_attempts: 3, ..RunConfig::default() };
    let id = e.start_run(RunKind::StructureSimulation, RunInput::Request { text: GRAPHENE.into() }, config).unwrap();
    e.advance_until_pause(&id).unwrap();
    let run = e.resume(&id).unwrap();
    assert_eq!(run.stage, Stage::Unresolved);
    assert_eq!(run.simulation.attempts.len(), 3);
    assert!(run.artifact("POSCAR").is_none());
    assert!(matches!(e.report(&id), Err(WorkflowError::NotFound(_))));
}

#[test]
fn ptcdi_recommendations_carry_catalog_warnings() {
    let dir = tempfile::tempdir().unwrap();
    let e = engine(dir.path(), scripted("ptcdi_tepl"), mock_literature("ptcdi"));
    let id = e.start_run(RunKind::NoveltyAssessment, ptcdi_input(), ptcdi_config()).unwrap();
    run_to_end(&e, &id, None);
    let r = report_of(&e, &id);
    let experiments: Vec<_> = r.recommendations.iter().filter(|r| r.kind == RecommendationKind::NextExperiment).collect();
    assert_eq!(experiments.len(), 2);
    let fine = experiments.iter().find(|r| matches!(&r.target, Some(Target::Locus { step_size, .. }) if *step_size == 5.0)).unwrap();
    assert!(!fine.warnings.is_empty());
    let coarse = experiments.iter().find(|r| matches!(&r.target, Some(Target::Locus { step_size, .. }) if *step_size == 20.0)).unwrap();
    assert!(coarse.warnings.is_empty(), "{:?}", coarse.warnings);
    assert!(r.recommendations.iter().all(|r| r.kind != RecommendationKind::Simulation));
}

#[test]
fn tampered_artifact_is_reported_as_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    let e = engine(dir.path(), scripted("mos2_novelty"), mock_literature("mos2"));
    let id = e.start_run(RunKind::NoveltyAssessment, mos2_input(), mos2_config()).unwrap();
    for _ in 0..2 {
        e.advance(&id).unwrap();
    }
    let path = e.store().artifact_path(&id, "environment_map.png");
    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0xff;
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(e.resume(&id), Err(WorkflowError::CorruptState { .. })));
    assert!(matches!(e.advance(&id), Err(WorkflowError::CorruptState { .. })));
}

#[test]
fn missing_literature_client_fails_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let e = Engine::new(RunStore::open(dir.path()).unwrap(), scripted("mos2_novelty"), None);
    let id = e.start_run(RunKind::NoveltyAssessment, mos2_input(), mos2_config()).unwrap();
    assert!(e.advance_until_pause(&id).is_err());
    let run = e.resume(&id).unwrap();
    assert_eq!(run.stage, Stage::Failed);
    assert!(run.failure.as_deref().unwrap().starts_with("literature"));
    assert!(matches!(e.advance(&id), Err(WorkflowError::TerminalRun { .. })));
}

#[test]
fn next_stage_follows_declared_edges() {
    let dir = tempfile::tempdir().unwrap();
    let e = engine(dir.path(), scripted("mos2_novelty"), mock_literature("mos2"));
    let id = e.start_run(RunKind::NoveltyAssessment, mos2_input(), mos2_config()).unwrap();
    loop {
        let run = e.resume(&id).unwrap();
        if run.is_terminal() {
            break;
        }
        let next = next_stage(&run);
        assert!(labloop_workflow::is_edge(run.kind, run.stage, next));
        e.advance(&id).unwrap();
        assert_eq!(e.resume(&id).unwrap().stage, next);
    }
}

#[test]
fn concurrent_advances_serialize() {
    let dir = tempfile::tempdir().unwrap();
    let e = Arc::new(engine(dir.path(), scripted("graphene_vacancy"), mock_literature("mos2")));
    let id = e.start_run(RunKind::StructureSimulation, RunInput::Request { text: GRAPHENE.into() }, RunConfig::default()).unwrap();
    std::thread::scope(|s| {
        for _ in 0..4 {
            s.spawn(|| {
                let _ = e.advance_until_pause(&id);
            });
        }
    });
    let run = e.resume(&id).unwrap();
    assert_eq!(run.stage, Stage::Completed);
    for w in run.events.windows(2) {
        assert_eq!(w[1].seq, w[0].seq + 1);
    }
}

#[test]
fn state_machine_fuzz() {
    let executed = fuzz_state_machine(60, 7).unwrap_or_else(|e| panic!("{e}"));
    assert!(executed > 60);
}
