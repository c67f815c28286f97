#[path = "../../workflow/tests/common/mod.rs"]
mod common;

use std::path::Path;

use common::*;
use labloop_api::cli::{run, EXIT_BACKEND, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION};
use labloop_api::view::ApiRunView;
use labloop_workflow::Stage;

fn labloop(args: &[&str]) -> i32 {
    run(std::iter::once("labloop").chain(args.iter().copied()))
}

fn path(p: &Path) -> String {
    p.display().to_string()
}

fn fixture(rel: &str) -> String {
    path(&fixtures().join(rel))
}

fn view(out: &Path) -> ApiRunView {
    serde_json::from_slice(&std::fs::read(out.join("run.json")).unwrap()).unwrap()
}

#[test]
fn simulate_with_replay_writes_dft_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let backend = format!("replay:{}", fixture("replay/graphene_vacancy.jsonl"));
    let code = labloop(&["--backend", &backend, "simulate", "--request", GRAPHENE, "--objective", "DefectRelaxation", "--out", &path(&out)]);
    assert_eq!(code, EXIT_OK);
    for f in ["POSCAR", "INCAR", "KPOINTS", "validation_trace.json", "report.doc"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert_eq!(view(&out).stage, Stage::Completed);
}

#[test]
fn unresolved_structure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let backend = format!("scripted:{}", fixture("scripts/graphene_always_faulty.json"));
    let code = labloop(&["--backend", &backend, "simulate", "--request", GRAPHENE, "--max-attempts", "2", "--out", &path(&out)]);
    assert_eq!(code, EXIT_VALIDATION);
    assert_eq!(view(&out).stage, Stage::Unresolved);
    assert!(!out.join("report.doc").exists());
    assert!(!out.join("POSCAR").exists());
}

#[test]
fn analyze_unmix_writes_components() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let code = labloop(&["analyze", "unmix", &fixture("inputs/ptcdi_tepl.bin"), "--k", "3", "--out", &path(&out)]);
    assert_eq!(code, EXIT_OK);
    for f in ["endmembers.png", "abundance_1.png", "abundance_2.png", "abundance_3.png", "unmix_trace.json", "findings.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert!(!out.join("abundance_4.png").exists());
    let findings = std::fs::read_to_string(out.join("findings.json")).unwrap();
    assert!(findings.contains("\"reconstruction_error\""));
}

#[test]
fn novelty_replay_reproduces_the_golden_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let backend = format!("replay:{}", fixture("replay/mos2.jsonl"));
    let literature = format!("replay:{}", fixture("replay/mos2.literature.jsonl"));
    let meta = r#"{"technique": "HAADF-STEM", "material": "MoS2", "pixel_size_nm": "0.02", "notes": "monolayer on a holey carbon grid, 80 kV"}"#;
    let code = labloop(&[
        "--backend", &backend, "--literature", &literature, "novelty", "--input", &fixture("inputs/mos2_haadf.png"), "--meta", meta,
        "--out", &path(&out),
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(std::fs::read(out.join("report.doc")).unwrap() == std::fs::read(fixtures().join("golden/reports/mos2.doc")).unwrap());
    assert!(out.join("environment_map.png").is_file());
}

#[test]
fn paused_novelty_continues_with_guide() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let backend = format!("replay:{}", fixture("replay/rgo.jsonl"));
    let literature = format!("replay:{}", fixture("replay/rgo.literature.jsonl"));
    let meta = r#"{"technique": "HAADF-STEM", "material": "rGO", "pixel_size_nm": 0.02}"#;
    let code = labloop(&[
        "--backend", &backend, "--literature", &literature, "novelty", "--input", &fixture("inputs/rgo_haadf.png"), "--meta", meta,
        "--pause-for-guidance", "--recommend", "simulations", "--out", &path(&out),
    ]);
    assert_eq!(code, EXIT_OK);
    let v = view(&out);
    assert!(v.flags.awaiting_guidance);
    assert!(!out.join("report.doc").exists());

    let id = v.run_id;
    let code = labloop(&["--backend", &backend, "--literature", &literature, "guide", "--out", &path(&out), "--run", &id, "--text", "  "]);
    assert_eq!(code, EXIT_VALIDATION);
    let code = labloop(&["--backend", &backend, "--literature", &literature, "guide", "--out", &path(&out), "--run", &id, "--text", GUIDANCE, "--author", "expert"]);
    assert_eq!(code, EXIT_OK);
    assert!(std::fs::read(out.join("report.doc")).unwrap() == std::fs::read(fixtures().join("golden/reports/rgo.doc")).unwrap());

    // the run is over: more guidance is a validation failure, resume is a no-op
    let code = labloop(&["--backend", &backend, "guide", "--out", &path(&out), "--run", &id, "--skip"]);
    assert_eq!(code, EXIT_VALIDATION);
    assert_eq!(labloop(&["--backend", &backend, "resume", "--out", &path(&out), "--run", &id]), EXIT_OK);
}

#[test]
fn replay_miss_is_a_backend_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let backend = format!("replay:{}", fixture("replay/graphene_vacancy.jsonl"));
    let literature = format!("mock:{}", fixture("literature/mos2.json"));
    let code = labloop(&[
        "--backend", &backend, "--literature", &literature, "novelty", "--input", &fixture("inputs/mos2_haadf.png"), "--out", &path(&out),
    ]);
    assert_eq!(code, EXIT_BACKEND);
    assert_eq!(view(&out).stage, Stage::Failed);
}

#[test]
fn usage_errors_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(&dir.path().join("out"));
    let scripted = format!("scripted:{}", fixture("scripts/graphene_vacancy.json"));
    let mock = format!("mock:{}", fixture("literature/mos2.json"));
    let input = fixture("inputs/mos2_haadf.png");
    assert_eq!(labloop(&["simulate", "--request", GRAPHENE, "--out", &out]), EXIT_USAGE, "missing backend");
    assert_eq!(labloop(&["--backend", "nope:x", "simulate", "--request", GRAPHENE, "--out", &out]), EXIT_USAGE);
    assert_eq!(labloop(&["--backend", &scripted, "simulate", "--request", GRAPHENE, "--objective", "Melting", "--out", &out]), EXIT_USAGE);
    assert_eq!(labloop(&["--backend", &scripted, "simulate", "--bogus-flag", "--out", &out]), EXIT_USAGE);
    assert_eq!(labloop(&["--backend", &scripted, "novelty", "--input", &input, "--out", &out]), EXIT_USAGE, "missing literature");
    assert_eq!(
        labloop(&["--backend", &scripted, "--literature", &mock, "novelty", "--input", &input, "--meta", "[1]", "--out", &out]),
        EXIT_USAGE
    );
    assert_eq!(
        labloop(&["--backend", &scripted, "--literature", &mock, "novelty", "--input", &input, "--recommend", "lunch", "--out", &out]),
        EXIT_USAGE
    );
    assert_eq!(labloop(&["analyze", "unmix", &fixture("catalogs/tepl.json"), "--out", &out]), EXIT_USAGE, "uninferrable kind");
    assert_eq!(labloop(&["--help"]), EXIT_OK);
}

#[test]
fn unknown_subcommand_prints_usage_and_exits_64() {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_labloop")).arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("frobnicate"), "{stderr}");
    assert!(stderr.to_lowercase().contains("usage"), "{stderr}");
}

#[test]
fn analyze_rejects_a_tool_that_does_not_fit_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let code = labloop(&["analyze", "atomistic", &fixture("inputs/ptcdi_tepl.bin"), "--out", &path(dir.path())]);
    assert_eq!(code, EXIT_VALIDATION);
}
