#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use labloop_analysis::ingest::{write_cube, write_curve, write_png16};
use labloop_analysis::synthetic::{disordered_scene, honeycomb_scene, unmix_scene, HoneycombSceneSpec};
use labloop_analysis::{Curve1D, ImageGrid};
use labloop_core::{ExperimentInput, InputKind};
use labloop_llm::{Backend, ReplayBackend, ScriptedBackend};
use labloop_workflow::literature::ReplayLiteratureClient;
use labloop_workflow::{
    is_edge, Engine, InstrumentCatalog, LiteratureClient, MockLiteratureClient, RecommendConfig, RunConfig, RunInput, RunKind,
    RunStore, Stage, WorkflowError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GUIDANCE: &str = "Consider the role of intervalley electron scattering and lattice corrugations.";
pub const GRAPHENE: &str = "a 4x4 graphene supercell with a single vacancy";

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn blessing() -> bool {
    std::env::var_os("LABLOOP_BLESS").is_some()
}

fn to_u16(img: &ImageGrid) -> Vec<u16> {
    let (lo, hi) = img.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let span = (hi - lo).max(1e-12);
    img.values.iter().map(|v| ((v - lo) / span * 65535.0).round() as u16).collect()
}

/// Synthetic stand-ins for the three experimental inputs, written to `dir`.
pub fn write_inputs(dir: &Path) -> BTreeMap<&'static str, PathBuf> {
    std::fs::create_dir_all(dir).unwrap();
    let mos2 = honeycomb_scene(&HoneycombSceneSpec { size: 384, ..Default::default() }).image;
    let rgo = disordered_scene(384, 11);
    let ptcdi = unmix_scene(48, 48, 120, 3, Some(30.0), 5).cube;
    let out = BTreeMap::from([
        ("mos2", dir.join("mos2_haadf.png")),
        ("rgo", dir.join("rgo_haadf.png")),
        ("ptcdi", dir.join("ptcdi_tepl.bin")),
    ]);
    write_png16(&out["mos2"], mos2.width, mos2.height, &to_u16(&mos2)).unwrap();
    write_png16(&out["rgo"], rgo.width, rgo.height, &to_u16(&rgo)).unwrap();
    write_cube(&out["ptcdi"], &ptcdi).unwrap();
    out
}

pub fn input_path(name: &str) -> PathBuf {
    fixtures().join("inputs").join(name)
}

pub fn mos2_input() -> RunInput {
    RunInput::Experiment(
        ExperimentInput::new(InputKind::Image2D, input_path("mos2_haadf.png").display().to_string())
            .with_meta("technique", "HAADF-STEM")
            .with_meta("material", "MoS2")
            .with_meta("pixel_size_nm", "0.02")
            .with_meta("notes", "monolayer on a holey carbon grid, 80 kV"),
    )
}

pub fn rgo_input() -> RunInput {
    RunInput::Experiment(
        ExperimentInput::new(InputKind::Image2D, input_path("rgo_haadf.png").display().to_string())
            .with_meta("technique", "HAADF-STEM")
            .with_meta("material", "rGO")
            .with_meta("pixel_size_nm", "0.02"),
    )
}

pub fn ptcdi_input() -> RunInput {
    RunInput::Experiment(
        ExperimentInput::new(InputKind::HyperCube, input_path("ptcdi_tepl.bin").display().to_string())
            .with_meta("technique", "TEPL")
            .with_meta("material", "PTCDI")
            .with_meta("step_size_nm", "20"),
    )
}

pub fn mos2_config() -> RunConfig {
    RunConfig::default()
}

pub fn rgo_config() -> RunConfig {
    RunConfig { pause_for_guidance: true, ..RunConfig::default() }
}

pub fn ptcdi_config() -> RunConfig {
    let catalog = InstrumentCatalog::from_json(&std::fs::read_to_string(fixtures().join("catalogs/tepl.json")).unwrap()).unwrap();
    RunConfig { recommend: RecommendConfig { experiments: true, simulations: false }, catalog: Some(catalog), ..RunConfig::default() }
}

pub fn scripted(name: &str) -> Arc<dyn Backend> {
    Arc::new(ScriptedBackend::from_file(&fixtures().join("scripts").join(format!("{name}.json"))).unwrap())
}

pub fn mock_literature(name: &str) -> Arc<dyn LiteratureClient> {
    Arc::new(MockLiteratureClient::from_file(&fixtures().join("literature").join(format!("{name}.json"))).unwrap())
}

pub fn replay(name: &str) -> (Arc<dyn Backend>, Arc<dyn LiteratureClient>) {
    let dir = fixtures().join("replay");
    (
        Arc::new(ReplayBackend::from_path(&dir.join(format!("{name}.jsonl"))).unwrap()),
        Arc::new(ReplayLiteratureClient::from_path(&dir.join(format!("{name}.literature.jsonl"))).unwrap()),
    )
}

pub fn engine(root: &Path, backend: Arc<dyn Backend>, literature: Arc<dyn LiteratureClient>) -> Engine {
    Engine::new(RunStore::open(root).unwrap(), backend, Some(literature))
}

/// Drive a run to its end, submitting `guidance` at the checkpoint.
pub fn run_to_end(e: &Engine, id: &str, guidance: Option<&str>) {
    e.advance_until_pause(id).unwrap();
    let run = e.resume(id).unwrap();
    if run.stage == Stage::AwaitingGuidance {
        match guidance {
            Some(g) => {
                e.submit_guidance(id, g, "expert").unwrap();
            }
            None => {
                e.skip_guidance(id).unwrap();
            }
        }
        e.advance_until_pause(id).unwrap();
    }
}

/// Record a scripted novelty run as replay fixtures plus a golden report.
pub fn bless_novelty(name: &str, input: RunInput, config: RunConfig, guidance: Option<&str>) {
    let dir = tempfile::tempdir().unwrap();
    let e = engine(dir.path(), scripted(&format!("{name}_novelty")), mock_literature(name));
    let id = e.start_run(RunKind::NoveltyAssessment, input, config).unwrap();
    run_to_end(&e, &id, guidance);
    let run_dir = e.store().run_dir(&id);
    let replay = fixtures().join("replay");
    std::fs::create_dir_all(&replay).unwrap();
    std::fs::copy(run_dir.join("transcripts/llm.jsonl"), replay.join(format!("{name}.jsonl"))).unwrap();
    std::fs::copy(run_dir.join("transcripts/literature.jsonl"), replay.join(format!("{name}.literature.jsonl"))).unwrap();
    let golden = fixtures().join("golden/reports");
    std::fs::create_dir_all(&golden).unwrap();
    std::fs::write(golden.join(format!("{name}.doc")), e.report(&id).unwrap()).unwrap();
}

// ---- state-machine fuzzing ----

/// A temporary directory, on tmpfs when available: the fuzz writes many
/// small files and would otherwise be bound by fsync.
pub fn scratch() -> tempfile::TempDir {
    let shm = Path::new("/dev/shm");
    if shm.is_dir() {
        if let Ok(d) = tempfile::tempdir_in(shm) {
            return d;
        }
    }
    tempfile::tempdir().unwrap()
}

pub fn write_fuzz_curve(dir: &Path) -> PathBuf {
    let x: Vec<f64> = (0..121).map(|i| 500.0 + i as f64).collect();
    let y: Vec<f64> = x.iter().map(|v| 0.2 + 1e-4 * v + 1.0 / (1.0 + ((v - 560.0) / 8.0).powi(2)) + 0.01 * (v * 1.7).sin()).collect();
    let p = dir.join("peak.csv");
    write_curve(&p, &Curve1D::new(x, y, None, "nm", "counts").unwrap()).unwrap();
    p
}

const FAULTY: &str = "a faulty graphene supercell that never validates";

/// One scripted backend serving the structure fixtures (a request that needs
/// one refinement and one that never validates) and a tiny novelty run.
fn fuzz_backend() -> Arc<dyn Backend> {
    let load = |name: &str| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(fixtures().join("scripts").join(name)).unwrap()).unwrap()
    };
    let mut rules = Vec::new();
    let mut faulty = load("graphene_always_faulty.json")["rules"].as_array().unwrap().clone();
    for r in &mut faulty {
        if r["purpose"] == "plan" {
            r["pattern"] = "never validates".into();
        }
    }
    rules.extend(faulty.into_iter().filter(|r| r["purpose"] == "plan"));
    rules.extend(load("graphene_refine.json")["rules"].as_array().unwrap().iter().cloned());
    let fence = |s: &str| format!("```json\n{s}\n```");
    for (purpose, text) in [
        ("summarize", "The peak fit converged with a small reduced chi-square.".to_string()),
        ("claims", fence(r#"{"claims": [{"statement": "The emission peak has a Lorentzian line shape", "evidence": ["fit.png"], "keywords": ["peak"]}]}"#)),
        ("guidance", fence(r#"{"claims": [{"statement": "The background slope reflects a second weak emitter", "evidence": ["fit.json"], "keywords": ["background"]}]}"#)),
        ("categorize", fence(r#"{"category": "partially_novel", "justification": "Related but different."}"#)),
        ("recommend", fence(r#"{"request": "a 4x4 graphene supercell with a single vacancy", "rationale": "test"}"#)),
    ] {
        rules.push(serde_json::json!({"purpose": purpose, "responses": [text]}));
    }
    let doc = serde_json::json!({"name": "fuzz", "rules": rules});
    Arc::new(ScriptedBackend::from_json(&doc.to_string()).unwrap())
}

fn fuzz_literature() -> Arc<dyn LiteratureClient> {
    Arc::new(MockLiteratureClient::new("fuzz").fallback("Related line shapes have been reported."))
}

#[derive(Debug, Clone, Copy)]
enum Command {
    Advance,
    Guidance,
    EmptyGuidance,
    Skip,
    Resume,
    Restart,
}

fn check_transition(kind: RunKind, before: Stage, after: Stage, what: &str) -> Result<(), String> {
    if before != after && !is_edge(kind, before, after) {
        return Err(format!("{what}: illegal transition {before} -> {after} for {kind}"));
    }
    if after == Stage::Failed {
        return Err(format!("{what}: run failed from {before}"));
    }
    Ok(())
}

/// Random interleavings of advance / guidance / skip / resume / engine
/// restarts. Returns the number of commands executed, or the first
/// violation: an edge outside the declared set, a non-monotone or rewritten
/// event log, or an error that does not match the run's state.
pub fn fuzz_state_machine(sequences: usize, seed: u64) -> Result<usize, String> {
    let dir = scratch();
    let curve = write_fuzz_curve(dir.path());
    let backend = fuzz_backend();
    let lit = fuzz_literature();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = engine(&dir.path().join("store"), backend.clone(), lit.clone());
    let mut executed = 0;
    for n in 0..sequences {
        let (kind, input) = match rng.random_range(0..3) {
            0 => (
                RunKind::NoveltyAssessment,
                RunInput::Experiment(ExperimentInput::new(InputKind::Curve1D, curve.display().to_string()).with_meta("material", "a dye film")),
            ),
            1 => (RunKind::StructureSimulation, RunInput::Request { text: GRAPHENE.into() }),
            _ => (RunKind::StructureSimulation, RunInput::Request { text: FAULTY.into() }),
        };
        let config = RunConfig {
            pause_for_guidance: rng.random_bool(0.5),
            recommend: RecommendConfig { simulations: rng.random_bool(0.5), experiments: false },
            max_attempts: rng.random_range(1..=3),
            ..RunConfig::default()
        };
        let id = e.start_run(kind, input, config).map_err(|err| format!("sequence {n}: start failed: {err}"))?;
        let mut seen = e.resume(&id).map_err(|err| err.to_string())?;
        let len = rng.random_range(1..=16);
        for step in 0..len {
            let cmd = match rng.random_range(0..10) {
                0..=4 => Command::Advance,
                5 => Command::Guidance,
                6 => Command::EmptyGuidance,
                7 => Command::Skip,
                8 => Command::Resume,
                _ => Command::Restart,
            };
            let what = format!("sequence {n} step {step} {cmd:?}");
            let before = seen.clone();
            let result = match cmd {
                Command::Advance => e.advance(&id).map(|_| ()),
                Command::Guidance => e.submit_guidance(&id, "Check the background.", "fuzz").map(|_| ()),
                Command::EmptyGuidance => e.submit_guidance(&id, "  ", "fuzz").map(|_| ()),
                Command::Skip => e.skip_guidance(&id).map(|_| ()),
                Command::Resume => e.resume(&id).map(|_| ()),
                Command::Restart => {
                    e = engine(&dir.path().join("store"), backend.clone(), lit.clone());
                    Ok(())
                }
            };
            executed += 1;
            let after = e.resume(&id).map_err(|err| format!("{what}: reload failed: {err}"))?;
            // the error, if any, must be the one the prior state demands
            match (&result, cmd) {
                (Err(WorkflowError::TerminalRun { .. }), Command::Advance) if before.is_terminal() => {}
                (Err(WorkflowError::AwaitingGuidance(_)), Command::Advance) if before.awaiting_guidance() => {}
                (Err(WorkflowError::WrongStage { .. }), Command::Guidance | Command::EmptyGuidance | Command::Skip)
                    if before.stage != Stage::AwaitingGuidance => {}
                (Err(WorkflowError::EmptyGuidance), Command::EmptyGuidance) if before.stage == Stage::AwaitingGuidance => {}
                (Err(err), _) => return Err(format!("{what}: unexpected error at {}: {err}", before.stage)),
                (Ok(()), Command::Advance) if before.is_terminal() || before.awaiting_guidance() => {
                    return Err(format!("{what}: advance accepted at {}", before.stage))
                }
                (Ok(()), Command::Guidance | Command::Skip) if before.stage != Stage::AwaitingGuidance => {
                    return Err(format!("{what}: accepted at {}", before.stage))
                }
                (Ok(()), _) => {}
            }
            if result.is_err() && after != before {
                return Err(format!("{what}: rejected command changed the run"));
            }
            check_transition(kind, before.stage, after.stage, &what)?;
            if after.events.len() < before.events.len() || after.events[..before.events.len()] != before.events[..] {
                return Err(format!("{what}: event log was rewritten"));
            }
            for w in after.events.windows(2) {
                if w[1].seq != w[0].seq + 1 || w[1].timestamp <= w[0].timestamp {
                    return Err(format!("{what}: event timestamps not monotone at seq {}", w[1].seq));
                }
            }
            seen = after;
        }
    }
    Ok(executed)
}
