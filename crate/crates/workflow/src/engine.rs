//! The workflow engine. Each `advance` executes exactly one stage against a
//! fresh copy of the persisted state and commits before returning, so a run
//! can be interrupted between any two stages and resumed from storage.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};

use labloop_analysis::ingest::sidecar_path;
use labloop_atomistic::{
    emit_incar, emit_kpoints, emit_poscar, execute_plan, plan_from_request, refine_plan, render_views, select_parameters,
    validate, ParameterSource, StructError,
};
use labloop_core::{
    canonical_serialize, content_id, digest_hex, validate_report, ArtifactRef, AttemptSummary, Guidance, InputKind,
    InputSummary, Provenance, ReportDocument, SimulationSection,
};
use labloop_llm::{template_hashes, Backend, RecordingBackend};

use crate::claims::{claim_to_question, generate_claims, integrate_guidance, summarize_analysis, ClaimContext};
use crate::error::{Result, WorkflowError};
use crate::literature::{query_literature, question_hash, LiteratureClient, LiteratureReport, RecordingLiteratureClient};
use crate::novelty::{assessment, categorize_report, LiteratureParameterSource};
use crate::recommend::{recommend_experiments, recommend_simulations, ExperimentContext};
use crate::run::{is_edge, AttemptRecord, Event, RunConfig, RunInput, RunKind, Stage, StoredArtifact, WorkflowRun};
use crate::store::RunStore;
use crate::tools::{load_input, run_tool, select_tool, LoadedInput};

type Recorder<'a> = RecordingBackend<&'a dyn Backend>;
type LitRecorder<'a> = RecordingLiteratureClient<&'a dyn LiteratureClient>;

pub struct Engine {
    store: RunStore,
    backend: Arc<dyn Backend>,
    literature: Option<Arc<dyn LiteratureClient>>,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    creating: Mutex<()>,
}

/// What a stage did, for the event log.
struct Outcome {
    event: String,
    artifacts: Vec<String>,
}

impl Outcome {
    fn new(event: impl Into<String>) -> Self {
        Self { event: event.into(), artifacts: Vec::new() }
    }

    fn with(mut self, artifacts: Vec<String>) -> Self {
        self.artifacts = artifacts;
        self
    }
}

fn media_type_for(name: &str) -> &'static str {
    match Path::new(name).extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("json") => "application/json",
        Some("csv" | "txt") => "text/plain",
        _ => "application/octet-stream",
    }
}

impl Engine {
    pub fn new(store: RunStore, backend: Arc<dyn Backend>, literature: Option<Arc<dyn LiteratureClient>>) -> Self {
        Self { store, backend, literature, locks: Mutex::new(HashMap::new()), creating: Mutex::new(()) }
    }

    pub fn store(&self) -> &RunStore {
        &self.store
    }

    pub fn backend(&self) -> &dyn Backend {
        &*self.backend
    }

    fn lock(&self, run_id: &str) -> Arc<Mutex<()>> {
        let mut map = self.locks.lock().unwrap_or_else(|e| e.into_inner());
        map.entry(run_id.to_string()).or_default().clone()
    }

    /// Validate and persist a new run at `Created`. The experimental file
    /// (and its sidecar) is copied into the run so it is self-contained.
    pub fn start_run(&self, kind: RunKind, input: RunInput, config: RunConfig) -> Result<String> {
        if let Some(c) = &config.catalog {
            c.check()?;
        }
        let (seed_input, source) = match (&kind, &input) {
            (RunKind::NoveltyAssessment, RunInput::Experiment(e)) => {
                let path = Path::new(&e.data_ref);
                let bytes = fs::read(path).map_err(|err| WorkflowError::InvalidInput(format!("{}: {err}", e.data_ref)))?;
                load_input(e.kind, path).map_err(|err| WorkflowError::InvalidInput(err.to_string()))?;
                let mut seeded = e.clone();
                seeded.data_ref = digest_hex(&bytes);
                (RunInput::Experiment(seeded), Some((path.to_path_buf(), bytes)))
            }
            (RunKind::StructureSimulation, RunInput::Request { text }) => {
                if text.trim().is_empty() {
                    return Err(WorkflowError::InvalidInput("empty structure request".into()));
                }
                (input.clone(), None)
            }
            (k, _) => return Err(WorkflowError::InvalidInput(format!("input does not match run kind {k}"))),
        };
        let config_hash = digest_hex(&canonical_serialize(&config)?);
        let seed = digest_hex(&canonical_serialize(&(kind, &seed_input, &config_hash))?);

        let _g = self.creating.lock().unwrap_or_else(|e| e.into_inner());
        let run_id = (0..).map(|k| content_id(&seed, "run", k)).find(|id| !self.store.run_dir(id).exists()).expect("unbounded");

        let mut artifacts = Vec::new();
        let mut input = input;
        if let (RunInput::Experiment(e), Some((path, bytes))) = (&mut input, source) {
            let ext = path.extension().and_then(|x| x.to_str()).unwrap_or("bin").to_ascii_lowercase();
            let name = format!("input.{ext}");
            artifacts.push(self.store.write_artifact(&run_id, &name, media_type_for(&name), &bytes)?);
            if e.kind != InputKind::Image2D || ext != "png" {
                let side = sidecar_path(&path);
                if let Ok(sb) = fs::read(&side) {
                    let side_name = format!("{name}.json");
                    artifacts.push(self.store.write_artifact(&run_id, &side_name, "application/json", &sb)?);
                }
            }
            e.data_ref = name;
        }
        let mut run = WorkflowRun {
            run_id: run_id.clone(),
            kind,
            stage: Stage::Created,
            failure: None,
            guidance_skipped: false,
            input,
            config,
            config_hash,
            events: Vec::new(),
            guidance: Vec::new(),
            artifacts,
            backends: Default::default(),
            literature_clients: Default::default(),
            templates: Default::default(),
            caveats: Vec::new(),
            novelty: Default::default(),
            simulation: Default::default(),
        };
        let names = run.artifacts.iter().map(|a| a.name.clone()).collect();
        run.push_event(Stage::Created, format!("{kind} run created"), names);
        self.store.save(&run)?;
        tracing::info!(run = %run_id, %kind, "run created");
        Ok(run_id)
    }

    /// Reconstruct a run from storage.
    pub fn resume(&self, run_id: &str) -> Result<WorkflowRun> {
        self.store.load(run_id)
    }

    /// Execute the next stage and persist. Stage failures mark the run
    /// `Failed` and are returned.
    pub fn advance(&self, run_id: &str) -> Result<Vec<Event>> {
        let lock = self.lock(run_id);
        let _g = lock.lock().unwrap_or_else(|e| e.into_inner());
        let run = self.store.load(run_id)?;
        if run.is_terminal() {
            return Err(WorkflowError::TerminalRun { run_id: run_id.into(), stage: run.stage.to_string() });
        }
        if run.awaiting_guidance() {
            return Err(WorkflowError::AwaitingGuidance(run_id.into()));
        }
        let next = next_stage(&run);
        self.step(run, next)
    }

    /// Advance until the run is terminal or waiting for guidance.
    pub fn advance_until_pause(&self, run_id: &str) -> Result<Vec<Event>> {
        let mut events = Vec::new();
        loop {
            let run = self.store.load(run_id)?;
            if run.is_terminal() || run.awaiting_guidance() {
                return Ok(events);
            }
            events.extend(self.advance(run_id)?);
        }
    }

    /// Record expert guidance at the checkpoint and generate claims with it.
    pub fn submit_guidance(&self, run_id: &str, text: &str, author: &str) -> Result<Vec<Event>> {
        let lock = self.lock(run_id);
        let _g = lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut run = self.store.load(run_id)?;
        if run.stage != Stage::AwaitingGuidance {
            return Err(WorkflowError::WrongStage { run_id: run_id.into(), stage: run.stage.to_string() });
        }
        if text.trim().is_empty() {
            return Err(WorkflowError::EmptyGuidance);
        }
        let first = run.next_seq();
        let g = Guidance { text: text.trim().into(), author: author.into(), timestamp: run.now(), stage: Stage::AwaitingGuidance.to_string() };
        run.guidance.push(g);
        run.push_event(Stage::AwaitingGuidance, "guidance received", vec![]);
        let mut events = self.step(run, Stage::Claims)?;
        let run = self.store.load(run_id)?;
        events.splice(0..0, run.events.iter().filter(|e| e.seq == first).cloned());
        Ok(events)
    }

    /// Let a paused run continue with automated claims only.
    pub fn skip_guidance(&self, run_id: &str) -> Result<Vec<Event>> {
        let lock = self.lock(run_id);
        let _g = lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut run = self.store.load(run_id)?;
        if run.stage != Stage::AwaitingGuidance {
            return Err(WorkflowError::WrongStage { run_id: run_id.into(), stage: run.stage.to_string() });
        }
        run.guidance_skipped = true;
        let e = run.push_event(Stage::AwaitingGuidance, "guidance skipped", vec![]);
        self.store.save(&run)?;
        Ok(vec![e])
    }

    /// Canonical report bytes, available once the run has a report.
    pub fn report(&self, run_id: &str) -> Result<Vec<u8>> {
        let run = self.store.load(run_id)?;
        if !run.stage.has_report() {
            return Err(WorkflowError::NotFound(format!("report for run {run_id} (stage {})", run.stage)));
        }
        self.store.read_report(run_id)
    }

    fn step(&self, run: WorkflowRun, next: Stage) -> Result<Vec<Event>> {
        if !is_edge(run.kind, run.stage, next) {
            return Err(WorkflowError::WrongStage { run_id: run.run_id.clone(), stage: format!("{} -> {next}", run.stage) });
        }
        let first = run.next_seq();
        let mut work = run.clone();
        match self.execute(&mut work, next) {
            Ok(outcome) => {
                work.stage = next;
                work.push_event(next, outcome.event, outcome.artifacts);
                self.store.save(&work)?;
                Ok(work.events.into_iter().filter(|e| e.seq >= first).collect())
            }
            Err(err) => {
                let mut failed = run;
                tracing::error!(run = %failed.run_id, stage = %next, error = %err, "stage failed");
                failed.failure = Some(format!("{next}: {err}"));
                failed.stage = Stage::Failed;
                failed.push_event(Stage::Failed, format!("{next} failed: {err}"), vec![]);
                self.store.save(&failed)?;
                Err(err)
            }
        }
    }

    fn put_artifact(&self, run: &mut WorkflowRun, name: &str, media_type: &str, bytes: &[u8]) -> Result<String> {
        let a = self.store.write_artifact(&run.run_id, name, media_type, bytes)?;
        match run.artifacts.iter_mut().find(|x| x.name == name) {
            Some(slot) => *slot = a,
            None => run.artifacts.push(a),
        }
        Ok(name.to_string())
    }

    fn flush_llm(&self, run: &mut WorkflowRun, rec: &Recorder<'_>) -> Result<()> {
        let t = rec.transcripts();
        if t.is_empty() {
            return Ok(());
        }
        self.store.append_llm(&run.run_id, &t)?;
        run.backends.insert(self.backend.identity());
        run.templates.extend(t.iter().map(|x| x.template.clone()));
        Ok(())
    }

    fn flush_literature(&self, run: &mut WorkflowRun, rec: &LitRecorder<'_>, order: &[String]) -> Result<()> {
        let mut t = rec.transcripts();
        if t.is_empty() {
            return Ok(());
        }
        t.sort_by_key(|x| order.iter().position(|h| *h == x.question_hash).unwrap_or(usize::MAX));
        self.store.append_literature(&run.run_id, &t)?;
        run.literature_clients.extend(t.iter().map(|x| x.client.clone()));
        Ok(())
    }

    fn literature_client(&self) -> Result<&dyn LiteratureClient> {
        self.literature.as_deref().ok_or_else(|| WorkflowError::ClientUnavailable {
            client: "none".into(),
            attempts: 0,
            reason: "no literature client configured".into(),
        })
    }

    fn loaded_input(&self, run: &WorkflowRun) -> Result<(InputKind, LoadedInput)> {
        let RunInput::Experiment(e) = &run.input else {
            return Err(WorkflowError::InvalidInput("run has no experimental input".into()));
        };
        Ok((e.kind, load_input(e.kind, &self.store.artifact_path(&run.run_id, &e.data_ref))?))
    }

    fn execute(&self, run: &mut WorkflowRun, stage: Stage) -> Result<Outcome> {
        let rec: Recorder<'_> = RecordingBackend::new(&*self.backend);
        let out = match stage {
            Stage::ToolSelection => self.tool_selection(run, &rec),
            Stage::Analysis => self.analysis(run),
            Stage::Summary => self.summary(run, &rec),
            Stage::AwaitingGuidance => Ok(Outcome::new("waiting for expert guidance")),
            Stage::Claims => self.claims(run, &rec),
            Stage::Questions => self.questions(run),
            Stage::Literature => self.literature(run),
            Stage::Scoring => self.scoring(run, &rec),
            Stage::Recommendations => self.recommendations(run, &rec),
            Stage::Reported => self.reported(run),
            Stage::Planning => self.planning(run, &rec),
            Stage::Building => self.building(run),
            Stage::Validating => self.validating(run, &rec),
            Stage::Refining => self.refining(run, &rec),
            Stage::DftPrep => self.dft_prep(run),
            Stage::Completed => self.completed(run),
            Stage::Unresolved => Ok(Outcome::new(format!("structure still failing validation after {} attempts", run.simulation.attempts.len()))),
            Stage::Created | Stage::Failed => unreachable!("not an executable stage"),
        };
        self.flush_llm(run, &rec)?;
        out
    }

    // ---- novelty assessment ----

    fn tool_selection(&self, run: &mut WorkflowRun, rec: &Recorder<'_>) -> Result<Outcome> {
        let (_, input) = self.loaded_input(run)?;
        let choice = select_tool(&input, &run.metadata(), rec)?;
        let mut event = format!("selected {}", choice.tool.name());
        if let Some(r) = choice.peak_ratio {
            event.push_str(&format!(" (peak ratio {})", crate::claims::fmt_number(r)));
        }
        if choice.overridden {
            tracing::info!(run = %run.run_id, heuristic = choice.heuristic.name(), chosen = choice.tool.name(), justification = %choice.justification, "tool choice overridden");
            event.push_str(&format!("; overrode {}: {}", choice.heuristic.name(), choice.justification));
        }
        run.novelty.tool = Some(choice);
        Ok(Outcome::new(event))
    }

    fn analysis(&self, run: &mut WorkflowRun) -> Result<Outcome> {
        let (_, input) = self.loaded_input(run)?;
        let tool = run.novelty.tool.as_ref().expect("tool selected").tool;
        let out = run_tool(tool, &input, &run.metadata(), &run.config.analysis)?;
        let mut names = Vec::new();
        for a in &out.artifacts {
            names.push(self.put_artifact(run, &a.name, &a.media_type, &a.bytes)?);
        }
        run.novelty.findings = out.findings;
        run.novelty.hotspots = out.hotspots;
        Ok(Outcome::new(format!("{} analysis produced {} findings", tool.name(), run.novelty.findings.len())).with(names))
    }

    fn summary(&self, run: &mut WorkflowRun, rec: &Recorder<'_>) -> Result<Outcome> {
        let summary = summarize_analysis(&run.novelty.findings, &run.metadata(), rec)?;
        if !summary.number_mismatches.is_empty() {
            run.caveats.push(format!("summary quotes numbers absent from the findings: {}", summary.number_mismatches.join(", ")));
        }
        run.novelty.summary = Some(summary);
        Ok(Outcome::new("analysis summarized"))
    }

    fn claims(&self, run: &mut WorkflowRun, rec: &Recorder<'_>) -> Result<Outcome> {
        let summary = run.novelty.summary.clone().expect("summary present");
        let material = run.material();
        let ctx = ClaimContext { run_id: &run.run_id, material: &material };
        let max = run.config.max_claims;
        let mut claims = generate_claims(&summary, ctx, rec, max)?.claims;
        let automated = claims.len();
        for g in &run.guidance {
            claims = integrate_guidance(&claims, g, &summary, ctx, rec, max)?.claims;
        }
        let guided = claims.len() - automated;
        run.novelty.claims = claims;
        Ok(Outcome::new(format!("{automated} automated and {guided} guided claims")))
    }

    fn questions(&self, run: &mut WorkflowRun) -> Result<Outcome> {
        let material = run.material();
        run.novelty.questions = run.novelty.claims.iter().map(|c| claim_to_question(c, &material)).collect();
        Ok(Outcome::new(format!("{} research questions", run.novelty.questions.len())))
    }

    fn literature(&self, run: &mut WorkflowRun) -> Result<Outcome> {
        let client = self.literature_client()?;
        let rec: LitRecorder<'_> = RecordingLiteratureClient::new(client);
        let at = run.now();
        let questions = run.novelty.questions.clone();
        let width = run.config.literature_concurrency.max(1);
        let mut results: Vec<Option<Result<LiteratureReport>>> = questions.iter().map(|_| None).collect();
        for start in (0..questions.len()).step_by(width) {
            let end = (start + width).min(questions.len());
            std::thread::scope(|s| {
                let handles: Vec<_> = questions[start..end].iter().map(|q| s.spawn(|| query_literature(q, &rec, at))).collect();
                for (i, h) in handles.into_iter().enumerate() {
                    results[start + i] = Some(h.join().expect("literature worker panicked"));
                }
            });
        }
        let order: Vec<String> = questions.iter().map(|q| question_hash(q.text.trim())).collect();
        self.flush_literature(run, &rec, &order)?;
        let reports = results.into_iter().map(|r| r.expect("every question answered")).collect::<Result<Vec<_>>>()?;
        for r in &reports {
            for c in &r.caveats {
                if !run.caveats.contains(c) {
                    run.caveats.push(c.clone());
                }
            }
        }
        run.novelty.literature = reports;
        Ok(Outcome::new(format!("{} literature reports", run.novelty.literature.len())))
    }

    fn scoring(&self, run: &mut WorkflowRun, rec: &Recorder<'_>) -> Result<Outcome> {
        let mut out = Vec::new();
        for claim in &run.novelty.claims {
            let report = run
                .novelty
                .literature
                .iter()
                .find(|r| r.question_id == claim.id)
                .ok_or_else(|| WorkflowError::InvalidClaim(format!("claim {} has no literature report", claim.id)))?;
            let cat = categorize_report(report, claim, rec)?;
            out.push(assessment(report, &cat));
        }
        let scores: Vec<String> = out.iter().map(|a| a.score.to_string()).collect();
        run.novelty.assessments = out;
        Ok(Outcome::new(format!("scores [{}]", scores.join(", "))))
    }

    fn recommendations(&self, run: &mut WorkflowRun, rec: &Recorder<'_>) -> Result<Outcome> {
        let summary = run.novelty.summary.clone().expect("summary present");
        let material = run.material();
        let mut recs = Vec::new();
        if run.config.recommend.simulations {
            recs.extend(recommend_simulations(
                &run.novelty.claims,
                &run.novelty.assessments,
                &summary,
                &material,
                run.config.min_score_for_sim,
                rec,
            )?);
        }
        if run.config.recommend.experiments {
            let metadata = run.metadata();
            let technique = metadata
                .get("technique")
                .cloned()
                .unwrap_or_else(|| run.novelty.tool.as_ref().map_or("measurement", |t| t.tool.name()).to_string());
            let ctx = ExperimentContext {
                technique: &technique,
                material: &material,
                summary: &summary,
                claims: &run.novelty.claims,
                assessments: &run.novelty.assessments,
                hotspots: &run.novelty.hotspots,
                catalog: run.config.catalog.as_ref(),
            };
            recs.extend(recommend_experiments(&ctx, rec)?);
        }
        let warned = recs.iter().filter(|r| !r.warnings.is_empty()).count();
        let n = recs.len();
        run.novelty.recommendations = recs;
        Ok(Outcome::new(format!("{n} recommendations ({warned} with warnings)")))
    }

    fn provenance(&self, run: &WorkflowRun) -> Provenance {
        let hashes = template_hashes();
        Provenance {
            backends: run.backends.iter().cloned().collect(),
            literature_clients: run.literature_clients.iter().cloned().collect(),
            config_hash: run.config_hash.clone(),
            prompt_templates: run.templates.iter().filter_map(|k| hashes.get(k).map(|h| (k.clone(), h.clone()))).collect(),
            started_at: run.created_at(),
            finished_at: run.now(),
        }
    }

    fn finish_report(&self, run: &mut WorkflowRun, mut doc: ReportDocument) -> Result<Outcome> {
        doc.artifacts = run.artifacts.iter().map(artifact_ref).collect();
        doc.caveats = run.caveats.clone();
        doc.provenance = self.provenance(run);
        let violations = validate_report(&doc);
        if !violations.is_empty() {
            let text = violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
            return Err(WorkflowError::InvalidReport(text));
        }
        let bytes = self.store.write_report(&run.run_id, &doc)?;
        Ok(Outcome::new(format!("report written ({} bytes, sha256 {})", bytes.len(), &digest_hex(&bytes)[..12])))
    }

    fn reported(&self, run: &mut WorkflowRun) -> Result<Outcome> {
        let RunInput::Experiment(e) = &run.input else {
            return Err(WorkflowError::InvalidInput("run has no experimental input".into()));
        };
        let input = InputSummary { kind: e.kind.to_string(), data_ref: Some(e.data_ref.clone()), request: None, metadata: e.metadata.clone() };
        let mut doc = ReportDocument::empty(run.run_id.clone(), run.kind.name(), input);
        let n = &run.novelty;
        doc.analyses = n.summary.clone().into_iter().collect();
        doc.claims = n.claims.clone();
        doc.questions = n.questions.clone();
        doc.assessments = n.assessments.clone();
        doc.recommendations = n.recommendations.clone();
        doc.guidance = run.guidance.clone();
        self.finish_report(run, doc)
    }

    // ---- structure simulation ----

    fn request(run: &WorkflowRun) -> Result<String> {
        match &run.input {
            RunInput::Request { text } => Ok(text.trim().to_string()),
            RunInput::Experiment(_) => Err(WorkflowError::InvalidInput("run has no structure request".into())),
        }
    }

    fn planning(&self, run: &mut WorkflowRun, rec: &Recorder<'_>) -> Result<Outcome> {
        let plan = plan_from_request(&Self::request(run)?, rec)?;
        run.simulation.attempts.push(AttemptRecord { attempt: 1, plan, formula: None, atom_count: None, report: None });
        Ok(Outcome::new("build plan drafted"))
    }

    fn building(&self, run: &mut WorkflowRun) -> Result<Outcome> {
        let last = run.simulation.attempts.last().expect("plan present").clone();
        let s = execute_plan(&last.plan)?;
        let mut names = Vec::new();
        match render_views(&s) {
            Ok(set) => {
                for v in &set.views {
                    names.push(self.put_artifact(run, &format!("structure_{}_{}.png", last.attempt, v.name), "image/png", &v.png)?);
                }
            }
            Err(StructError::TooManyAtoms(n)) => run.caveats.push(format!("attempt {}: {n} atoms are too many to render", last.attempt)),
            Err(e) => return Err(e.into()),
        }
        let a = run.simulation.attempts.last_mut().expect("plan present");
        a.formula = Some(s.formula());
        a.atom_count = Some(s.len());
        Ok(Outcome::new(format!("attempt {}: built {} ({} atoms)", last.attempt, s.formula(), s.len())).with(names))
    }

    fn write_trace(&self, run: &mut WorkflowRun) -> Result<String> {
        let bytes = serde_json::to_vec_pretty(&run.simulation.attempts).expect("attempts serialize");
        self.put_artifact(run, "validation_trace.json", "application/json", &bytes)
    }

    fn validating(&self, run: &mut WorkflowRun, rec: &Recorder<'_>) -> Result<Outcome> {
        let request = Self::request(run)?;
        let last = run.simulation.attempts.last().expect("plan present").clone();
        let s = execute_plan(&last.plan)?;
        let report = validate(&s, &last.plan, &request, Some(rec))?;
        let codes: Vec<&str> = report.issues.iter().map(|i| i.code.as_str()).collect();
        let event = if report.passed {
            format!("attempt {} passed validation", last.attempt)
        } else {
            format!("attempt {} failed validation: {}", last.attempt, codes.join(", "))
        };
        run.simulation.attempts.last_mut().expect("plan present").report = Some(report);
        let name = self.write_trace(run)?;
        Ok(Outcome::new(event).with(vec![name]))
    }

    fn refining(&self, run: &mut WorkflowRun, rec: &Recorder<'_>) -> Result<Outcome> {
        let request = Self::request(run)?;
        let last = run.simulation.attempts.last().expect("plan present").clone();
        let report = last.report.as_ref().expect("validated before refining");
        let plan = refine_plan(&request, &last.plan, report, rec)?;
        run.simulation.attempts.push(AttemptRecord { attempt: last.attempt + 1, plan, formula: None, atom_count: None, report: None });
        Ok(Outcome::new(format!("plan refined for attempt {}", last.attempt + 1)))
    }

    fn dft_prep(&self, run: &mut WorkflowRun) -> Result<Outcome> {
        let last = run.simulation.attempts.last().expect("plan present").clone();
        let s = execute_plan(&last.plan)?;
        let objective = run.config.objective;
        let setup = if run.config.literature_parameters {
            let client = self.literature_client()?;
            let lit: LitRecorder<'_> = RecordingLiteratureClient::new(client);
            let src = LiteratureParameterSource { client: &lit };
            let setup = select_parameters(&s, objective, Some(&src as &dyn ParameterSource));
            self.flush_literature(run, &lit, &[])?;
            setup
        } else {
            select_parameters(&s, objective, None)
        };
        let files = [
            ("POSCAR", emit_poscar(&s)?),
            ("INCAR", emit_incar(&setup.incar)?),
            ("KPOINTS", emit_kpoints(&setup.kpoints)),
        ];
        let mut names = Vec::new();
        for (name, text) in files {
            names.push(self.put_artifact(run, name, "text/plain", text.as_bytes())?);
        }
        let setup_json = serde_json::to_vec_pretty(&setup).expect("setup serializes");
        names.push(self.put_artifact(run, "dft_setup.json", "application/json", &setup_json)?);
        run.caveats.extend(setup.warnings.iter().cloned());
        run.simulation.files = names[..3].to_vec();
        run.simulation.warnings = setup.warnings;
        Ok(Outcome::new(format!("DFT inputs prepared for {}", s.formula())).with(names))
    }

    fn completed(&self, run: &mut WorkflowRun) -> Result<Outcome> {
        let request = Self::request(run)?;
        let last = run.simulation.attempts.last().expect("plan present").clone();
        let attempts = run
            .simulation
            .attempts
            .iter()
            .map(|a| {
                Ok(AttemptSummary {
                    attempt: a.attempt as u32,
                    plan_digest: digest_hex(&canonical_serialize(&a.plan)?),
                    issue_codes: a.report.as_ref().map(|r| r.issues.iter().map(|i| i.code.as_str().to_string()).collect()).unwrap_or_default(),
                    passed: a.report.as_ref().is_some_and(|r| r.passed),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let objective = serde_json::to_value(run.config.objective).expect("objective serializes");
        let input = InputSummary { kind: "request".into(), data_ref: None, request: Some(request.clone()), metadata: Default::default() };
        let mut doc = ReportDocument::empty(run.run_id.clone(), run.kind.name(), input);
        doc.simulation = Some(SimulationSection {
            request,
            objective: objective.as_str().unwrap_or_default().to_string(),
            formula: last.formula.clone().unwrap_or_default(),
            atom_count: last.atom_count.unwrap_or(0),
            attempts,
            resolved: true,
            files: run.simulation.files.clone(),
        });
        self.finish_report(run, doc)
    }
}

fn artifact_ref(a: &StoredArtifact) -> ArtifactRef {
    ArtifactRef { name: a.name.clone(), media_type: a.media_type.clone(), sha256: a.sha256.clone() }
}

/// The stage the next `advance` will execute.
pub fn next_stage(run: &WorkflowRun) -> Stage {
    use Stage::*;
    match (run.kind, run.stage) {
        (RunKind::NoveltyAssessment, Created) => ToolSelection,
        (RunKind::NoveltyAssessment, ToolSelection) => Analysis,
        (RunKind::NoveltyAssessment, Analysis) => Summary,
        (RunKind::NoveltyAssessment, Summary) if run.config.pause_for_guidance => AwaitingGuidance,
        (RunKind::NoveltyAssessment, Summary | AwaitingGuidance) => Claims,
        (RunKind::NoveltyAssessment, Claims) => Questions,
        (RunKind::NoveltyAssessment, Questions) => Literature,
        (RunKind::NoveltyAssessment, Literature) => Scoring,
        (RunKind::NoveltyAssessment, Scoring) if run.config.recommend.experiments || run.config.recommend.simulations => Recommendations,
        (RunKind::NoveltyAssessment, Scoring | Recommendations) => Reported,
        (RunKind::StructureSimulation, Created) => Planning,
        (RunKind::StructureSimulation, Planning | Refining) => Building,
        (RunKind::StructureSimulation, Building) => Validating,
        (RunKind::StructureSimulation, Validating) => {
            let last = run.simulation.attempts.last();
            if last.and_then(|a| a.report.as_ref()).is_some_and(|r| r.passed) {
                DftPrep
            } else if run.simulation.attempts.len() < run.config.max_attempts.max(1) {
                Refining
            } else {
                Unresolved
            }
        }
        (RunKind::StructureSimulation, DftPrep) => Completed,
        (_, stage) => stage,
    }
}
