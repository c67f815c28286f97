//! The `labloop` command line.
//!
//! Exit codes: 0 success (including a run paused for guidance), 1 storage
//! failure, 2 validation failure or an unresolved structure, 3 backend or
//! literature-client failure, 64 usage error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use labloop_atomistic::DftObjective;
use labloop_core::{canonical_serialize, ExperimentInput, InputKind};
use labloop_workflow::tools::{load_input, run_tool};
use labloop_workflow::{
    AnalysisParams, AnalysisTool, Engine, InstrumentCatalog, RecommendConfig, RunConfig, RunInput, RunKind, RunStore, Stage,
    WorkflowError,
};

use crate::clients::{backend_from_spec, literature_from_spec};
use crate::view::ApiRunView;
use crate::{classify, ErrorClass};

pub const EXIT_OK: i32 = 0;
pub const EXIT_STORAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "labloop", version, about = "Analysis, novelty assessment and structure generation runs")]
struct Cli {
    /// Completion backend: replay:<file.jsonl>, scripted:<rules.json> or remote:<config.json>
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Literature client: mock:<fixture.json>, replay:<file.jsonl> or remote:<config.json>
    #[arg(long, global = true)]
    literature: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analyze an experimental input and assess the novelty of its claims.
    Novelty(NoveltyArgs),
    /// Build and validate a structure from a text request and prepare DFT inputs.
    Simulate(SimulateArgs),
    /// Submit guidance to (or skip the checkpoint of) a paused run and continue it.
    Guide(GuideArgs),
    /// Continue an interrupted run.
    Resume(ResumeArgs),
    /// Run one analysis tool directly, without a workflow.
    Analyze(AnalyzeArgs),
    /// Serve the /v1 HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct NoveltyArgs {
    #[arg(long)]
    input: PathBuf,
    /// Input kind; inferred from the file extension when absent.
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    /// Metadata as a JSON object, e.g. '{"material": "MoS2", "pixel_size_nm": 0.02}'
    #[arg(long)]
    meta: Option<String>,
    #[arg(long)]
    pause_for_guidance: bool,
    /// Comma-separated subset of experiments,simulations (or "none").
    #[arg(long)]
    recommend: Option<String>,
    /// Instrument catalog JSON used to check experiment recommendations.
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Full run configuration as JSON; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    request: String,
    #[arg(long, value_parser = parse_objective, default_value = "DefectRelaxation")]
    objective: DftObjective,
    #[arg(long)]
    max_attempts: Option<usize>,
    /// Ask the literature client for DFT parameters.
    #[arg(long)]
    literature_parameters: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GuideArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    run: String,
    #[arg(long, conflicts_with = "skip", required_unless_present = "skip")]
    text: Option<String>,
    #[arg(long, default_value = "operator")]
    author: String,
    #[arg(long)]
    skip: bool,
}

#[derive(Debug, Args)]
struct ResumeArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    run: String,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(value_enum)]
    tool: ToolArg,
    input: PathBuf,
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    #[arg(long)]
    meta: Option<String>,
    /// Number of spectral components (unmix).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    /// Number of domains (spatiofreq).
    #[arg(long)]
    domains: Option<usize>,
    /// Curve model name (curve-fit).
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the current directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    #[arg(long)]
    data: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Image,
    Cube,
    Curve,
}

impl From<KindArg> for InputKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Image => InputKind::Image2D,
            KindArg::Cube => InputKind::HyperCube,
            KindArg::Curve => InputKind::Curve1D,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ToolArg {
    Atomistic,
    Spatiofreq,
    Unmix,
    #[value(alias = "curve_fit")]
    CurveFit,
}

impl From<ToolArg> for AnalysisTool {
    fn from(t: ToolArg) -> Self {
        match t {
            ToolArg::Atomistic => AnalysisTool::Atomistic,
            ToolArg::Spatiofreq => AnalysisTool::Spatiofreq,
            ToolArg::Unmix => AnalysisTool::Unmix,
            ToolArg::CurveFit => AnalysisTool::CurveFit,
        }
    }
}

/// Accepts `DefectRelaxation`, `defect_relaxation` or `defect-relaxation`.
fn parse_objective(s: &str) -> Result<DftObjective, String> {
    let norm = |t: &str| t.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
    DftObjective::ALL
        .into_iter()
        .find(|o| norm(&format!("{o:?}")) == norm(s))
        .ok_or_else(|| format!("unknown objective {s:?} (expected DefectRelaxation, ElectronicStructure or SinglePointEnergy)"))
}

/// A failure with its exit code; printed to stderr by [`run`].
#[derive(Debug)]
struct Exit {
    code: i32,
    message: String,
}

fn usage(message: impl Into<String>) -> Exit {
    Exit { code: EXIT_USAGE, message: message.into() }
}

impl From<WorkflowError> for Exit {
    fn from(e: WorkflowError) -> Self {
        let code = match (classify(&e), &e) {
            (ErrorClass::Backend, _) => EXIT_BACKEND,
            (_, WorkflowError::Storage { .. }) => EXIT_STORAGE,
            _ => EXIT_VALIDATION,
        };
        Exit { code, message: e.to_string() }
    }
}

fn io_exit(path: &Path, e: std::io::Error) -> Exit {
    Exit { code: EXIT_STORAGE, message: format!("{}: {e}", path.display()) }
}

/// Parse `args` (including the program name), execute, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn execute(cli: Cli) -> Result<i32, Exit> {
    match cli.command {
        Command::Novelty(a) => {
            let literature = cli.literature.as_deref().ok_or_else(|| usage("--literature is required for novelty runs"))?;
            let engine = open_engine(&a.out.join("store"), cli.backend.as_deref(), Some(literature))?;
            let (input, config) = novelty_request(&a)?;
            let id = engine.start_run(RunKind::NoveltyAssessment, input, config)?;
            drive(&engine, &id, &a.out)
        }
        Command::Simulate(a) => {
            if a.literature_parameters && cli.literature.is_none() {
                return Err(usage("--literature-parameters needs --literature"));
            }
            let engine = open_engine(&a.out.join("store"), cli.backend.as_deref(), cli.literature.as_deref())?;
            let mut config = RunConfig { objective: a.objective, literature_parameters: a.literature_parameters, ..RunConfig::default() };
            if let Some(n) = a.max_attempts {
                config.max_attempts = n;
            }
            let id = engine.start_run(RunKind::StructureSimulation, RunInput::Request { text: a.request }, config)?;
            drive(&engine, &id, &a.out)
        }
        Command::Guide(a) => {
            let engine = open_engine(&a.out.join("store"), cli.backend.as_deref(), cli.literature.as_deref())?;
            if a.skip {
                engine.skip_guidance(&a.run)?;
                drive(&engine, &a.run, &a.out)
            } else {
                let text = a.text.unwrap_or_default();
                match engine.submit_guidance(&a.run, &text, &a.author) {
                    Ok(_) => drive(&engine, &a.run, &a.out),
                    Err(e) => finish(&engine, &a.run, &a.out, Some(e)),
                }
            }
        }
        Command::Resume(a) => {
            let engine = open_engine(&a.out.join("store"), cli.backend.as_deref(), cli.literature.as_deref())?;
            drive(&engine, &a.run, &a.out)
        }
        Command::Analyze(a) => analyze(a),
        Command::Serve(a) => {
            let engine = open_engine(&a.data, cli.backend.as_deref(), cli.literature.as_deref())?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| Exit { code: EXIT_STORAGE, message: e.to_string() })?;
            rt.block_on(crate::http::serve(a.addr, Arc::new(engine)))
                .map_err(|e| Exit { code: EXIT_STORAGE, message: format!("serve {}: {e}", a.addr) })?;
            Ok(EXIT_OK)
        }
    }
}

fn open_engine(root: &Path, backend: Option<&str>, literature: Option<&str>) -> Result<Engine, Exit> {
    let backend = backend_from_spec(backend.ok_or_else(|| usage("--backend is required"))?).map_err(|e| usage(e.to_string()))?;
    let literature = literature.map(literature_from_spec).transpose().map_err(|e| usage(e.to_string()))?;
    Ok(Engine::new(RunStore::open(root)?, backend, literature))
}

fn parse_meta(meta: Option<&str>) -> Result<BTreeMap<String, String>, Exit> {
    let Some(text) = meta else { return Ok(BTreeMap::new()) };
    let bad = || usage(format!("--meta: expected a JSON object of scalar values, got {text:?}"));
    let value: serde_json::Value = serde_json::from_str(text).map_err(|_| bad())?;
    let obj = value.as_object().ok_or_else(bad)?;
    obj.iter()
        .map(|(k, v)| match v {
            serde_json::Value::String(s) => Ok((k.clone(), s.clone())),
            serde_json::Value::Number(_) | serde_json::Value::Bool(_) => Ok((k.clone(), v.to_string())),
            _ => Err(bad()),
        })
        .collect()
}

fn infer_kind(path: &Path, kind: Option<KindArg>) -> Result<InputKind, Exit> {
    if let Some(k) = kind {
        return Ok(k.into());
    }
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png") => Ok(InputKind::Image2D),
        Some("bin" | "raw") => Ok(InputKind::HyperCube),
        Some("csv" | "txt") => Ok(InputKind::Curve1D),
        _ => Err(usage(format!("--kind: cannot infer the input kind of {}; pass --kind", path.display()))),
    }
}

fn novelty_request(a: &NoveltyArgs) -> Result<(RunInput, RunConfig), Exit> {
    let mut config = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| usage(format!("--config: {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("--config: {e}")))?
        }
        None => RunConfig::default(),
    };
    if a.pause_for_guidance {
        config.pause_for_guidance = true;
    }
    if let Some(list) = &a.recommend {
        let mut r = RecommendConfig { experiments: false, simulations: false };
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "experiments" => r.experiments = true,
                "simulations" => r.simulations = true,
                "none" => {}
                other => return Err(usage(format!("--recommend: unknown item {other:?} (expected experiments, simulations or none)"))),
            }
        }
        config.recommend = r;
    }
    if let Some(p) = &a.catalog {
        let text = std::fs::read_to_string(p).map_err(|e| usage(format!("--catalog: {}: {e}", p.display())))?;
        config.catalog = Some(InstrumentCatalog::from_json(&text).map_err(|e| usage(format!("--catalog: {e}")))?);
    }
    let mut input = ExperimentInput::new(infer_kind(&a.input, a.kind)?, a.input.display().to_string());
    input.metadata = parse_meta(a.meta.as_deref())?;
    Ok((RunInput::Experiment(input), config))
}

/// Advance to the end or the guidance checkpoint, then export.
fn drive(engine: &Engine, id: &str, out: &Path) -> Result<i32, Exit> {
    let err = engine.advance_until_pause(id).err();
    finish(engine, id, out, err)
}

/// Copy artifacts and the report into `out`, print a summary line and pick
/// the exit code.
fn finish(engine: &Engine, id: &str, out: &Path, err: Option<WorkflowError>) -> Result<i32, Exit> {
    let run = match engine.resume(id) {
        Ok(r) => r,
        Err(load) => return Err(err.unwrap_or(load).into()),
    };
    std::fs::create_dir_all(out).map_err(|e| io_exit(out, e))?;
    for a in &run.artifacts {
        let bytes = engine.store().read_artifact(id, &a.name)?;
        let dest = out.join(&a.name);
        std::fs::write(&dest, bytes).map_err(|e| io_exit(&dest, e))?;
    }
    if run.stage.has_report() {
        let dest = out.join("report.doc");
        std::fs::write(&dest, engine.report(id)?).map_err(|e| io_exit(&dest, e))?;
    }
    let view = ApiRunView::of(&run);
    let dest = out.join("run.json");
    std::fs::write(&dest, serde_json::to_vec_pretty(&view).expect("serializable")).map_err(|e| io_exit(&dest, e))?;
    println!("{}", serde_json::json!({ "run_id": run.run_id, "stage": run.stage, "out": out.display().to_string() }));

    if let Some(e) = err {
        return Err(e.into());
    }
    Ok(match run.stage {
        Stage::AwaitingGuidance => {
            eprintln!("run {id} is waiting for guidance; continue with `labloop guide --out {} --run {id}`", out.display());
            EXIT_OK
        }
        Stage::Unresolved => {
            eprintln!("run {id} ended unresolved: no structure passed validation");
            EXIT_VALIDATION
        }
        _ => EXIT_OK,
    })
}

fn analyze(a: AnalyzeArgs) -> Result<i32, Exit> {
    let kind = infer_kind(&a.input, a.kind)?;
    let metadata = parse_meta(a.meta.as_deref())?;
    let mut params = AnalysisParams::default();
    params.components = a.k.or(params.components);
    params.window = a.window.unwrap_or(params.window);
    params.stride = a.stride.unwrap_or(params.stride);
    params.domains = a.domains.unwrap_or(params.domains);
    params.seed = a.seed.unwrap_or(params.seed);
    if let Some(m) = a.model {
        params.curve_model = m;
    }
    let input = load_input(kind, &a.input)?;
    let output = run_tool(a.tool.into(), &input, &metadata, &params)?;
    std::fs::create_dir_all(&a.out).map_err(|e| io_exit(&a.out, e))?;
    let mut written = Vec::new();
    for art in &output.artifacts {
        let dest = a.out.join(&art.name);
        std::fs::write(&dest, &art.bytes).map_err(|e| io_exit(&dest, e))?;
        written.push(art.name.clone());
    }
    for (name, bytes) in [
        ("findings.json", canonical_serialize(&output.findings).map_err(WorkflowError::from)?),
        ("hotspots.json", canonical_serialize(&output.hotspots).map_err(WorkflowError::from)?),
    ] {
        let dest = a.out.join(name);
        std::fs::write(&dest, bytes).map_err(|e| io_exit(&dest, e))?;
        written.push(name.into());
    }
    println!("{}", serde_json::json!({ "tool": AnalysisTool::from(a.tool).name(), "files": written }));
    Ok(EXIT_OK)
}
