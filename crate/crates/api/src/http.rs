//! `/v1` JSON service. Handlers are thin: every response is read back from
//! the run store, so restarting the service loses nothing.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use labloop_core::ExperimentInput;
use labloop_workflow::{Engine, RunConfig, RunInput, RunKind, WorkflowError};
use serde::Deserialize;

use crate::view::{ApiRunView, Created, ErrorBody, EventsBody, RunList};
use crate::{classify, error_code, ErrorClass};

const POLL_INTERVAL: Duration = Duration::from_millis(100);
const DEFAULT_WAIT_MS: u64 = 20_000;
const MAX_WAIT_MS: u64 = 60_000;

type Shared = Arc<Engine>;

pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self { status: StatusCode::BAD_REQUEST, body: ErrorBody { error: "bad_request".into(), message: message.into() } }
    }
}

impl From<WorkflowError> for ApiError {
    fn from(e: WorkflowError) -> Self {
        let status = match classify(&e) {
            ErrorClass::NotFound => StatusCode::NOT_FOUND,
            ErrorClass::Conflict => StatusCode::CONFLICT,
            ErrorClass::Invalid => StatusCode::BAD_REQUEST,
            ErrorClass::Backend => StatusCode::BAD_GATEWAY,
            ErrorClass::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self { status, body: ErrorBody { error: error_code(&e).into(), message: e.to_string() } }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Run blocking engine work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, WorkflowError> + Send + 'static) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            body: ErrorBody { error: "internal".into(), message: e.to_string() },
        }),
    }
}

pub fn router(engine: Shared) -> Router {
    Router::new()
        .route("/v1/runs", post(create_run).get(list_runs))
        .route("/v1/runs/{id}", get(get_run))
        .route("/v1/runs/{id}/advance", post(advance))
        .route("/v1/runs/{id}/guidance", post(guidance))
        .route("/v1/runs/{id}/report", get(report))
        .route("/v1/runs/{id}/artifacts/{name}", get(artifact))
        .route("/v1/runs/{id}/events", get(events))
        .with_state(engine)
}

pub async fn serve(addr: SocketAddr, engine: Shared) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(engine)).await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRun {
    kind: RunKind,
    /// Server-side path and metadata of an experimental input.
    #[serde(default)]
    input: Option<ExperimentInput>,
    /// Free-text structure request.
    #[serde(default)]
    request: Option<String>,
    #[serde(default)]
    config: RunConfig,
}

fn parse<T: serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("request body: {e}")))
}

async fn create_run(State(engine): State<Shared>, body: Bytes) -> ApiResult<(StatusCode, Json<Created>)> {
    let req: CreateRun = parse(&body)?;
    let input = match (req.input, req.request) {
        (Some(i), None) => RunInput::Experiment(i),
        (None, Some(text)) => RunInput::Request { text },
        _ => return Err(ApiError::bad_request("exactly one of input or request is required")),
    };
    let run_id = blocking(move || engine.start_run(req.kind, input, req.config)).await?;
    Ok((StatusCode::CREATED, Json(Created { run_id })))
}

async fn list_runs(State(engine): State<Shared>) -> ApiResult<Json<RunList>> {
    let runs = blocking(move || {
        let ids = engine.store().list()?;
        ids.iter().map(|id| engine.resume(id).map(|r| ApiRunView::of(&r))).collect::<Result<Vec<_>, _>>()
    })
    .await?;
    Ok(Json(RunList { runs }))
}

async fn get_run(State(engine): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<ApiRunView>> {
    let run = blocking(move || engine.resume(&id)).await?;
    Ok(Json(ApiRunView::of(&run)))
}

#[derive(Debug, Deserialize)]
struct AdvanceQuery {
    until: Option<String>,
}

async fn advance(State(engine): State<Shared>, Path(id): Path<String>, Query(q): Query<AdvanceQuery>) -> ApiResult<Json<EventsBody>> {
    let until_pause = match q.until.as_deref() {
        None => false,
        Some("terminal") => true,
        Some(other) => return Err(ApiError::bad_request(format!("until={other}: only 'terminal' is supported"))),
    };
    let body = blocking(move || {
        let events = if until_pause { engine.advance_until_pause(&id)? } else { engine.advance(&id)? };
        Ok(EventsBody::of(&engine.resume(&id)?, events))
    })
    .await?;
    Ok(Json(body))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GuidanceRequest {
    #[serde(default)]
    text: String,
    #[serde(default)]
    author: Option<String>,
    /// Continue with automated claims only.
    #[serde(default)]
    skip: bool,
}

async fn guidance(State(engine): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<EventsBody>> {
    let req: GuidanceRequest = parse(&body)?;
    let body = blocking(move || {
        let events = if req.skip {
            engine.skip_guidance(&id)?
        } else {
            engine.submit_guidance(&id, &req.text, req.author.as_deref().unwrap_or("operator"))?
        };
        Ok(EventsBody::of(&engine.resume(&id)?, events))
    })
    .await?;
    Ok(Json(body))
}

async fn report(State(engine): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    let bytes = blocking(move || engine.report(&id)).await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

async fn artifact(State(engine): State<Shared>, Path((id, name)): Path<(String, String)>) -> ApiResult<Response> {
    let (media_type, bytes) = blocking(move || {
        let run = engine.resume(&id)?;
        let entry = run.artifact(&name).ok_or_else(|| WorkflowError::NotFound(format!("{id}/{name}")))?;
        Ok((entry.media_type.clone(), engine.store().read_artifact(&id, &name)?))
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, media_type)], bytes).into_response())
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    /// Return events with a sequence number greater than this.
    after: Option<u64>,
    wait_ms: Option<u64>,
}

/// Long poll: answers as soon as there are newer events, the run is
/// terminal or paused, or the wait elapses.
async fn events(State(engine): State<Shared>, Path(id): Path<String>, Query(q): Query<EventsQuery>) -> ApiResult<Json<EventsBody>> {
    let deadline = Instant::now() + Duration::from_millis(q.wait_ms.unwrap_or(DEFAULT_WAIT_MS).min(MAX_WAIT_MS));
    loop {
        let (engine2, id2) = (engine.clone(), id.clone());
        let run = blocking(move || engine2.resume(&id2)).await?;
        let fresh: Vec<_> = run.events.iter().filter(|e| q.after.is_none_or(|a| e.seq > a)).cloned().collect();
        if !fresh.is_empty() || run.is_terminal() || run.awaiting_guidance() || Instant::now() >= deadline {
            return Ok(Json(EventsBody::of(&run, fresh)));
        }
        tokio::time::sleep(POLL_INTERVAL).await;
    }
}
