#[path = "../../workflow/tests/common/mod.rs"]
mod common;

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use labloop_api::http::router;
use labloop_api::view::{ApiRunView, Created, ErrorBody, EventsBody, RunList};
use labloop_core::{canonical_parse, ClaimOrigin, ReportDocument};
use labloop_workflow::{Engine, Stage};
use serde_json::{json, Value};

struct Server {
    base: String,
}

fn serve(engine: Engine) -> Server {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let engine = Arc::new(engine);
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let l = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(l, router(engine)).await.unwrap();
        });
    });
    Server { base }
}

struct Reply {
    status: u16,
    content_type: String,
    body: Vec<u8>,
}

impl Reply {
    /// Parse the body into its declared schema; unknown fields are rejected.
    fn json<T: serde::de::DeserializeOwned>(&self) -> T {
        assert_eq!(self.content_type, "application/json", "status {}", self.status);
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

impl Server {
    fn get(&self, path: &str) -> Reply {
        let resp = agent().get(&format!("{}{path}", self.base)).call().unwrap();
        reply(resp)
    }

    fn post(&self, path: &str, body: &Value) -> Reply {
        let resp = agent().post(&format!("{}{path}", self.base)).send_json(body).unwrap();
        reply(resp)
    }

    fn post_raw(&self, path: &str, body: &str) -> Reply {
        let resp = agent()
            .post(&format!("{}{path}", self.base))
            .header("content-type", "application/json")
            .send(body)
            .unwrap();
        reply(resp)
    }

    fn create(&self, body: Value) -> String {
        let r = self.post("/v1/runs", &body);
        assert_eq!(r.status, 201, "{}", String::from_utf8_lossy(&r.body));
        r.json::<Created>().run_id
    }
}

fn reply(mut resp: ureq::http::Response<ureq::Body>) -> Reply {
    let status = resp.status().as_u16();
    let content_type = resp.headers().get("content-type").map(|v| v.to_str().unwrap().to_string()).unwrap_or_default();
    let body = resp.body_mut().read_to_vec().unwrap();
    Reply { status, content_type, body }
}

fn experiment(input: labloop_workflow::RunInput) -> Value {
    match input {
        labloop_workflow::RunInput::Experiment(e) => serde_json::to_value(e).unwrap(),
        _ => unreachable!(),
    }
}

fn replay_server(dir: &Path, name: &str) -> Server {
    let (backend, lit) = replay(name);
    serve(engine(dir, backend, lit))
}

#[test]
fn mos2_replay_over_http_returns_the_golden_report() {
    let dir = tempfile::tempdir().unwrap();
    let s = replay_server(dir.path(), "mos2");
    let id = s.create(json!({"kind": "novelty_assessment", "input": experiment(mos2_input())}));
    let mut steps = 0;
    loop {
        let view: ApiRunView = s.get(&format!("/v1/runs/{id}")).json();
        if view.flags.terminal {
            assert_eq!(view.stage, Stage::Reported);
            assert_eq!(view.report.as_deref(), Some(format!("/v1/runs/{id}/report").as_str()));
            break;
        }
        assert!(view.report.is_none());
        let r = s.post(&format!("/v1/runs/{id}/advance"), &json!({}));
        assert_eq!(r.status, 200);
        let body: EventsBody = r.json();
        assert!(!body.events.is_empty());
        steps += 1;
    }
    assert!(steps >= 7);
    let r = s.get(&format!("/v1/runs/{id}/report"));
    assert_eq!(r.status, 200);
    assert_eq!(r.content_type, "application/json");
    assert!(r.body == std::fs::read(fixtures().join("golden/reports/mos2.doc")).unwrap());

    let png = s.get(&format!("/v1/runs/{id}/artifacts/environment_map.png"));
    assert_eq!(png.status, 200);
    assert_eq!(png.content_type, "image/png");
    assert!(png.body.starts_with(b"\x89PNG\r\n\x1a\n"));

    // terminal run: advance and guidance conflict
    let r = s.post(&format!("/v1/runs/{id}/advance"), &json!({}));
    assert_eq!(r.status, 409);
    assert_eq!(r.json::<ErrorBody>().error, "terminal_run");
    let r = s.post(&format!("/v1/runs/{id}/guidance"), &json!({"text": "look again"}));
    assert_eq!(r.status, 409);
    assert_eq!(r.json::<ErrorBody>().error, "wrong_stage");
}

#[test]
fn unknown_things_are_404() {
    let dir = tempfile::tempdir().unwrap();
    let s = replay_server(dir.path(), "mos2");
    assert_eq!(s.get("/v1/runs/run-nope").status, 404);
    assert_eq!(s.get("/v1/runs/run-nope/report").status, 404);
    let id = s.create(json!({"kind": "novelty_assessment", "input": experiment(mos2_input())}));
    assert_eq!(s.get(&format!("/v1/runs/{id}/report")).status, 404);
    assert_eq!(s.get(&format!("/v1/runs/{id}/artifacts/missing.png")).status, 404);
    assert_eq!(s.get(&format!("/v1/runs/{id}/artifacts/..%2Fstate.doc")).status, 404);
    let r = s.get(&format!("/v1/runs/{id}/artifacts/input.png"));
    assert_eq!((r.status, r.content_type.as_str()), (200, "image/png"));
}

#[test]
fn invalid_creates_are_400() {
    let dir = tempfile::tempdir().unwrap();
    let s = replay_server(dir.path(), "mos2");
    for body in [
        "not json".to_string(),
        json!({"kind": "novelty_assessment"}).to_string(),
        json!({"kind": "bogus", "request": "x"}).to_string(),
        json!({"kind": "structure_simulation", "request": "x", "input": experiment(mos2_input())}).to_string(),
        json!({"kind": "novelty_assessment", "input": {"kind": "Image2D", "data_ref": "/no/such.png", "metadata": {}}}).to_string(),
        json!({"kind": "structure_simulation", "request": "   "}).to_string(),
        json!({"kind": "novelty_assessment", "request": GRAPHENE}).to_string(),
    ] {
        let r = s.post_raw("/v1/runs", &body);
        assert_eq!(r.status, 400, "{body}");
        r.json::<ErrorBody>();
    }
    assert!(s.get("/v1/runs").json::<RunList>().runs.is_empty());
}

#[test]
fn rgo_guidance_flow_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let s = replay_server(dir.path(), "rgo");
    let id = s.create(json!({
        "kind": "novelty_assessment",
        "input": experiment(rgo_input()),
        "config": serde_json::to_value(rgo_config()).unwrap(),
    }));
    let r = s.post(&format!("/v1/runs/{id}/advance?until=terminal"), &json!({}));
    assert_eq!(r.status, 200);
    let body: EventsBody = r.json();
    assert!(body.awaiting_guidance && !body.terminal);
    assert_eq!(body.stage, Stage::AwaitingGuidance);
    assert!(s.get(&format!("/v1/runs/{id}")).json::<ApiRunView>().flags.awaiting_guidance);

    assert_eq!(s.post(&format!("/v1/runs/{id}/advance"), &json!({})).status, 409);
    assert_eq!(s.post(&format!("/v1/runs/{id}/advance?until=forever"), &json!({})).status, 400);
    let r = s.post(&format!("/v1/runs/{id}/guidance"), &json!({"text": "  "}));
    assert_eq!(r.status, 400);
    assert_eq!(r.json::<ErrorBody>().error, "empty_guidance");

    let r = s.post(&format!("/v1/runs/{id}/guidance"), &json!({"text": GUIDANCE, "author": "expert"}));
    assert_eq!(r.status, 200);
    let body: EventsBody = r.json();
    assert_eq!(body.stage, Stage::Claims);
    assert!(body.events.iter().any(|e| e.event == "guidance received"));

    let r = s.post(&format!("/v1/runs/{id}/advance?until=terminal"), &json!({}));
    assert!(r.json::<EventsBody>().terminal);
    let report = s.get(&format!("/v1/runs/{id}/report"));
    assert!(report.body == std::fs::read(fixtures().join("golden/reports/rgo.doc")).unwrap());
    let doc: ReportDocument = canonical_parse(&report.body).unwrap();
    assert!(doc.claims.iter().any(|c| c.origin == ClaimOrigin::HumanGuided));
}

#[test]
fn skip_via_guidance_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let s = serve(engine(dir.path(), scripted("rgo_novelty"), mock_literature("rgo")));
    let id = s.create(json!({
        "kind": "novelty_assessment",
        "input": experiment(rgo_input()),
        "config": {"pause_for_guidance": true},
    }));
    s.post(&format!("/v1/runs/{id}/advance?until=terminal"), &json!({}));
    let r = s.post(&format!("/v1/runs/{id}/guidance"), &json!({"skip": true}));
    assert_eq!(r.status, 200);
    assert!(!r.json::<EventsBody>().awaiting_guidance);
    let r = s.post(&format!("/v1/runs/{id}/advance?until=terminal"), &json!({}));
    assert_eq!(r.json::<EventsBody>().stage, Stage::Reported);
}

#[test]
fn event_feed_long_polls() {
    let dir = tempfile::tempdir().unwrap();
    let s = replay_server(dir.path(), "mos2");
    let id = s.create(json!({"kind": "novelty_assessment", "input": experiment(mos2_input())}));

    let all: EventsBody = s.get(&format!("/v1/runs/{id}/events?wait_ms=0")).json();
    assert_eq!(all.events.len(), 1);
    let last = all.events[0].seq;

    // nothing new: the poll waits out its window
    let t = Instant::now();
    let empty: EventsBody = s.get(&format!("/v1/runs/{id}/events?after={last}&wait_ms=300")).json();
    assert!(empty.events.is_empty());
    assert!(t.elapsed() >= Duration::from_millis(300));

    // a concurrent advance wakes a waiting poll
    let base = s.base.clone();
    let id2 = id.clone();
    let poller = std::thread::spawn(move || {
        let t = Instant::now();
        let resp = agent().get(&format!("{base}/v1/runs/{id2}/events?after={last}&wait_ms=20000")).call().unwrap();
        (reply(resp).json::<EventsBody>(), t.elapsed())
    });
    std::thread::sleep(Duration::from_millis(200));
    assert_eq!(s.post(&format!("/v1/runs/{id}/advance"), &json!({})).status, 200);
    let (fresh, waited) = poller.join().unwrap();
    assert!(!fresh.events.is_empty());
    assert!(fresh.events.iter().all(|e| e.seq > last));
    assert!(waited < Duration::from_secs(10));
}

#[test]
fn structure_run_serves_dft_files_as_text() {
    let dir = tempfile::tempdir().unwrap();
    let backend = labloop_llm::ReplayBackend::from_path(&fixtures().join("replay/graphene_vacancy.jsonl")).unwrap();
    let s = serve(engine(dir.path(), Arc::new(backend), mock_literature("mos2")));
    let id = s.create(json!({"kind": "structure_simulation", "request": GRAPHENE}));
    let r = s.post(&format!("/v1/runs/{id}/advance?until=terminal"), &json!({}));
    assert_eq!(r.json::<EventsBody>().stage, Stage::Completed);
    for f in ["POSCAR", "INCAR", "KPOINTS"] {
        let r = s.get(&format!("/v1/runs/{id}/artifacts/{f}"));
        assert_eq!((r.status, r.content_type.as_str()), (200, "text/plain"), "{f}");
    }
    let view: ApiRunView = s.get(&format!("/v1/runs/{id}")).json();
    assert!(view.artifacts.iter().any(|a| a.name == "validation_trace.json" && a.media_type == "application/json"));
}

#[test]
fn a_restarted_service_sees_the_same_runs() {
    let dir = tempfile::tempdir().unwrap();
    let s = replay_server(dir.path(), "mos2");
    let id = s.create(json!({"kind": "novelty_assessment", "input": experiment(mos2_input())}));
    s.post(&format!("/v1/runs/{id}/advance"), &json!({}));
    s.post(&format!("/v1/runs/{id}/advance"), &json!({}));
    let before: ApiRunView = s.get(&format!("/v1/runs/{id}")).json();

    let s2 = replay_server(dir.path(), "mos2");
    let after: ApiRunView = s2.get(&format!("/v1/runs/{id}")).json();
    assert_eq!(before, after);
    let list: RunList = s2.get("/v1/runs").json();
    assert_eq!(list.runs, vec![after]);
    let r = s2.post(&format!("/v1/runs/{id}/advance?until=terminal"), &json!({}));
    assert_eq!(r.json::<EventsBody>().stage, Stage::Reported);
}
