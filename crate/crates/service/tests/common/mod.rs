#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::post;
use axum::{Form, Router};
use ldrag_core::llm::RemoteChat;
use ldrag_core::pipeline::Pipeline;
use ldrag_core::LlmConfig;
use ldrag_service::{router, AppState, ServiceConfig, SparqlClient};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

/// Runs `router` on an ephemeral port in a background runtime.
pub fn spawn(router: Router) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

/// SPARQL protocol stub: canned results for SELECT queries, 400 otherwise.
pub fn sparql_stub() -> &'static str {
    static URL: OnceLock<String> = OnceLock::new();
    URL.get_or_init(|| {
        let canned = std::fs::read_to_string(data("fixtures/sparql/rainfall_results.json")).unwrap();
        let app = Router::new().route(
            "/sparql",
            post(move |Form(form): Form<HashMap<String, String>>| async move {
                let q = form.get("query").cloned().unwrap_or_default();
                if q.contains("SELECT") && q.contains("WHERE") {
                    (
                        StatusCode::OK,
                        [(header::CONTENT_TYPE, "application/sparql-results+json")],
                        canned.clone(),
                    )
                        .into_response()
                } else {
                    (
                        StatusCode::BAD_REQUEST,
                        [(header::CONTENT_TYPE, "text/plain")],
                        "Parse error: expected SELECT ... WHERE",
                    )
                        .into_response()
                }
            }),
        );
        format!("{}/sparql", spawn(app))
    })
}

pub fn closed_port_url(path: &str) -> String {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    drop(listener);
    format!("http://127.0.0.1:{port}{path}")
}

pub fn demo_config() -> ServiceConfig {
    let mut config = ServiceConfig::load(data("ldrag.toml")).unwrap();
    config.pipeline.index = None;
    config
}

pub fn demo_pipeline() -> Pipeline {
    static P: OnceLock<Pipeline> = OnceLock::new();
    P.get_or_init(|| Pipeline::from_config(&demo_config().pipeline).unwrap())
        .clone()
}

fn client(url: String) -> SparqlClient {
    SparqlClient::new(url, Duration::from_secs(5))
}

/// Base URL of a service in the named state.
pub fn server(kind: &str) -> String {
    static SERVERS: OnceLock<std::sync::Mutex<HashMap<String, String>>> = OnceLock::new();
    let mut servers = SERVERS.get_or_init(Default::default).lock().unwrap();
    if let Some(url) = servers.get(kind) {
        return url.clone();
    }
    let state = match kind {
        "ready" => AppState::ready(demo_pipeline(), Some(client(sparql_stub().to_string()))),
        "starting" => AppState::starting(Some(client(sparql_stub().to_string()))),
        "no_sparql" => AppState::ready(demo_pipeline(), None),
        "sparql_down" => AppState::ready(demo_pipeline(), Some(client(closed_port_url("/sparql")))),
        "llm_down" => {
            let cfg = LlmConfig {
                retries: 0,
                timeout_secs: 5,
                ..LlmConfig::remote(closed_port_url("/v1/chat/completions"), "any")
            };
            let llm = Arc::new(RemoteChat::new(cfg).unwrap());
            AppState::ready(demo_pipeline().with_llm(llm), None)
        }
        other => panic!("unknown server kind {other}"),
    };
    let url = spawn(router(state));
    servers.insert(kind.to_string(), url.clone());
    url
}

pub struct Reply {
    pub status: u16,
    pub content_type: Option<String>,
    pub body: String,
}

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(30)))
        .build()
        .into()
}

pub fn call(base: &str, method: &str, path: &str, body: Option<String>) -> Reply {
    let url = format!("{base}{path}");
    let agent = agent();
    let mut response = match (method, body) {
        ("GET", _) => agent.get(&url).call().unwrap(),
        ("POST", Some(b)) => agent
            .post(&url)
            .header("content-type", "application/json")
            .send(b.as_bytes())
            .unwrap(),
        ("POST", None) => agent.post(&url).send_empty().unwrap(),
        (m, _) => panic!("unsupported method {m}"),
    };
    Reply {
        status: response.status().as_u16(),
        content_type: response
            .headers()
            .get("content-type")
            .and_then(|v| v.to_str().ok())
            .map(str::to_string),
        body: response.body_mut().read_to_string().unwrap(),
    }
}

#[derive(Serialize, Deserialize)]
pub struct Fixture {
    #[serde(default = "ready")]
    server: String,
    request: Request,
    response: Expected,
}

fn ready() -> String {
    "ready".into()
}

#[derive(Serialize, Deserialize)]
pub struct Request {
    method: String,
    path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    body: Option<Value>,
    /// Sent verbatim instead of `body`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    raw: Option<String>,
}

#[derive(Serialize, Deserialize)]
pub struct Expected {
    status: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    body: Option<Value>,
    /// Expected non-JSON body.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

const VOLATILE: [&str; 3] = ["timings", "latencies", "latency_ms"];

fn scrub(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.retain(|k, _| !VOLATILE.contains(&k.as_str()));
            map.values_mut().for_each(scrub);
        }
        Value::Array(items) => items.iter_mut().for_each(scrub),
        _ => {}
    }
}

/// Replays every fixture under `data/fixtures/service`. With `bless` the
/// expected responses are rewritten instead of compared. Returns the number
/// of fixtures, or one message per mismatch.
pub fn replay_fixtures(bless: bool) -> Result<usize, Vec<String>> {
    let mut paths: Vec<_> = std::fs::read_dir(data("fixtures/service"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();

    let mut failures = Vec::new();
    for path in &paths {
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        let mut fixture: Fixture = match serde_json::from_str(&std::fs::read_to_string(path).unwrap()) {
            Ok(f) => f,
            Err(e) => {
                failures.push(format!("{name}: {e}"));
                continue;
            }
        };
        let body = fixture
            .request
            .raw
            .clone()
            .or_else(|| fixture.request.body.as_ref().map(Value::to_string));
        let reply = call(
            &server(&fixture.server),
            &fixture.request.method,
            &fixture.request.path,
            body,
        );
        let json = serde_json::from_str::<Value>(&reply.body).ok().map(|mut v| {
            scrub(&mut v);
            v
        });
        if bless {
            fixture.response = Expected {
                status: reply.status,
                text: json.is_none().then(|| reply.body.clone()),
                body: json,
            };
            let mut out = serde_json::to_string_pretty(&fixture).unwrap();
            out.push('\n');
            std::fs::write(path, out).unwrap();
            continue;
        }
        if reply.status != fixture.response.status {
            failures.push(format!(
                "{name}: status {} != {}\n{}",
                reply.status, fixture.response.status, reply.body
            ));
            continue;
        }
        match (&fixture.response.body, &fixture.response.text) {
            (Some(want), _) if json.as_ref() != Some(want) => failures.push(format!(
                "{name}: body differs\n got: {}\nwant: {want}",
                json.map_or(reply.body.clone(), |j| j.to_string())
            )),
            (None, Some(want)) if &reply.body != want => {
                failures.push(format!("{name}: text differs\n got: {}\nwant: {want}", reply.body))
            }
            _ => {}
        }
        if reply.status >= 400
            && fixture.response.body.is_some()
            && reply.content_type.as_deref() != Some("application/json")
        {
            failures.push(format!("{name}: error body has content type {:?}", reply.content_type));
        }
    }
    if failures.is_empty() {
        Ok(paths.len())
    } else {
        Err(failures)
    }
}
