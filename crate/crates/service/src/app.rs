//! Router, shared state and request handlers.

use std::sync::{Arc, OnceLock};

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ldrag_core::extract::{build_sparql, validate_query_model};
use ldrag_core::harness::{load_suite, run_suite, HarnessError, SuiteRun};
use ldrag_core::metrics::Scorer;
use ldrag_core::pipeline::{Answer, Pipeline};
use ldrag_core::retrieval::RetrievalResult;
use ldrag_core::subgraph::serialize_context;
use ldrag_core::{Embedder, EmbedderConfig, MetricConfig, MetricReport};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::api::*;
use crate::error::ApiError;
use crate::sparql::{row_count, SparqlClient, SparqlProxyError};

/// Handler state. The pipeline slot is filled once the index is ready;
/// until then pipeline-backed routes answer 503.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    pipeline: OnceLock<Pipeline>,
    sparql: Option<SparqlClient>,
    metric_embedder: Arc<dyn Embedder>,
}

impl AppState {
    pub fn starting(sparql: Option<SparqlClient>) -> Self {
        Self {
            inner: Arc::new(Inner {
                pipeline: OnceLock::new(),
                sparql,
                metric_embedder: EmbedderConfig::default().build().expect("default embedder is valid"),
            }),
        }
    }

    pub fn ready(pipeline: Pipeline, sparql: Option<SparqlClient>) -> Self {
        let state = Self::starting(sparql);
        state.set_pipeline(pipeline);
        state
    }

    /// Installs the pipeline; later calls are ignored.
    pub fn set_pipeline(&self, pipeline: Pipeline) {
        let _ = self.inner.pipeline.set(pipeline);
    }

    pub fn pipeline(&self) -> Option<&Pipeline> {
        self.inner.pipeline.get()
    }

    fn require_pipeline(&self) -> Result<Pipeline, ApiError> {
        self.pipeline().cloned().ok_or_else(ApiError::not_ready)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/ask", post(ask))
        .route("/v1/retrieve", post(retrieve))
        .route("/v1/metrics/compare", post(metrics_compare))
        .route("/v1/sparql/compile", post(sparql_compile))
        .route("/v1/sparql/execute", post(sparql_execute))
        .route("/v1/eval/run", post(eval_run))
        .route("/v1/schema/context", get(schema_context))
        .with_state(state)
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn healthz(State(state): State<AppState>) -> Response {
    match state.pipeline() {
        Some(p) => Json(Health {
            status: "ok".into(),
            triples: Some(p.full_graph().len()),
            indexed: Some(p.index().len()),
            embedder: Some(p.index().fingerprint().to_string()),
        })
        .into_response(),
        None => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(Health {
                status: "starting".into(),
                triples: None,
                indexed: None,
                embedder: None,
            }),
        )
            .into_response(),
    }
}

async fn ask(State(state): State<AppState>, body: Bytes) -> Result<Json<AskResult>, ApiError> {
    let req: AskRequest = parse(&body)?;
    if req.question.trim().is_empty() {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "empty_question",
            "question must not be empty",
        ));
    }
    let pipeline = state.require_pipeline()?;
    let out = blocking(move || Ok(pipeline.ask(&req.question, req.mode, req.shots)?)).await?;
    let raw_text = out.response.text.clone();
    let answer = match out.answer {
        Answer::StructuredQuery { extraction, sparql } => match extraction.model.clone() {
            Some(query_model) if extraction.is_usable() => AskAnswer::StructuredQuery {
                status: extraction.status,
                query_model,
                sparql,
                diagnostics: extraction.diagnostics,
            },
            _ => return Err(ApiError::extraction_invalid(&extraction, Some(raw_text))),
        },
        Answer::SchemaAnswer { text, snippet } => AskAnswer::SchemaAnswer { text, snippet },
    };
    Ok(Json(AskResult {
        mode: out.mode,
        shots: out.shots,
        answer,
        context: ContextPayload {
            ids: out.retrieval.context_ids,
            text: out.retrieval.context_text,
        },
        ranked: out.retrieval.ranked,
        prompt: req.debug.then_some(out.prompt),
        raw_text: req.debug.then_some(raw_text),
        diagnostics: out.diagnostics,
        timings: out.timings,
    }))
}

async fn retrieve(State(state): State<AppState>, body: Bytes) -> Result<Json<RetrievalResult>, ApiError> {
    let req: RetrieveRequest = parse(&body)?;
    let pipeline = state.require_pipeline()?;
    let k_rank = req.k_rank.unwrap_or(pipeline.k_rank());
    let k_union = req.k_union.unwrap_or(pipeline.k_union());
    let result = blocking(move || Ok(pipeline.retrieve(&req.question, k_rank, k_union)?)).await?;
    Ok(Json(result))
}

async fn metrics_compare(State(state): State<AppState>, body: Bytes) -> Result<Json<MetricReport>, ApiError> {
    let req: MetricsRequest = parse(&body)?;
    let mut config = MetricConfig::default();
    if let Some(p) = state.pipeline() {
        config.prefixes.merge(p.prefixes());
    }
    if let Some(beta) = req.beta {
        config.beta = beta;
    }
    if let Some(alpha) = req.alpha {
        config.alpha = alpha;
    }
    let scorer = Scorer::with_embedder(config, state.inner.metric_embedder.clone())
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let report = blocking(move || {
        scorer
            .compare(&req.reference, &req.generated)
            .map_err(|e| ApiError::internal(e.to_string()))
    })
    .await?;
    Ok(Json(report))
}

async fn sparql_compile(State(state): State<AppState>, body: Bytes) -> Result<Json<CompileResponse>, ApiError> {
    let req: CompileRequest = parse(&body)?;
    let pipeline = state.require_pipeline()?;
    let outcome = validate_query_model(&req.model.to_string(), pipeline.full_graph(), pipeline.prefixes());
    let model = match &outcome.model {
        Some(m) if outcome.is_usable() => m.clone(),
        _ => return Err(ApiError::extraction_invalid(&outcome, None)),
    };
    let sparql = build_sparql(&model, pipeline.prefixes(), pipeline.mapping()).map_err(|e| {
        let mut err = ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "not_compilable", e.to_string());
        err.body.error.diagnostics = outcome.diagnostics.clone();
        err
    })?;
    Ok(Json(CompileResponse {
        status: outcome.status,
        query_model: model,
        sparql,
        diagnostics: outcome.diagnostics,
    }))
}

async fn sparql_execute(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: ExecuteRequest = parse(&body)?;
    if req.query.trim().is_empty() {
        return Err(ApiError::bad_request("query must not be empty"));
    }
    if state.inner.sparql.is_none() {
        return Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "sparql_unconfigured",
            "no SPARQL endpoint is configured; set sparql_endpoint in the service config",
        ));
    }
    let st = state.clone();
    let result = blocking(move || Ok(st.inner.sparql.as_ref().expect("checked").select(&req.query))).await?;
    match result {
        Ok(results) => Ok(Json(ExecuteResponse {
            row_count: row_count(&results),
            results,
        })
        .into_response()),
        Err(SparqlProxyError::Endpoint {
            status,
            content_type,
            body,
        }) => {
            let status = StatusCode::from_u16(status).unwrap_or(StatusCode::BAD_GATEWAY);
            let content_type = content_type.unwrap_or_else(|| "text/plain".into());
            Ok((status, [(header::CONTENT_TYPE, content_type)], body).into_response())
        }
        Err(e) => Err(ApiError::new(
            StatusCode::BAD_GATEWAY,
            "sparql_unreachable",
            e.to_string(),
        )),
    }
}

fn harness_error(e: HarnessError) -> ApiError {
    match e {
        HarnessError::Pipeline(p) => p.into(),
        HarnessError::Metric(_) | HarnessError::Retrieval(_) => ApiError::internal(e.to_string()),
        other => ApiError::bad_request(other.to_string()),
    }
}

async fn eval_run(State(state): State<AppState>, body: Bytes) -> Result<Json<SuiteRun>, ApiError> {
    let req: EvalRequest = parse(&body)?;
    let pipeline = state.require_pipeline()?;
    let questions = match (req.questions, req.suite_path) {
        (Some(q), None) => q,
        (None, Some(path)) => load_suite(&path).map_err(harness_error)?,
        _ => return Err(ApiError::bad_request("give exactly one of suite_path or questions")),
    };
    let options = req.options.unwrap_or_default();
    let verdicts = req.verdicts.unwrap_or_default();
    let run = blocking(move || run_suite(&questions, &pipeline, &options, &verdicts).map_err(harness_error)).await?;
    Ok(Json(run))
}

#[derive(Deserialize)]
struct ContextParams {
    ids: String,
}

async fn schema_context(
    State(state): State<AppState>,
    Query(params): Query<ContextParams>,
) -> Result<Json<ContextPayload>, ApiError> {
    let pipeline = state.require_pipeline()?;
    let graph = pipeline.index().graph();
    let mut ids = Vec::new();
    for part in params.ids.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let id: usize = part
            .parse()
            .map_err(|_| ApiError::bad_request(format!("'{part}' is not a triple id")))?;
        if id >= graph.len() {
            return Err(ApiError::bad_request(format!("unknown triple id {id}")));
        }
        ids.push(id);
    }
    if ids.is_empty() {
        return Err(ApiError::bad_request("ids must list at least one triple id"));
    }
    ids.sort_unstable();
    ids.dedup();
    let text = serialize_context(graph, &ids, pipeline.prefixes());
    Ok(Json(ContextPayload { ids, text }))
}
