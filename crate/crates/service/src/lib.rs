//! HTTP facade over the ldrag pipeline.
//!
//! Routes: `POST /v1/ask`, `POST /v1/retrieve`, `POST /v1/metrics/compare`,
//! `POST /v1/sparql/compile`, `POST /v1/sparql/execute`, `POST /v1/eval/run`,
//! `GET /v1/schema/context?ids=..` and `GET /healthz`. Pipeline work runs on
//! the blocking pool; the pipeline itself is immutable and shared.

pub mod api;
pub mod app;
pub mod config;
pub mod error;
pub mod sparql;

use std::future::Future;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use ldrag_core::pipeline::Pipeline;

pub use app::{router, AppState};
pub use config::{ConfigError, ServiceConfig};
pub use error::{ApiError, ErrorBody};
pub use sparql::SparqlClient;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("pipeline failed to start: {0}")]
    Startup(String),
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

pub fn sparql_client(config: &ServiceConfig) -> Option<SparqlClient> {
    config
        .sparql_endpoint
        .as_ref()
        .map(|e| SparqlClient::new(e.clone(), Duration::from_secs(config.sparql_timeout_secs)))
}

/// Validates the config, starts listening, builds the pipeline in the
/// background and serves until `shutdown` resolves. In-flight requests
/// finish before this returns. A pipeline that fails to build stops the
/// server with [`ServeError::Startup`].
pub async fn serve(
    config: ServiceConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    config.validate()?;
    let listener = tokio::net::TcpListener::bind(&config.listen)
        .await
        .map_err(|source| ServeError::Bind {
            addr: config.listen.clone(),
            source,
        })?;
    let state = AppState::starting(sparql_client(&config));
    let loader = state.clone();
    let pipeline_config = config.pipeline.clone();
    let build = tokio::task::spawn_blocking(move || Pipeline::from_config(&pipeline_config));
    let failure: Arc<Mutex<Option<String>>> = Arc::default();
    let failed = Arc::new(tokio::sync::Notify::new());
    {
        let failure = failure.clone();
        let failed = failed.clone();
        tokio::spawn(async move {
            let message = match build.await {
                Ok(Ok(p)) => {
                    tracing::info!(
                        triples = p.full_graph().len(),
                        indexed = p.index().len(),
                        "pipeline ready"
                    );
                    loader.set_pipeline(p);
                    return;
                }
                Ok(Err(e)) => e.to_string(),
                Err(e) => format!("loader panicked: {e}"),
            };
            tracing::error!("pipeline failed to start: {message}");
            *failure.lock().expect("failure lock") = Some(message);
            failed.notify_one();
        });
    }
    tracing::info!("listening on {}", config.listen);
    let stop = async move {
        tokio::select! {
            _ = shutdown => {}
            _ = failed.notified() => {}
        }
    };
    axum::serve(listener, router(state))
        .with_graceful_shutdown(stop)
        .await?;
    if let Some(message) = failure.lock().expect("failure lock").take() {
        return Err(ServeError::Startup(message));
    }
    Ok(())
}
