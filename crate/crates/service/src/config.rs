//! Service configuration: the pipeline settings plus the listen address and
//! an optional downstream SPARQL endpoint. Read from TOML or JSON.

use std::path::{Path, PathBuf};

use ldrag_core::pipeline::{PipelineConfig, PipelineError};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid TOML in {path}: {message}")]
    Toml { path: PathBuf, message: String },
    #[error("invalid JSON in {path}: {message}")]
    Json { path: PathBuf, message: String },
    #[error("invalid SPARQL endpoint '{0}'")]
    SparqlEndpoint(String),
    #[error("invalid listen address '{0}'")]
    Listen(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_sparql_timeout() -> u64 {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
    /// SPARQL protocol endpoint that `/v1/sparql/execute` forwards to.
    #[serde(default)]
    pub sparql_endpoint: Option<String>,
    #[serde(default = "default_sparql_timeout")]
    pub sparql_timeout_secs: u64,
    #[serde(default = "default_listen")]
    pub listen: String,
}

impl ServiceConfig {
    pub fn new(pipeline: PipelineConfig) -> Self {
        Self {
            pipeline,
            sparql_endpoint: None,
            sparql_timeout_secs: default_sparql_timeout(),
            listen: default_listen(),
        }
    }

    /// Loads a `.toml` or `.json` file; relative paths inside it are taken
    /// relative to the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: ServiceConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| ConfigError::Json {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?
        } else {
            toml::from_str(&text).map_err(|e| ConfigError::Toml {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        config.pipeline.resolve_paths(base);
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.pipeline.validate()?;
        if let Some(endpoint) = &self.sparql_endpoint {
            let url = url::Url::parse(endpoint).map_err(|_| ConfigError::SparqlEndpoint(endpoint.clone()))?;
            if !matches!(url.scheme(), "http" | "https") {
                return Err(ConfigError::SparqlEndpoint(endpoint.clone()));
            }
        }
        if self.listen.parse::<std::net::SocketAddr>().is_err() {
            return Err(ConfigError::Listen(self.listen.clone()));
        }
        Ok(())
    }
}
