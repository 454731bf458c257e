//! Text embedding backends and cosine similarity.
//!
//! The builtin backend is a hashed bag of tokens: lowercase the text, split
//! on every non-alphanumeric character, hash each token with 64-bit FNV-1a,
//! count tokens into `hash % dimension` buckets and L2-normalize. It is
//! deterministic across platforms and needs no model files.
//!
//! The remote backend speaks the OpenAI-compatible embeddings protocol:
//! `POST { "model", "input": [..] }` returning `{ "data": [{ "embedding": [..] }] }`.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub const DEFAULT_DIMENSION: usize = 256;
pub const MIN_BUILTIN_DIMENSION: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("invalid embedder configuration: {0}")]
    InvalidConfig(String),
    #[error("environment variable {0} holding the API key is not set")]
    MissingCredentials(String),
    #[error("embedding request timed out")]
    Timeout,
    #[error("embedding transport error: {0}")]
    Transport(String),
    #[error("embedding service returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed embedding response: {0}")]
    Malformed(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(dimension: usize) -> Self {
        Self(vec![0.0; dimension])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }
}

/// `dot(a, b) / (|a| |b|)`, or 0 when either vector has zero norm.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    if a.dimension() != b.dimension() {
        return Err(EmbedError::DimensionMismatch {
            expected: a.dimension(),
            found: b.dimension(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }

    /// Identifies the vector space; indexes refuse queries from another one.
    fn fingerprint(&self) -> String;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbedderConfig {
    Builtin {
        #[serde(default = "default_dimension")]
        dimension: usize,
    },
    Remote(RemoteEmbedderConfig),
}

fn default_dimension() -> usize {
    DEFAULT_DIMENSION
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig::Builtin {
            dimension: DEFAULT_DIMENSION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteEmbedderConfig {
    /// Full URL of the embeddings endpoint, e.g. `https://host/v1/embeddings`.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding a bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Inputs longer than this many characters are cut before sending.
    #[serde(default = "default_max_chars")]
    pub max_chars: usize,
}

fn default_timeout_secs() -> u64 {
    30
}

fn default_max_chars() -> usize {
    2000
}

impl EmbedderConfig {
    pub fn builtin(dimension: usize) -> Self {
        EmbedderConfig::Builtin { dimension }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        match self {
            EmbedderConfig::Builtin { dimension } if *dimension < MIN_BUILTIN_DIMENSION => {
                Err(EmbedError::InvalidConfig(format!(
                    "builtin dimension {dimension} is below {MIN_BUILTIN_DIMENSION}"
                )))
            }
            EmbedderConfig::Builtin { .. } => Ok(()),
            EmbedderConfig::Remote(remote) => {
                let url = url::Url::parse(&remote.endpoint)
                    .map_err(|e| EmbedError::InvalidConfig(format!("endpoint '{}': {e}", remote.endpoint)))?;
                if !matches!(url.scheme(), "http" | "https") {
                    return Err(EmbedError::InvalidConfig(format!(
                        "endpoint scheme '{}' is not http(s)",
                        url.scheme()
                    )));
                }
                if remote.model.is_empty() {
                    return Err(EmbedError::InvalidConfig("model name is empty".into()));
                }
                Ok(())
            }
        }
    }

    pub fn build(&self) -> Result<Arc<dyn Embedder>, EmbedError> {
        self.validate()?;
        Ok(match self {
            EmbedderConfig::Builtin { dimension } => Arc::new(BuiltinEmbedder::new(*dimension)?),
            EmbedderConfig::Remote(remote) => Arc::new(RemoteEmbedder::new(remote.clone())?),
        })
    }
}

/// Builds the configured backend and embeds one text.
pub fn embed_text(text: &str, config: &EmbedderConfig) -> Result<EmbeddingVector, EmbedError> {
    config.build()?.embed(text)
}

#[derive(Debug, Clone)]
pub struct BuiltinEmbedder {
    dimension: usize,
}

impl BuiltinEmbedder {
    pub fn new(dimension: usize) -> Result<Self, EmbedError> {
        EmbedderConfig::builtin(dimension).validate()?;
        Ok(Self { dimension })
    }
}

impl Default for BuiltinEmbedder {
    fn default() -> Self {
        Self {
            dimension: DEFAULT_DIMENSION,
        }
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |hash, &b| (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Lowercased maximal runs of alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

impl Embedder for BuiltinEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut counts = vec![0.0; self.dimension];
        for token in tokenize(text) {
            let bucket = (fnv1a64(token.as_bytes()) % self.dimension as u64) as usize;
            counts[bucket] += 1.0;
        }
        let v = EmbeddingVector(counts);
        let norm = v.norm();
        Ok(if norm == 0.0 { v } else { v.scaled(1.0 / norm) })
    }

    fn fingerprint(&self) -> String {
        format!("builtin-fnv1a64-d{}", self.dimension)
    }
}

pub struct RemoteEmbedder {
    config: RemoteEmbedderConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
    dimension: Mutex<Option<usize>>,
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: Vec<&'a str>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteEmbedderConfig) -> Result<Self, EmbedError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| EmbedError::MissingCredentials(var.clone()))?),
            None => None,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            config,
            agent,
            api_key,
            dimension: Mutex::new(None),
        })
    }

    fn truncate<'a>(&self, text: &'a str) -> &'a str {
        match text.char_indices().nth(self.config.max_chars) {
            Some((cut, _)) => &text[..cut],
            None => text,
        }
    }

    fn check_dimension(&self, found: usize) -> Result<(), EmbedError> {
        let mut dim = self.dimension.lock().expect("dimension lock");
        match *dim {
            Some(expected) if expected != found => Err(EmbedError::DimensionMismatch { expected, found }),
            _ => {
                *dim = Some(found);
                Ok(())
            }
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut out = self.embed_batch(&[text.to_string()])?;
        Ok(out.remove(0))
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let body = EmbeddingRequest {
            model: &self.config.model,
            input: texts.iter().map(|t| self.truncate(t)).collect(),
        };
        let mut request = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send_json(&body).map_err(|e| match e {
            ureq::Error::Timeout(_) => EmbedError::Timeout,
            other => EmbedError::Transport(other.to_string()),
        })?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(EmbedError::Status { status, body: text });
        }
        let mut parsed: EmbeddingResponse =
            serde_json::from_str(&text).map_err(|e| EmbedError::Malformed(e.to_string()))?;
        if parsed.data.len() != texts.len() {
            return Err(EmbedError::Malformed(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                parsed.data.len()
            )));
        }
        parsed.data.sort_by_key(|d| d.index.unwrap_or(0));
        let mut out = Vec::with_capacity(texts.len());
        for datum in parsed.data {
            if datum.embedding.is_empty() {
                return Err(EmbedError::Malformed("empty embedding".into()));
            }
            self.check_dimension(datum.embedding.len())?;
            out.push(EmbeddingVector(datum.embedding));
        }
        Ok(out)
    }

    fn fingerprint(&self) -> String {
        format!("remote:{}@{}", self.config.model, self.config.endpoint)
    }
}
