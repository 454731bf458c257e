//! Request and response bodies of the HTTP API.

use std::path::PathBuf;

use ldrag_core::extract::ExtractionStatus;
use ldrag_core::harness::{HarnessOptions, QuestionSpec, Verdicts};
use ldrag_core::pipeline::{ShotMode, Timings};
use ldrag_core::prompt::PromptMode;
use ldrag_core::retrieval::RankedTriple;
use ldrag_core::{QueryModel, RenderedPrompt};
use serde::{Deserialize, Serialize};
use serde_json::Value;

fn default_mode() -> PromptMode {
    PromptMode::StructuredQuery
}

fn default_shots() -> ShotMode {
    ShotMode::Zero
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskRequest {
    pub question: String,
    #[serde(default = "default_mode")]
    pub mode: PromptMode,
    #[serde(default = "default_shots")]
    pub shots: ShotMode,
    /// Echo the rendered prompt and raw model text.
    #[serde(default)]
    pub debug: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextPayload {
    pub ids: Vec<usize>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AskAnswer {
    StructuredQuery {
        status: ExtractionStatus,
        query_model: QueryModel,
        /// `None` when the model uses a property the mapping cannot compile.
        sparql: Option<String>,
        diagnostics: Vec<String>,
    },
    SchemaAnswer {
        text: String,
        snippet: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskResult {
    pub mode: PromptMode,
    pub shots: ShotMode,
    pub answer: AskAnswer,
    pub context: ContextPayload,
    pub ranked: Vec<RankedTriple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<RenderedPrompt>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_text: Option<String>,
    pub diagnostics: Vec<String>,
    pub timings: Timings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrieveRequest {
    pub question: String,
    #[serde(default)]
    pub k_rank: Option<usize>,
    #[serde(default)]
    pub k_union: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRequest {
    pub reference: Value,
    pub generated: Value,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecuteRequest {
    pub query: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecuteResponse {
    /// The endpoint's SPARQL JSON results, unchanged.
    pub results: Value,
    pub row_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileRequest {
    pub model: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileResponse {
    pub status: ExtractionStatus,
    pub query_model: QueryModel,
    pub sparql: String,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalRequest {
    /// Suite file readable by the service.
    #[serde(default)]
    pub suite_path: Option<PathBuf>,
    /// Inline questions, used instead of `suite_path`.
    #[serde(default)]
    pub questions: Option<Vec<QuestionSpec>>,
    #[serde(default)]
    pub options: Option<HarnessOptions>,
    #[serde(default)]
    pub verdicts: Option<Verdicts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indexed: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedder: Option<String>,
}
