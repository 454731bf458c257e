//! End-to-end question answering: retrieve context, render, call the model,
//! then extract and compile (structured queries) or flag snippets (schema
//! answers).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::embedder::{EmbedError, Embedder, EmbedderConfig};
use crate::extract::{build_sparql, extract_query_model, ExtractionOutcome, MappingError, PatternMapping};
use crate::llm::{ChatModel, ChatResponse, LlmConfig, LlmError};
use crate::metrics::SnippetDetector;
use crate::prompt::{
    check_examples, render_with, FewShotExample, PromptError, PromptMode, PromptTemplate, RenderOptions, RenderedPrompt,
};
use crate::rdf::{load_graph, Graph, InclusionFilter, PrefixMap, RdfError};
use crate::retrieval::{build_index, RetrievalError, RetrievalResult, VectorIndex, DEFAULT_K_RANK, DEFAULT_K_UNION};
use crate::subgraph::{build_subgraphs, WalkConfig};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("question must not be empty")]
    EmptyQuestion,
    #[error(transparent)]
    Rdf(#[from] RdfError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// Whether the failure came from a remote model or embedding service.
    pub fn is_upstream(&self) -> bool {
        match self {
            PipelineError::Llm(e) => !matches!(e, LlmError::InvalidConfig(_) | LlmError::Script(_)),
            PipelineError::Embed(_) => true,
            PipelineError::Retrieval(RetrievalError::Embed(_)) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShotMode {
    Zero,
    Few,
}

impl ShotMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ShotMode::Zero => "zero",
            ShotMode::Few => "few",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplatePaths {
    pub structured_query: PathBuf,
    pub schema_answer: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExamplePaths {
    #[serde(default)]
    pub structured_query: Option<PathBuf>,
    #[serde(default)]
    pub schema_answer: Option<PathBuf>,
}

fn default_k_rank() -> usize {
    DEFAULT_K_RANK
}

fn default_k_union() -> usize {
    DEFAULT_K_UNION
}

/// File locations and settings for a [`Pipeline`]. Relative paths are taken
/// relative to the directory passed to [`PipelineConfig::resolve_paths`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub graph: PathBuf,
    #[serde(default)]
    pub prefixes: Option<PathBuf>,
    #[serde(default)]
    pub inclusion_filter: Option<PathBuf>,
    #[serde(default)]
    pub walk: WalkConfig,
    #[serde(default)]
    pub embedder: EmbedderConfig,
    pub llm: LlmConfig,
    pub templates: TemplatePaths,
    #[serde(default)]
    pub examples: ExamplePaths,
    pub pattern_mapping: PathBuf,
    /// Prebuilt index; rebuilt in memory when absent.
    #[serde(default)]
    pub index: Option<PathBuf>,
    #[serde(default)]
    pub render: RenderOptions,
    #[serde(default = "default_k_rank")]
    pub k_rank: usize,
    #[serde(default = "default_k_union")]
    pub k_union: usize,
}

impl PipelineConfig {
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.graph);
        fix(&mut self.templates.structured_query);
        fix(&mut self.templates.schema_answer);
        fix(&mut self.pattern_mapping);
        for p in [
            &mut self.prefixes,
            &mut self.inclusion_filter,
            &mut self.examples.structured_query,
            &mut self.examples.schema_answer,
            &mut self.index,
            &mut self.llm.mock_script,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    /// Files that must exist before the pipeline can start.
    pub fn required_files(&self) -> Vec<&Path> {
        let mut files = vec![
            self.graph.as_path(),
            self.templates.structured_query.as_path(),
            self.templates.schema_answer.as_path(),
            self.pattern_mapping.as_path(),
        ];
        for p in [
            &self.prefixes,
            &self.inclusion_filter,
            &self.examples.structured_query,
            &self.examples.schema_answer,
            &self.llm.mock_script,
        ]
        .into_iter()
        .flatten()
        {
            files.push(p);
        }
        files
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        for f in self.required_files() {
            if !f.is_file() {
                return Err(PipelineError::Config(format!("file not found: {}", f.display())));
            }
        }
        if self.walk.depth == 0 {
            return Err(PipelineError::Config("walk depth must be at least 1".into()));
        }
        if self.k_union == 0 || self.k_rank < self.k_union {
            return Err(PipelineError::Config(format!(
                "need 1 <= k_union <= k_rank, got k_union={} k_rank={}",
                self.k_union, self.k_rank
            )));
        }
        self.embedder.validate()?;
        self.llm.validate()?;
        Ok(())
    }
}

/// The graph, its filtered form and the combined prefix map.
pub struct LoadedGraph {
    pub full: Graph,
    pub filtered: Graph,
    pub prefixes: PrefixMap,
}

pub fn load_graphs(config: &PipelineConfig) -> Result<LoadedGraph, PipelineError> {
    let full = load_graph(&config.graph)?;
    let mut prefixes = full.prefixes().clone();
    if let Some(path) = &config.prefixes {
        prefixes.merge(&PrefixMap::from_json_file(path)?);
    }
    prefixes.merge(&PrefixMap::common());
    let filtered = match &config.inclusion_filter {
        Some(path) => InclusionFilter::from_json_file(path)?.apply(&full),
        None => full.clone(),
    };
    Ok(LoadedGraph {
        full,
        filtered,
        prefixes,
    })
}

/// Builds the retrieval index for the configured graph and embedder.
pub fn build_index_for(
    config: &PipelineConfig,
    graphs: &LoadedGraph,
    embedder: &dyn Embedder,
) -> Result<VectorIndex, PipelineError> {
    let map =
        build_subgraphs(&graphs.filtered, config.walk).map_err(|e| PipelineError::Config(format!("subgraphs: {e}")))?;
    Ok(build_index(&graphs.filtered, &map, embedder)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
#[allow(clippy::large_enum_variant)]
pub enum Answer {
    StructuredQuery {
        extraction: ExtractionOutcome,
        sparql: Option<String>,
    },
    SchemaAnswer {
        text: String,
        snippet: bool,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub retrieve_ms: u64,
    pub render_ms: u64,
    pub llm_ms: u64,
    pub extract_ms: u64,
    pub total_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskOutcome {
    pub mode: PromptMode,
    pub shots: ShotMode,
    pub retrieval: RetrievalResult,
    pub prompt: RenderedPrompt,
    pub response: ChatResponse,
    pub answer: Answer,
    /// Problems found after extraction, e.g. an unmapped property.
    pub diagnostics: Vec<String>,
    pub timings: Timings,
}

impl AskOutcome {
    pub fn extraction(&self) -> Option<&ExtractionOutcome> {
        match &self.answer {
            Answer::StructuredQuery { extraction, .. } => Some(extraction),
            Answer::SchemaAnswer { .. } => None,
        }
    }
}

fn ms(since: Instant) -> u64 {
    since.elapsed().as_millis() as u64
}

/// Shared, immutable pipeline state. Cheap to clone.
#[derive(Clone)]
pub struct Pipeline {
    full_graph: Arc<Graph>,
    prefixes: Arc<PrefixMap>,
    index: Arc<VectorIndex>,
    embedder: Arc<dyn Embedder>,
    llm: Arc<dyn ChatModel>,
    templates: Arc<BTreeMap<PromptMode, PromptTemplate>>,
    examples: Arc<BTreeMap<PromptMode, Vec<FewShotExample>>>,
    mapping: Arc<PatternMapping>,
    detector: Arc<SnippetDetector>,
    render: RenderOptions,
    k_rank: usize,
    k_union: usize,
}

impl Pipeline {
    pub fn from_config(config: &PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let graphs = load_graphs(config)?;
        let embedder = config.embedder.build()?;
        let index = match &config.index {
            Some(path) if path.is_file() => {
                let index = VectorIndex::load(path)?;
                if index.fingerprint() != embedder.fingerprint() {
                    return Err(RetrievalError::FingerprintMismatch {
                        expected: index.fingerprint().to_string(),
                        found: embedder.fingerprint(),
                    }
                    .into());
                }
                index
            }
            _ => build_index_for(config, &graphs, embedder.as_ref())?,
        };

        let mut templates = BTreeMap::new();
        for (mode, path) in [
            (PromptMode::StructuredQuery, &config.templates.structured_query),
            (PromptMode::SchemaAnswer, &config.templates.schema_answer),
        ] {
            let t = PromptTemplate::from_json_file(path)?;
            if t.mode != mode {
                return Err(PipelineError::Config(format!(
                    "template {} has mode {:?}, expected {:?}",
                    path.display(),
                    t.mode,
                    mode
                )));
            }
            templates.insert(mode, t);
        }
        let mut examples = BTreeMap::new();
        for (mode, path) in [
            (PromptMode::StructuredQuery, &config.examples.structured_query),
            (PromptMode::SchemaAnswer, &config.examples.schema_answer),
        ] {
            if let Some(path) = path {
                examples.insert(mode, crate::prompt::load_examples(path, mode)?);
            }
        }
        let mapping = PatternMapping::from_json_file(&config.pattern_mapping)?;
        let llm = config.llm.build()?;

        Ok(Self {
            detector: Arc::new(SnippetDetector::with_prefixes(&graphs.prefixes)),
            full_graph: Arc::new(graphs.full),
            prefixes: Arc::new(graphs.prefixes),
            index: Arc::new(index),
            embedder,
            llm,
            templates: Arc::new(templates),
            examples: Arc::new(examples),
            mapping: Arc::new(mapping),
            render: config.render.clone(),
            k_rank: config.k_rank,
            k_union: config.k_union,
        })
    }

    /// Same pipeline with a different chat model.
    pub fn with_llm(&self, llm: Arc<dyn ChatModel>) -> Self {
        Self { llm, ..self.clone() }
    }

    /// Same pipeline with `template` replacing the one for its mode.
    pub fn with_template(&self, template: PromptTemplate) -> Result<Self, PipelineError> {
        template.validate()?;
        let mut templates = (*self.templates).clone();
        templates.insert(template.mode, template);
        Ok(Self {
            templates: Arc::new(templates),
            ..self.clone()
        })
    }

    pub fn with_examples(&self, mode: PromptMode, examples: Vec<FewShotExample>) -> Result<Self, PipelineError> {
        check_examples(&examples, mode)?;
        let mut all = (*self.examples).clone();
        all.insert(mode, examples);
        Ok(Self {
            examples: Arc::new(all),
            ..self.clone()
        })
    }

    pub fn with_render_options(&self, render: RenderOptions) -> Self {
        Self { render, ..self.clone() }
    }

    pub fn full_graph(&self) -> &Graph {
        &self.full_graph
    }

    pub fn prefixes(&self) -> &PrefixMap {
        &self.prefixes
    }

    pub fn index(&self) -> &VectorIndex {
        &self.index
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    pub fn mapping(&self) -> &PatternMapping {
        &self.mapping
    }

    pub fn template(&self, mode: PromptMode) -> &PromptTemplate {
        &self.templates[&mode]
    }

    pub fn detector(&self) -> &SnippetDetector {
        &self.detector
    }

    pub fn k_rank(&self) -> usize {
        self.k_rank
    }

    pub fn k_union(&self) -> usize {
        self.k_union
    }

    pub fn retrieve(&self, question: &str, k_rank: usize, k_union: usize) -> Result<RetrievalResult, PipelineError> {
        if question.trim().is_empty() {
            return Err(PipelineError::EmptyQuestion);
        }
        Ok(self.index.retrieve(self.embedder.as_ref(), question, k_rank, k_union)?)
    }

    /// Extracts a query model from raw model output and compiles it.
    pub fn interpret(&self, llm_text: &str) -> (ExtractionOutcome, Option<String>, Vec<String>) {
        let extraction = extract_query_model(llm_text, &self.full_graph, &self.prefixes);
        let mut diagnostics = Vec::new();
        let sparql = match &extraction.model {
            Some(model) if extraction.is_usable() => match build_sparql(model, &self.prefixes, &self.mapping) {
                Ok(q) => Some(q),
                Err(e) => {
                    diagnostics.push(format!("SPARQL compilation failed: {e}"));
                    None
                }
            },
            _ => None,
        };
        (extraction, sparql, diagnostics)
    }

    pub fn ask(&self, question: &str, mode: PromptMode, shots: ShotMode) -> Result<AskOutcome, PipelineError> {
        let start = Instant::now();
        let mut timings = Timings::default();

        let t = Instant::now();
        let retrieval = self.retrieve(question, self.k_rank, self.k_union)?;
        timings.retrieve_ms = ms(t);

        let t = Instant::now();
        let examples: &[FewShotExample] = match shots {
            ShotMode::Zero => &[],
            ShotMode::Few => self.examples.get(&mode).map(Vec::as_slice).unwrap_or(&[]),
        };
        let prompt = render_with(
            self.template(mode),
            &retrieval.context_text,
            question,
            examples,
            &self.render,
        )?;
        timings.render_ms = ms(t);

        let t = Instant::now();
        let response = self.llm.complete(&prompt)?;
        timings.llm_ms = ms(t);

        let t = Instant::now();
        let mut diagnostics = Vec::new();
        let answer = match mode {
            PromptMode::StructuredQuery => {
                let (extraction, sparql, diag) = self.interpret(&response.text);
                diagnostics = diag;
                Answer::StructuredQuery { extraction, sparql }
            }
            PromptMode::SchemaAnswer => Answer::SchemaAnswer {
                snippet: self.detector.detect(&response.text),
                text: response.text.clone(),
            },
        };
        timings.extract_ms = ms(t);
        timings.total_ms = ms(start);

        Ok(AskOutcome {
            mode,
            shots,
            retrieval,
            prompt,
            response,
            answer,
            diagnostics,
            timings,
        })
    }
}
