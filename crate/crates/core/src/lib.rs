//! Retrieval-augmented conversational querying over RDF schema graphs.
//!
//! The pipeline runs: parse and filter an RDF graph, split it into per-triple
//! subgraphs, embed annotated triples, retrieve the subgraphs relevant to a
//! question, render a prompt, call a chat model, recover and validate the
//! structured query model, and compile it to SPARQL. The [`metrics`] and
//! [`harness`] modules score model outputs against references.

pub mod embedder;
pub mod extract;
pub mod harness;
pub mod llm;
pub mod metrics;
pub mod pipeline;
pub mod prompt;
pub mod rdf;
pub mod retrieval;
pub mod subgraph;

pub use embedder::{cosine_similarity, Embedder, EmbedderConfig, EmbeddingVector};
pub use extract::{ExtractionOutcome, ExtractionStatus, PatternMapping, QueryModel};
pub use llm::{ChatModel, ChatResponse, LlmConfig, MockScript};
pub use metrics::{MetricConfig, MetricReport};
pub use prompt::{PromptTemplate, RenderedPrompt};
pub use rdf::{Graph, InclusionFilter, PrefixMap, Term, Triple};
pub use retrieval::{RetrievalResult, VectorIndex};
pub use subgraph::{SubgraphMap, WalkConfig};
