//! Shared inputs for the benchmarks: the bundled forest graph and its
//! companion files.

use std::path::PathBuf;

use ldrag_core::pipeline::{load_graphs, LoadedGraph, Pipeline, PipelineConfig, TemplatePaths};
use ldrag_core::LlmConfig;

pub fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

/// Pipeline config over the bundled data with a scripted model and an
/// in-memory index.
pub fn demo_config() -> PipelineConfig {
    let mut config = PipelineConfig {
        graph: "forest.ttl".into(),
        prefixes: Some("prefixes.json".into()),
        inclusion_filter: Some("inclusion_filter.json".into()),
        walk: Default::default(),
        embedder: Default::default(),
        llm: LlmConfig::mock("mocks/demo.json"),
        templates: TemplatePaths {
            structured_query: "prompts/uc1_detailed.json".into(),
            schema_answer: "prompts/uc2_schema.json".into(),
        },
        examples: Default::default(),
        pattern_mapping: "pattern_mapping.json".into(),
        index: None,
        render: Default::default(),
        k_rank: 10,
        k_union: 2,
    };
    config.resolve_paths(&data(""));
    config
}

pub fn graphs() -> LoadedGraph {
    load_graphs(&demo_config()).expect("bundled graph loads")
}

pub fn pipeline() -> Pipeline {
    Pipeline::from_config(&demo_config()).expect("bundled pipeline builds")
}
