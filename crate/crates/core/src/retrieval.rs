//! Exact cosine search over annotated triples.
//!
//! Each triple becomes a document whose text joins the labels of its terms
//! with the comments of its subject and object. A query is scored against
//! every document; the subgraphs of the best `k_union` triples are merged
//! into the context handed to the prompt.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedder::{cosine_similarity, EmbedError, Embedder, EmbeddingVector};
use crate::rdf::{Graph, Term, RDFS_COMMENT, RDFS_LABEL};
use crate::subgraph::{serialize_context, union_context, SubgraphError, SubgraphMap, WalkConfig};

pub const DEFAULT_K_RANK: usize = 10;
pub const DEFAULT_K_UNION: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Subgraph(#[from] SubgraphError),
    #[error("the index has no documents")]
    EmptyIndex,
    #[error("invalid retrieval parameters: k_rank={k_rank}, k_union={k_union}")]
    InvalidK { k_rank: usize, k_union: usize },
    #[error("embedder '{found}' does not match the index embedder '{expected}'")]
    FingerprintMismatch { expected: String, found: String },
    #[error("index does not match its graph: {0}")]
    Inconsistent(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid index file: {0}")]
    Json(#[from] serde_json::Error),
}

/// Label of `term`: its `rdfs:label` if the graph has one, otherwise the local
/// name of its CURIE (IRIs), the label (blank nodes) or the lexical form.
pub fn label_of(graph: &Graph, term: &Term) -> String {
    if !term.is_literal() {
        if let Some(label) = annotation(graph, term, RDFS_LABEL) {
            return label.to_string();
        }
    }
    match term {
        Term::Iri { value } => local_name(graph, value),
        Term::BlankNode { value } | Term::Literal { value, .. } => value.clone(),
    }
}

fn annotation<'g>(graph: &'g Graph, term: &Term, predicate: &str) -> Option<&'g str> {
    graph
        .iter()
        .find(|t| t.subject == *term && t.predicate.as_iri() == Some(predicate) && t.object.is_literal())
        .map(|t| t.object.value())
}

fn local_name(graph: &Graph, iri: &str) -> String {
    let local = match graph.prefixes().split(iri) {
        Some((_, local)) if !local.is_empty() => local,
        _ => iri
            .trim_end_matches(['/', '#'])
            .rsplit(['/', '#', ':'])
            .next()
            .unwrap_or(iri),
    };
    if local.is_empty() {
        iri.to_string()
    } else {
        local.to_string()
    }
}

/// Text embedded for a triple: label(subject), label(predicate),
/// label-or-lexical(object), comment(subject), comment(object if IRI).
pub fn annotation_text(graph: &Graph, triple_id: usize) -> String {
    let Some(t) = graph.get(triple_id) else {
        return String::new();
    };
    let mut parts = vec![
        label_of(graph, &t.subject),
        label_of(graph, &t.predicate),
        label_of(graph, &t.object),
    ];
    if let Some(c) = annotation(graph, &t.subject, RDFS_COMMENT) {
        parts.push(c.to_string());
    }
    if t.object.is_iri() {
        if let Some(c) = annotation(graph, &t.object, RDFS_COMMENT) {
            parts.push(c.to_string());
        }
    }
    parts.retain(|p| !p.is_empty());
    parts.join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleDocument {
    pub triple_id: usize,
    pub text: String,
    pub vector: EmbeddingVector,
}

/// In-process exact-search index. Carries its graph and subgraph map so a
/// persisted index can answer queries without the source files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorIndex {
    fingerprint: String,
    walk: WalkConfig,
    documents: Vec<TripleDocument>,
    subgraphs: SubgraphMap,
    graph: Graph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedTriple {
    pub triple_id: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub ranked: Vec<RankedTriple>,
    pub context_ids: Vec<usize>,
    pub context_text: String,
}

/// One entry of a labeled retrieval suite file: `{ "query": "...", "gold": [ids] }`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledQuery {
    pub query: String,
    pub gold: BTreeSet<usize>,
}

pub fn load_labeled_suite(path: impl AsRef<Path>) -> Result<Vec<LabeledQuery>, RetrievalError> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

pub fn build_index(graph: &Graph, map: &SubgraphMap, embedder: &dyn Embedder) -> Result<VectorIndex, RetrievalError> {
    if map.len() != graph.len() {
        return Err(RetrievalError::Inconsistent(format!(
            "{} subgraphs for {} triples",
            map.len(),
            graph.len()
        )));
    }
    let texts: Vec<String> = (0..graph.len()).map(|id| annotation_text(graph, id)).collect();
    let vectors = embedder.embed_batch(&texts)?;
    let documents = texts
        .into_iter()
        .zip(vectors)
        .enumerate()
        .map(|(triple_id, (text, vector))| TripleDocument {
            triple_id,
            text,
            vector,
        })
        .collect();
    Ok(VectorIndex {
        fingerprint: embedder.fingerprint(),
        walk: map.config(),
        documents,
        subgraphs: map.clone(),
        graph: graph.clone(),
    })
}

impl VectorIndex {
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn walk_config(&self) -> WalkConfig {
        self.walk
    }

    pub fn documents(&self) -> &[TripleDocument] {
        &self.documents
    }

    pub fn subgraphs(&self) -> &SubgraphMap {
        &self.subgraphs
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RetrievalError> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RetrievalError> {
        let index: VectorIndex = serde_json::from_slice(&std::fs::read(path)?)?;
        index.check()?;
        Ok(index)
    }

    fn check(&self) -> Result<(), RetrievalError> {
        self.graph
            .check()
            .map_err(|e| RetrievalError::Inconsistent(e.to_string()))?;
        if self.subgraphs.len() != self.graph.len() {
            return Err(RetrievalError::Inconsistent("subgraph count".into()));
        }
        let dim = self.documents.first().map(|d| d.vector.dimension());
        for (i, d) in self.documents.iter().enumerate() {
            if d.triple_id != i || d.triple_id >= self.graph.len() {
                return Err(RetrievalError::Inconsistent(format!("document {i}")));
            }
            if Some(d.vector.dimension()) != dim {
                return Err(RetrievalError::Inconsistent(format!(
                    "document {i} has dimension {}",
                    d.vector.dimension()
                )));
            }
        }
        Ok(())
    }

    fn check_embedder(&self, embedder: &dyn Embedder) -> Result<(), RetrievalError> {
        let found = embedder.fingerprint();
        if found != self.fingerprint {
            return Err(RetrievalError::FingerprintMismatch {
                expected: self.fingerprint.clone(),
                found,
            });
        }
        Ok(())
    }

    /// Scores every document against `query`, descending by score with ties
    /// broken by ascending triple id.
    pub fn rank(&self, embedder: &dyn Embedder, query: &str) -> Result<Vec<RankedTriple>, RetrievalError> {
        if self.documents.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        self.check_embedder(embedder)?;
        let q = embedder.embed(query)?;
        let mut ranked = self
            .documents
            .iter()
            .map(|d| {
                Ok(RankedTriple {
                    triple_id: d.triple_id,
                    score: cosine_similarity(&q, &d.vector)?,
                })
            })
            .collect::<Result<Vec<_>, EmbedError>>()?;
        ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.triple_id.cmp(&b.triple_id)));
        Ok(ranked)
    }

    pub fn retrieve(
        &self,
        embedder: &dyn Embedder,
        query: &str,
        k_rank: usize,
        k_union: usize,
    ) -> Result<RetrievalResult, RetrievalError> {
        if k_union == 0 || k_rank < k_union {
            return Err(RetrievalError::InvalidK { k_rank, k_union });
        }
        let mut ranked = self.rank(embedder, query)?;
        let seeds: Vec<usize> = ranked.iter().take(k_union).map(|r| r.triple_id).collect();
        ranked.truncate(k_rank);
        let context_ids = union_context(&self.subgraphs, &seeds)?;
        let context_text = serialize_context(&self.graph, &context_ids, self.graph.prefixes());
        Ok(RetrievalResult {
            ranked,
            context_ids,
            context_text,
        })
    }

    /// Fraction of queries whose gold triples all fall inside the retrieved
    /// context.
    pub fn retrieval_accuracy(
        &self,
        embedder: &dyn Embedder,
        suite: &[LabeledQuery],
        k_union: usize,
    ) -> Result<f64, RetrievalError> {
        if suite.is_empty() {
            return Ok(0.0);
        }
        let mut correct = 0usize;
        for q in suite {
            let result = self.retrieve(embedder, &q.query, k_union.max(DEFAULT_K_RANK), k_union)?;
            let context: BTreeSet<usize> = result.context_ids.into_iter().collect();
            if q.gold.is_subset(&context) {
                correct += 1;
            }
        }
        Ok(correct as f64 / suite.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::BuiltinEmbedder;
    use crate::rdf::{parse_str, RdfFormat};
    use crate::subgraph::build_subgraphs;

    const SRC: &str = "@prefix sosa: <http://www.w3.org/ns/sosa/> .\n\
        @prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .\n\
        @prefix ex: <http://example.org/> .\n\
        ex:ElephantCollar a sosa:Sensor ;\n\
          rdfs:label \"Elephant GPS Collar\" ;\n\
          rdfs:comment \"Tracks elephant movement\" .\n\
        ex:Gauge sosa:observes ex:Rainfall .";

    fn setup() -> (Graph, VectorIndex, BuiltinEmbedder) {
        let g = parse_str(SRC, RdfFormat::Turtle).unwrap();
        let map = build_subgraphs(&g, WalkConfig::default()).unwrap();
        let e = BuiltinEmbedder::default();
        let index = build_index(&g, &map, &e).unwrap();
        (g, index, e)
    }

    #[test]
    fn annotation_uses_labels_and_comments() {
        let (g, ..) = setup();
        assert_eq!(
            annotation_text(&g, 0),
            "Elephant GPS Collar type Sensor Tracks elephant movement"
        );
        assert_eq!(annotation_text(&g, 3), "Gauge observes Rainfall");
    }

    #[test]
    fn local_name_without_prefix() {
        let g = parse_str(
            "<http://x.org/a/Thing> <http://x.org/v#prop> <urn:x:y> .",
            RdfFormat::NTriples,
        )
        .unwrap();
        assert_eq!(annotation_text(&g, 0), "Thing prop y");
    }

    #[test]
    fn one_document_per_triple() {
        let (g, index, _) = setup();
        assert_eq!(index.len(), g.len());
        let (_, again, _) = setup();
        assert_eq!(index, again);
    }

    #[test]
    fn verbatim_annotation_ranks_first() {
        let (g, index, e) = setup();
        let text = annotation_text(&g, 3);
        let r = index.retrieve(&e, &text, 10, 2).unwrap();
        assert_eq!(r.ranked[0].triple_id, 3);
        assert!((r.ranked[0].score - 1.0).abs() < 1e-12);
        assert!(r.ranked.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn ties_break_by_id() {
        let (_, index, e) = setup();
        let r = index.retrieve(&e, "", 10, 1).unwrap();
        let ids: Vec<usize> = r.ranked.iter().map(|x| x.triple_id).collect();
        assert_eq!(ids, vec![0, 1, 2, 3]);
    }

    #[test]
    fn k_validation_and_fingerprint() {
        let (_, index, e) = setup();
        assert!(matches!(
            index.retrieve(&e, "x", 1, 2),
            Err(RetrievalError::InvalidK { .. })
        ));
        assert!(matches!(
            index.retrieve(&e, "x", 1, 0),
            Err(RetrievalError::InvalidK { .. })
        ));
        let other = BuiltinEmbedder::new(64).unwrap();
        assert!(matches!(
            index.retrieve(&other, "x", 10, 2),
            Err(RetrievalError::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn accuracy_edge_cases() {
        let (_, index, e) = setup();
        let vacuous = vec![LabeledQuery {
            query: "anything".into(),
            gold: BTreeSet::new(),
        }];
        assert_eq!(index.retrieval_accuracy(&e, &vacuous, 1).unwrap(), 1.0);
        let r = index.retrieve(&e, "rainfall gauge", 10, 1).unwrap();
        let own = vec![LabeledQuery {
            query: "rainfall gauge".into(),
            gold: r.context_ids.iter().copied().collect(),
        }];
        assert_eq!(index.retrieval_accuracy(&e, &own, 1).unwrap(), 1.0);
    }

    #[test]
    fn save_and_load() {
        let (_, index, _) = setup();
        let dir = std::env::temp_dir().join(format!("ldrag-index-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("index.json");
        index.save(&path).unwrap();
        assert_eq!(VectorIndex::load(&path).unwrap(), index);
        std::fs::remove_dir_all(dir).unwrap();
    }
}
