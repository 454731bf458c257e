use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Graph, PrefixMap, RdfError, Term, RDFS_COMMENT, RDFS_LABEL, RDF_TYPE};

/// Drops observational data before the graph reaches retrieval.
///
/// Entries are IRIs or CURIEs; CURIEs expand against the graph's prefixes
/// (falling back to [`PrefixMap::common`]).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InclusionFilter {
    #[serde(default)]
    pub exclude_predicates: BTreeSet<String>,
    /// Instances of these `rdf:type`s lose all of their triples.
    #[serde(default)]
    pub exclude_subject_types: BTreeSet<String>,
    /// Keep `rdfs:label`/`rdfs:comment` of retained subjects even when the
    /// predicate rules would drop them.
    #[serde(default = "default_true")]
    pub keep_annotations: bool,
}

fn default_true() -> bool {
    true
}

impl Default for InclusionFilter {
    fn default() -> Self {
        Self {
            exclude_predicates: BTreeSet::new(),
            exclude_subject_types: BTreeSet::new(),
            keep_annotations: true,
        }
    }
}

impl InclusionFilter {
    pub fn from_json(text: &str) -> Result<Self, RdfError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, RdfError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn is_empty(&self) -> bool {
        self.exclude_predicates.is_empty() && self.exclude_subject_types.is_empty()
    }

    pub fn apply(&self, graph: &Graph) -> Graph {
        let mut prefixes = graph.prefixes().clone();
        prefixes.merge(&PrefixMap::common());
        let expand = |set: &BTreeSet<String>| -> HashSet<String> { set.iter().map(|s| prefixes.expand(s)).collect() };
        let predicates = expand(&self.exclude_predicates);
        let types = expand(&self.exclude_subject_types);

        let excluded_subjects: HashSet<&Term> = graph
            .iter()
            .filter(|t| t.predicate.as_iri() == Some(RDF_TYPE) && t.object.as_iri().is_some_and(|o| types.contains(o)))
            .map(|t| &t.subject)
            .collect();

        let kept = graph.iter().filter(|t| {
            if excluded_subjects.contains(&t.subject) {
                return false;
            }
            let predicate = t.predicate.as_iri().unwrap_or_default();
            if !predicates.contains(predicate) {
                return true;
            }
            self.keep_annotations && (predicate == RDFS_LABEL || predicate == RDFS_COMMENT)
        });

        Graph::from_statements(
            kept.map(|t| (t.subject.clone(), t.predicate.clone(), t.object.clone())),
            graph.prefixes().clone(),
        )
        .expect("a subset of a valid graph is valid")
    }
}
