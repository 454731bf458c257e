//! Per-triple subgraphs built by walking shared nodes.
//!
//! Two triples are adjacent when a subject or object term of one is also a
//! subject or object term of the other. Predicates never connect, and
//! literals connect only when [`WalkConfig::connect_via_literals`] is set.
//! The subgraph of a triple at depth `d` is every triple reachable within `d`
//! adjacency hops, including the triple itself.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rdf::{Graph, PrefixMap, Term, RDF_TYPE};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SubgraphError {
    #[error("cannot build subgraphs of an empty graph")]
    EmptyGraph,
    #[error("walk depth must be at least 1")]
    InvalidDepth,
    #[error("unknown triple id {0}")]
    UnknownId(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub depth: usize,
    #[serde(default)]
    pub connect_via_literals: bool,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            depth: 1,
            connect_via_literals: false,
        }
    }
}

impl WalkConfig {
    pub fn with_depth(depth: usize) -> Self {
        Self {
            depth,
            ..Self::default()
        }
    }
}

/// Triple id to the sorted ids of its subgraph, for every triple of a graph.
///
/// Serialized as `{ "depth": 1, "connect_via_literals": false, "entries": { "0": [0, 1], ... } }`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SubgraphMapRepr", into = "SubgraphMapRepr")]
pub struct SubgraphMap {
    config: WalkConfig,
    entries: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct SubgraphMapRepr {
    depth: usize,
    #[serde(default)]
    connect_via_literals: bool,
    entries: BTreeMap<usize, Vec<usize>>,
}

impl TryFrom<SubgraphMapRepr> for SubgraphMap {
    type Error = String;

    fn try_from(repr: SubgraphMapRepr) -> Result<Self, Self::Error> {
        let n = repr.entries.len();
        let mut entries = Vec::with_capacity(n);
        for (expected, (id, mut ids)) in repr.entries.into_iter().enumerate() {
            if id != expected {
                return Err(format!("subgraph entries are not dense at id {expected}"));
            }
            ids.sort_unstable();
            ids.dedup();
            if !ids.contains(&id) || ids.iter().any(|&i| i >= n) {
                return Err(format!("subgraph {id} is malformed"));
            }
            entries.push(ids);
        }
        if repr.depth == 0 {
            return Err("walk depth must be at least 1".into());
        }
        Ok(SubgraphMap {
            config: WalkConfig {
                depth: repr.depth,
                connect_via_literals: repr.connect_via_literals,
            },
            entries,
        })
    }
}

impl From<SubgraphMap> for SubgraphMapRepr {
    fn from(map: SubgraphMap) -> Self {
        SubgraphMapRepr {
            depth: map.config.depth,
            connect_via_literals: map.config.connect_via_literals,
            entries: map.entries.into_iter().enumerate().collect(),
        }
    }
}

impl SubgraphMap {
    pub fn config(&self) -> WalkConfig {
        self.config
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&[usize]> {
        self.entries.get(id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[usize])> {
        self.entries.iter().map(Vec::as_slice).enumerate()
    }
}

pub fn build_subgraphs(graph: &Graph, config: WalkConfig) -> Result<SubgraphMap, SubgraphError> {
    if graph.is_empty() {
        return Err(SubgraphError::EmptyGraph);
    }
    if config.depth == 0 {
        return Err(SubgraphError::InvalidDepth);
    }

    // node term -> triples mentioning it as subject or object
    let mut postings: HashMap<&Term, Vec<usize>> = HashMap::new();
    let connects = |term: &Term| !term.is_literal() || config.connect_via_literals;
    for t in graph {
        postings.entry(&t.subject).or_default().push(t.id);
        if connects(&t.object) && t.object != t.subject {
            postings.entry(&t.object).or_default().push(t.id);
        }
    }

    let neighbours: Vec<Vec<usize>> = graph
        .triples()
        .par_iter()
        .map(|t| {
            let mut ids: BTreeSet<usize> = postings[&t.subject].iter().copied().collect();
            if connects(&t.object) {
                ids.extend(postings[&t.object].iter().copied());
            }
            ids.into_iter().collect()
        })
        .collect();

    let entries = (0..graph.len())
        .into_par_iter()
        .map(|seed| walk(&neighbours, seed, config.depth))
        .collect();

    Ok(SubgraphMap { config, entries })
}

fn walk(neighbours: &[Vec<usize>], seed: usize, depth: usize) -> Vec<usize> {
    let mut seen = BTreeSet::from([seed]);
    let mut frontier = vec![seed];
    for _ in 0..depth {
        let mut next = Vec::new();
        for id in frontier {
            for &n in &neighbours[id] {
                if seen.insert(n) {
                    next.push(n);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    seen.into_iter().collect()
}

/// Union of the seeds' subgraphs in ascending id order.
pub fn union_context(map: &SubgraphMap, seeds: &[usize]) -> Result<Vec<usize>, SubgraphError> {
    let mut out = BTreeSet::new();
    for &seed in seeds {
        let ids = map.get(seed).ok_or(SubgraphError::UnknownId(seed))?;
        out.extend(ids.iter().copied());
    }
    Ok(out.into_iter().collect())
}

/// One `s p o .` line per triple, with CURIEs where the local name allows,
/// `a` for `rdf:type`, in id order.
pub fn serialize_context(graph: &Graph, ids: &[usize], prefixes: &PrefixMap) -> String {
    let mut sorted: Vec<usize> = ids.iter().copied().filter(|&i| i < graph.len()).collect();
    sorted.sort_unstable();
    sorted.dedup();
    sorted
        .into_iter()
        .filter_map(|id| graph.get(id))
        .map(|t| {
            let predicate = if t.predicate.as_iri() == Some(RDF_TYPE) {
                "a".to_string()
            } else {
                turtle_term(&t.predicate, prefixes)
            };
            format!(
                "{} {} {} .",
                turtle_term(&t.subject, prefixes),
                predicate,
                turtle_term(&t.object, prefixes)
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Turtle rendering of a term using `prefixes` for IRIs and datatypes.
pub fn turtle_term(term: &Term, prefixes: &PrefixMap) -> String {
    match term {
        Term::Iri { value } => curie_or_iri(value, prefixes),
        Term::BlankNode { value } => format!("_:{value}"),
        Term::Literal {
            value,
            datatype,
            language,
        } => {
            let mut out = format!("\"{}\"", crate::rdf::escape_string(value));
            if let Some(lang) = language {
                out.push('@');
                out.push_str(lang);
            } else if let Some(dt) = datatype {
                out.push_str("^^");
                out.push_str(&curie_or_iri(dt, prefixes));
            }
            out
        }
    }
}

fn curie_or_iri(iri: &str, prefixes: &PrefixMap) -> String {
    match prefixes.split(iri) {
        Some((label, local)) if is_safe_local(local) => format!("{label}:{local}"),
        _ => Term::iri(iri).to_ntriples(),
    }
}

// conservative subset of PN_LOCAL that needs no escaping
fn is_safe_local(local: &str) -> bool {
    !local.is_empty()
        && !local.ends_with('.')
        && !local.starts_with(['.', '-'])
        && local
            .chars()
            .all(|c| c.is_alphanumeric() || matches!(c, '_' | '-' | '.'))
}
