use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RdfError;

/// Prefix label to namespace IRI. No namespace is bound under two labels, so
/// abbreviation is unambiguous.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, String>", into = "BTreeMap<String, String>")]
pub struct PrefixMap {
    entries: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct PrefixFile {
    prefixes: PrefixMap,
}

impl PrefixMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// rdf, rdfs, xsd, owl, sosa and ssn.
    pub fn common() -> Self {
        let mut map = Self::new();
        for (label, ns) in [
            ("rdf", super::RDF_NS),
            ("rdfs", super::RDFS_NS),
            ("xsd", super::XSD_NS),
            ("owl", "http://www.w3.org/2002/07/owl#"),
            ("sosa", "http://www.w3.org/ns/sosa/"),
            ("ssn", "http://www.w3.org/ns/ssn/"),
        ] {
            map.insert(label, ns).expect("distinct namespaces");
        }
        map
    }

    /// Loads `{ "prefixes": { "sosa": "http://www.w3.org/ns/sosa/" } }`.
    pub fn from_json(text: &str) -> Result<Self, RdfError> {
        let file: PrefixFile = serde_json::from_str(text)?;
        Ok(file.prefixes)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, RdfError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Binds `label` to `namespace`. Rebinding a label replaces it; binding a
    /// namespace that another label already owns is an error.
    pub fn insert(&mut self, label: impl Into<String>, namespace: impl Into<String>) -> Result<(), RdfError> {
        let label = label.into();
        let namespace = namespace.into();
        if let Some((existing, _)) = self.entries.iter().find(|(l, ns)| **ns == namespace && **l != label) {
            return Err(RdfError::PrefixConflict {
                namespace,
                existing: existing.clone(),
            });
        }
        self.entries.insert(label, namespace);
        Ok(())
    }

    /// Adds every binding of `other` that does not conflict with this map.
    pub fn merge(&mut self, other: &PrefixMap) {
        for (label, ns) in &other.entries {
            if !self.entries.contains_key(label) {
                let _ = self.insert(label.clone(), ns.clone());
            }
        }
    }

    pub fn get(&self, label: &str) -> Option<&str> {
        self.entries.get(label).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(l, n)| (l.as_str(), n.as_str()))
    }

    /// The label and local part for the longest namespace that prefixes `iri`.
    pub fn split<'a>(&'a self, iri: &'a str) -> Option<(&'a str, &'a str)> {
        self.entries
            .iter()
            .filter(|(_, ns)| !ns.is_empty() && iri.starts_with(ns.as_str()))
            .max_by_key(|(_, ns)| ns.len())
            .map(|(label, ns)| (label.as_str(), &iri[ns.len()..]))
    }

    /// `prefix:local` for the longest matching namespace, else `iri` unchanged.
    pub fn abbreviate(&self, iri: &str) -> String {
        match self.split(iri) {
            Some((label, local)) => format!("{label}:{local}"),
            None => iri.to_string(),
        }
    }

    /// Inverse of [`abbreviate`](Self::abbreviate); unknown labels pass through.
    pub fn expand(&self, curie: &str) -> String {
        if let Some((label, local)) = curie.split_once(':') {
            if !local.starts_with("//") {
                if let Some(ns) = self.entries.get(label) {
                    return format!("{ns}{local}");
                }
            }
        }
        curie.to_string()
    }

    /// `@prefix` lines in label order.
    pub fn to_turtle_header(&self) -> String {
        self.entries
            .iter()
            .map(|(l, n)| format!("@prefix {l}: <{n}> .\n"))
            .collect()
    }
}

impl TryFrom<BTreeMap<String, String>> for PrefixMap {
    type Error = RdfError;

    fn try_from(entries: BTreeMap<String, String>) -> Result<Self, Self::Error> {
        let mut map = PrefixMap::new();
        for (label, ns) in entries {
            map.insert(label, ns)?;
        }
        Ok(map)
    }
}

impl From<PrefixMap> for BTreeMap<String, String> {
    fn from(map: PrefixMap) -> Self {
        map.entries
    }
}
