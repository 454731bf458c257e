//! RDF terms, triples and graphs.
//!
//! A [`Graph`] is an ordered, deduplicated list of triples whose ids are the
//! dense positions `0..n`. Graphs are immutable once built; filtering returns
//! a new graph with re-densified ids.

mod filter;
mod parse;
mod prefix;

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use filter::InclusionFilter;
pub use parse::{load_graph, parse_graph, parse_str, RdfFormat};
pub use prefix::PrefixMap;

pub const RDF_NS: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
pub const RDFS_NS: &str = "http://www.w3.org/2000/01/rdf-schema#";
pub const XSD_NS: &str = "http://www.w3.org/2001/XMLSchema#";
pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
pub const RDFS_LABEL: &str = "http://www.w3.org/2000/01/rdf-schema#label";
pub const RDFS_COMMENT: &str = "http://www.w3.org/2000/01/rdf-schema#comment";
pub const XSD_STRING: &str = "http://www.w3.org/2001/XMLSchema#string";
pub const XSD_INTEGER: &str = "http://www.w3.org/2001/XMLSchema#integer";
pub const XSD_DECIMAL: &str = "http://www.w3.org/2001/XMLSchema#decimal";
pub const XSD_DOUBLE: &str = "http://www.w3.org/2001/XMLSchema#double";
pub const XSD_BOOLEAN: &str = "http://www.w3.org/2001/XMLSchema#boolean";

#[derive(Debug, thiserror::Error)]
pub enum RdfError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported construct at line {line}, column {column}: {construct}")]
    Unsupported {
        construct: String,
        line: usize,
        column: usize,
    },
    #[error("invalid triple: {0}")]
    InvalidTriple(String),
    #[error("namespace <{namespace}> is already bound to prefix '{existing}'")]
    PrefixConflict { namespace: String, existing: String },
    #[error("unknown RDF format '{0}'")]
    UnknownFormat(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// An RDF term. Serialized as `{ "kind": "iri" | "blank-node" | "literal", "value": ... }`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Term {
    Iri {
        value: String,
    },
    BlankNode {
        value: String,
    },
    Literal {
        value: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        datatype: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        language: Option<String>,
    },
}

impl Term {
    pub fn iri(value: impl Into<String>) -> Self {
        Term::Iri { value: value.into() }
    }

    pub fn blank(label: impl Into<String>) -> Self {
        Term::BlankNode { value: label.into() }
    }

    /// A plain literal (implicitly `xsd:string`).
    pub fn literal(lexical: impl Into<String>) -> Self {
        Term::Literal {
            value: lexical.into(),
            datatype: None,
            language: None,
        }
    }

    pub fn typed_literal(lexical: impl Into<String>, datatype: impl Into<String>) -> Self {
        let datatype = datatype.into();
        Term::Literal {
            value: lexical.into(),
            // xsd:string and the plain literal are the same term
            datatype: (datatype != XSD_STRING).then_some(datatype),
            language: None,
        }
    }

    pub fn lang_literal(lexical: impl Into<String>, language: impl Into<String>) -> Self {
        Term::Literal {
            value: lexical.into(),
            datatype: None,
            language: Some(language.into().to_ascii_lowercase()),
        }
    }

    /// The IRI string, the blank label, or the lexical form.
    pub fn value(&self) -> &str {
        match self {
            Term::Iri { value } | Term::BlankNode { value } | Term::Literal { value, .. } => value,
        }
    }

    pub fn as_iri(&self) -> Option<&str> {
        match self {
            Term::Iri { value } => Some(value),
            _ => None,
        }
    }

    pub fn is_iri(&self) -> bool {
        matches!(self, Term::Iri { .. })
    }

    pub fn is_blank(&self) -> bool {
        matches!(self, Term::BlankNode { .. })
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, Term::Literal { .. })
    }

    /// Checks the per-kind invariants: absolute IRIs, non-empty blank labels.
    pub fn check(&self) -> Result<(), RdfError> {
        match self {
            Term::Iri { value } if !is_absolute_iri(value) => {
                Err(RdfError::InvalidTriple(format!("IRI <{value}> is not absolute")))
            }
            Term::BlankNode { value } if value.is_empty() => {
                Err(RdfError::InvalidTriple("empty blank node label".into()))
            }
            Term::Literal {
                datatype: Some(_),
                language: Some(_),
                value,
            } => Err(RdfError::InvalidTriple(format!(
                "literal \"{value}\" has both a datatype and a language tag"
            ))),
            _ => Ok(()),
        }
    }

    /// N-Triples rendering of the term.
    pub fn to_ntriples(&self) -> String {
        match self {
            Term::Iri { value } => format!("<{}>", escape_iri(value)),
            Term::BlankNode { value } => format!("_:{value}"),
            Term::Literal {
                value,
                datatype,
                language,
            } => {
                let mut out = format!("\"{}\"", escape_string(value));
                if let Some(lang) = language {
                    out.push('@');
                    out.push_str(lang);
                } else if let Some(dt) = datatype {
                    out.push_str("^^<");
                    out.push_str(&escape_iri(dt));
                    out.push('>');
                }
                out
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_ntriples())
    }
}

/// True when `s` starts with a URI scheme followed by `:`.
pub fn is_absolute_iri(s: &str) -> bool {
    let Some(colon) = s.find(':') else {
        return false;
    };
    let scheme = &s[..colon];
    let mut chars = scheme.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'))
}

pub(crate) fn escape_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            _ => out.push(c),
        }
    }
    out
}

fn escape_iri(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\' | '\u{0}'..='\u{20}' => {
                out.push_str(&format!("\\u{:04X}", c as u32))
            }
            _ => out.push(c),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub id: usize,
    pub subject: Term,
    pub predicate: Term,
    pub object: Term,
}

impl Triple {
    pub fn to_ntriples(&self) -> String {
        format!(
            "{} {} {} .",
            self.subject.to_ntriples(),
            self.predicate.to_ntriples(),
            self.object.to_ntriples()
        )
    }

    pub fn spo(&self) -> (&Term, &Term, &Term) {
        (&self.subject, &self.predicate, &self.object)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Graph {
    triples: Vec<Triple>,
    prefixes: PrefixMap,
}

impl Graph {
    /// Builds a graph from statements in order, dropping duplicates and
    /// assigning dense ids.
    pub fn from_statements<I>(statements: I, prefixes: PrefixMap) -> Result<Self, RdfError>
    where
        I: IntoIterator<Item = (Term, Term, Term)>,
    {
        let mut seen = HashSet::new();
        let mut triples = Vec::new();
        for (subject, predicate, object) in statements {
            if subject.is_literal() {
                return Err(RdfError::InvalidTriple(format!("literal subject {subject}")));
            }
            if !predicate.is_iri() {
                return Err(RdfError::InvalidTriple(format!("non-IRI predicate {predicate}")));
            }
            subject.check()?;
            predicate.check()?;
            object.check()?;
            if seen.insert((subject.clone(), predicate.clone(), object.clone())) {
                triples.push(Triple {
                    id: triples.len(),
                    subject,
                    predicate,
                    object,
                });
            }
        }
        Ok(Self { triples, prefixes })
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&Triple> {
        self.triples.get(id)
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Triple> {
        self.triples.iter()
    }

    pub fn prefixes(&self) -> &PrefixMap {
        &self.prefixes
    }

    /// Every IRI occurring in any position.
    pub fn iris(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        for t in &self.triples {
            for term in [&t.subject, &t.predicate, &t.object] {
                if let Some(iri) = term.as_iri() {
                    out.insert(iri);
                }
            }
            if let Term::Literal { datatype: Some(dt), .. } = &t.object {
                out.insert(dt.as_str());
            }
        }
        out
    }

    pub fn contains_iri(&self, iri: &str) -> bool {
        self.triples.iter().any(|t| {
            t.subject.as_iri() == Some(iri) || t.predicate.as_iri() == Some(iri) || t.object.as_iri() == Some(iri)
        })
    }

    /// Checks the graph-level invariants. Used after deserializing a graph
    /// from an untrusted file.
    pub fn check(&self) -> Result<(), RdfError> {
        let mut seen = HashSet::new();
        for (i, t) in self.triples.iter().enumerate() {
            if t.id != i {
                return Err(RdfError::InvalidTriple(format!(
                    "triple ids are not dense: position {i} has id {}",
                    t.id
                )));
            }
            if t.subject.is_literal() || !t.predicate.is_iri() {
                return Err(RdfError::InvalidTriple(format!("malformed triple {i}")));
            }
            if !seen.insert(t.spo()) {
                return Err(RdfError::InvalidTriple(format!("duplicate triple {i}")));
            }
        }
        Ok(())
    }

    pub fn to_ntriples(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            out.push_str(&t.to_ntriples());
            out.push('\n');
        }
        out
    }
}

impl<'a> IntoIterator for &'a Graph {
    type Item = &'a Triple;
    type IntoIter = std::slice::Iter<'a, Triple>;

    fn into_iter(self) -> Self::IntoIter {
        self.triples.iter()
    }
}
