//! Structural and semantic similarity between a reference and a generated
//! JSON document, and RDF snippet detection for plain-text answers.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::sync::{Arc, LazyLock};

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::embedder::{cosine_similarity, EmbedError, Embedder, EmbedderConfig};
use crate::extract::normalize_uris;
use crate::rdf::PrefixMap;

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("invalid metric configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("line {line}: {message}")]
    Batch { line: usize, message: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Leaf path to leaf value, e.g. `filters[0].operator`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlatJson(pub BTreeMap<String, Value>);

impl FlatJson {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.0.get(key)
    }

    pub fn keys(&self) -> BTreeSet<&str> {
        self.0.keys().map(String::as_str).collect()
    }
}

/// Flattens `value` after abbreviating full IRIs with `prefixes`. Empty
/// objects and arrays contribute no entries.
pub fn flatten(value: &Value, prefixes: &PrefixMap) -> FlatJson {
    let mut out = BTreeMap::new();
    walk(&normalize_uris(value, prefixes), String::new(), &mut out);
    FlatJson(out)
}

fn walk(value: &Value, path: String, out: &mut BTreeMap<String, Value>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let child = if path.is_empty() {
                    k.clone()
                } else {
                    format!("{path}.{k}")
                };
                walk(v, child, out);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                walk(v, format!("{path}[{i}]"), out);
            }
        }
        leaf => {
            out.insert(path, leaf.clone());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub beta: f64,
    pub alpha: f64,
    pub embedder: EmbedderConfig,
    pub prefixes: PrefixMap,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            alpha: 0.5,
            embedder: EmbedderConfig::default(),
            prefixes: PrefixMap::common(),
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if self.beta.is_nan() || self.beta < 0.0 {
            return Err(MetricError::InvalidConfig("beta must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(MetricError::InvalidConfig("alpha must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// `|K_ref ∩ K_gen| / (|K_ref| + beta * |K_gen \ K_ref|)`; 1 when both are
/// empty.
pub fn strss(reference: &FlatJson, generated: &FlatJson, beta: f64) -> f64 {
    if reference.is_empty() && generated.is_empty() {
        return 1.0;
    }
    let shared = reference.0.keys().filter(|k| generated.0.contains_key(*k)).count();
    let extra = generated.0.keys().filter(|k| !reference.0.contains_key(*k)).count();
    let denom = reference.len() as f64 + beta * extra as f64;
    if denom == 0.0 {
        return 0.0;
    }
    shared as f64 / denom
}

/// String form of a leaf used for embedding and equality checks.
pub fn canonical_value(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        Value::Null => "null".into(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => {
            if n.is_i64() || n.is_u64() {
                n.to_string()
            } else {
                format!("{}", n.as_f64().unwrap_or(f64::NAN))
            }
        }
        other => other.to_string(),
    }
}

/// Mean cosine similarity of the embedded canonical values over shared keys;
/// 0 when there are none. Identical canonical values score exactly 1.
pub fn semss(reference: &FlatJson, generated: &FlatJson, embedder: &dyn Embedder) -> Result<f64, MetricError> {
    let mut total = 0.0;
    let mut n = 0usize;
    for (key, rv) in &reference.0 {
        let Some(gv) = generated.0.get(key) else { continue };
        n += 1;
        let (a, b) = (canonical_value(rv), canonical_value(gv));
        total += if a == b {
            1.0
        } else {
            cosine_similarity(&embedder.embed(&a)?, &embedder.embed(&b)?)?
        };
    }
    Ok(if n == 0 { 0.0 } else { total / n as f64 })
}

pub fn ojss(strss: f64, semss: f64, alpha: f64) -> f64 {
    alpha * strss + (1.0 - alpha) * semss
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub strss: f64,
    pub semss: f64,
    pub ojss: f64,
    pub alpha: f64,
    pub shared_key_count: usize,
    pub missing_keys: Vec<String>,
    pub extra_keys: Vec<String>,
}

impl MetricReport {
    pub fn is_consistent(&self) -> bool {
        (self.ojss - ojss(self.strss, self.semss, self.alpha)).abs() <= 1e-9
    }
}

/// Scores JSON pairs with a fixed configuration and embedder.
#[derive(Clone)]
pub struct Scorer {
    config: MetricConfig,
    embedder: Arc<dyn Embedder>,
}

impl Scorer {
    pub fn new(config: MetricConfig) -> Result<Self, MetricError> {
        config.validate()?;
        let embedder = config.embedder.build()?;
        Ok(Self { config, embedder })
    }

    pub fn with_embedder(config: MetricConfig, embedder: Arc<dyn Embedder>) -> Result<Self, MetricError> {
        config.validate()?;
        Ok(Self { config, embedder })
    }

    pub fn config(&self) -> &MetricConfig {
        &self.config
    }

    pub fn compare(&self, reference: &Value, generated: &Value) -> Result<MetricReport, MetricError> {
        let r = flatten(reference, &self.config.prefixes);
        let g = flatten(generated, &self.config.prefixes);
        self.compare_flat(&r, &g)
    }

    pub fn compare_flat(&self, r: &FlatJson, g: &FlatJson) -> Result<MetricReport, MetricError> {
        let st = strss(r, g, self.config.beta);
        let se = semss(r, g, self.embedder.as_ref())?;
        let rk = r.keys();
        let gk = g.keys();
        Ok(MetricReport {
            strss: st,
            semss: se,
            ojss: ojss(st, se, self.config.alpha),
            alpha: self.config.alpha,
            shared_key_count: rk.intersection(&gk).count(),
            missing_keys: rk.difference(&gk).map(|k| k.to_string()).collect(),
            extra_keys: gk.difference(&rk).map(|k| k.to_string()).collect(),
        })
    }
}

/// One-off comparison; builds the embedder from `config`.
pub fn compare(reference: &Value, generated: &Value, config: &MetricConfig) -> Result<MetricReport, MetricError> {
    Scorer::new(config.clone())?.compare(reference, generated)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub id: Value,
    #[serde(flatten)]
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub count: usize,
    pub mean_strss: f64,
    pub mean_semss: f64,
    pub mean_ojss: f64,
}

#[derive(Deserialize)]
struct BatchInput {
    id: Value,
    reference: Value,
    generated: Value,
}

/// Scores JSON lines of `{ "id", "reference", "generated" }`. Blank lines are
/// skipped.
pub fn score_batch(input: impl BufRead, scorer: &Scorer) -> Result<(Vec<BatchRow>, BatchSummary), MetricError> {
    let mut rows = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: BatchInput = serde_json::from_str(&line).map_err(|e| MetricError::Batch {
            line: i + 1,
            message: e.to_string(),
        })?;
        rows.push(BatchRow {
            id: item.id,
            report: scorer.compare(&item.reference, &item.generated)?,
        });
    }
    let count = rows.len();
    let mean = |f: fn(&MetricReport) -> f64| {
        if count == 0 {
            0.0
        } else {
            rows.iter().map(|r| f(&r.report)).sum::<f64>() / count as f64
        }
    };
    let summary = BatchSummary {
        count,
        mean_strss: mean(|r| r.strss),
        mean_semss: mean(|r| r.semss),
        mean_ojss: mean(|r| r.ojss),
    };
    Ok((rows, summary))
}

/// Report lines followed by a `{"summary": ...}` line.
pub fn batch_to_jsonl(rows: &[BatchRow], summary: &BatchSummary) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row).expect("row serializes"));
        out.push('\n');
    }
    out.push_str(&serde_json::json!({ "summary": summary }).to_string());
    out.push('\n');
    out
}

static ANGLE_IRI: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"<[A-Za-z][A-Za-z0-9+.\-]*:[^<>\s"{}|\\^`]+>"#).unwrap());
static CURIE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"([A-Za-z][A-Za-z0-9_\-]*):([A-Za-z0-9_][A-Za-z0-9_\-]*(?:\.[A-Za-z0-9_\-]+)*)").unwrap()
});
static FENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?mi)^\s*```[ \t]*(turtle|rdf|sparql)\b").unwrap());

const EXTRA_LABELS: [&str; 12] = [
    "dc", "dcterms", "foaf", "geo", "geof", "prov", "qudt", "schema", "skos", "time", "unit", "void",
];

/// Flags text that embeds RDF: an IRI in angle brackets, a line with two or
/// more known-prefix CURIEs and a statement terminator, or a fenced
/// turtle/rdf/sparql block.
#[derive(Debug, Clone)]
pub struct SnippetDetector {
    labels: BTreeSet<String>,
}

impl Default for SnippetDetector {
    fn default() -> Self {
        let mut labels: BTreeSet<String> = PrefixMap::common().iter().map(|(l, _)| l.to_string()).collect();
        labels.extend(EXTRA_LABELS.iter().map(|s| s.to_string()));
        Self { labels }
    }
}

impl SnippetDetector {
    pub fn with_prefixes(prefixes: &PrefixMap) -> Self {
        let mut d = Self::default();
        d.labels.extend(prefixes.iter().map(|(l, _)| l.to_string()));
        d
    }

    pub fn detect(&self, text: &str) -> bool {
        ANGLE_IRI.is_match(text) || FENCE.is_match(text) || text.lines().any(|l| self.triple_line(l))
    }

    fn triple_line(&self, line: &str) -> bool {
        let trimmed = line.trim_end();
        let terminated =
            trimmed.ends_with('.') || trimmed.ends_with(';') || trimmed.contains(" .") || trimmed.contains(" ;");
        if !terminated {
            return false;
        }
        let curies = CURIE
            .captures_iter(trimmed)
            .filter(|c| {
                let start = c.get(0).unwrap().start();
                let prev = trimmed[..start].chars().next_back();
                !prev.is_some_and(|p| p.is_alphanumeric() || matches!(p, '_' | '-' | ':' | '/'))
                    && self.labels.contains(&c[1])
            })
            .count();
        curies >= 2
    }
}

pub fn detect_rdf_snippet(text: &str) -> bool {
    static DEFAULT: LazyLock<SnippetDetector> = LazyLock::new(SnippetDetector::default);
    DEFAULT.detect(text)
}
