//! Structured query extraction from model output and SPARQL compilation.
//!
//! A [`QueryModel`] lists the entities a question is about, the properties
//! to return for them and the filters to apply. Model output is first cut
//! down to a JSON object ([`extract_json`]), then normalized and checked
//! against the graph ([`validate_query_model`]), then compiled with a
//! [`PatternMapping`] ([`build_sparql`]).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::rdf::{is_absolute_iri, Graph, PrefixMap, Term};
use crate::subgraph::turtle_term;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub name: String,
    pub uri: String,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyRef {
    pub entity: String,
    pub property: String,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operator {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "contains")]
    Contains,
    #[serde(rename = "bound")]
    Bound,
    #[serde(rename = "not_empty")]
    NotEmpty,
    #[serde(rename = "within_radius")]
    WithinRadius,
    #[serde(rename = "between")]
    Between,
}

impl Operator {
    pub const ALL: [Operator; 11] = [
        Operator::Eq,
        Operator::Ne,
        Operator::Lt,
        Operator::Le,
        Operator::Gt,
        Operator::Ge,
        Operator::Contains,
        Operator::Bound,
        Operator::NotEmpty,
        Operator::WithinRadius,
        Operator::Between,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Operator::Eq => "=",
            Operator::Ne => "!=",
            Operator::Lt => "<",
            Operator::Le => "<=",
            Operator::Gt => ">",
            Operator::Ge => ">=",
            Operator::Contains => "contains",
            Operator::Bound => "bound",
            Operator::NotEmpty => "not_empty",
            Operator::WithinRadius => "within_radius",
            Operator::Between => "between",
        }
    }

    fn is_comparison(self) -> bool {
        matches!(
            self,
            Operator::Eq | Operator::Ne | Operator::Lt | Operator::Le | Operator::Gt | Operator::Ge
        )
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub entity: String,
    pub property: String,
    pub operator: Operator,
    /// A scalar, a `[low, high]` pair (`between`) or `{ "lat", "lon", "radius" }`
    /// (`within_radius`); absent for `bound` and `not_empty`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Value>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sort {
    pub property: String,
    pub direction: Direction,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QueryModel {
    pub entities: Vec<Entity>,
    pub properties: Vec<PropertyRef>,
    pub filters: Vec<Filter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sort: Option<Sort>,
    /// Keys the schema does not define, kept verbatim.
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl QueryModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("query model serializes")
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("query model serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractionStatus {
    Valid,
    Recovered,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionOutcome {
    pub status: ExtractionStatus,
    pub model: Option<QueryModel>,
    pub raw_json_text: Option<String>,
    pub diagnostics: Vec<String>,
}

impl ExtractionOutcome {
    pub fn is_usable(&self) -> bool {
        self.status != ExtractionStatus::Invalid
    }

    fn invalid(raw_json_text: Option<String>, diagnostics: Vec<String>) -> Self {
        Self {
            status: ExtractionStatus::Invalid,
            model: None,
            raw_json_text,
            diagnostics,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ExtractError {
    #[error("no JSON object found in model output")]
    NoJsonFound { raw: String },
}

/// Returns the JSON text inside `llm_text` and whether it had to be cut out
/// of surrounding prose.
pub fn extract_json(llm_text: &str) -> Result<(String, bool), ExtractError> {
    let trimmed = llm_text.trim();
    if serde_json::from_str::<Value>(trimmed).is_ok() {
        return Ok((trimmed.to_string(), false));
    }
    for (start, _) in llm_text.match_indices('{') {
        if let Some(end) = balanced_object_end(&llm_text[start..]) {
            let candidate = &llm_text[start..start + end];
            if serde_json::from_str::<Value>(candidate).is_ok() {
                return Ok((candidate.to_string(), true));
            }
        }
    }
    Err(ExtractError::NoJsonFound {
        raw: llm_text.to_string(),
    })
}

// byte length of the balanced `{...}` at the start of `s`
fn balanced_object_end(s: &str) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

const TOP_LEVEL_KEYS: [&str; 5] = ["entities", "properties", "filters", "limit", "sort"];

/// Replaces full IRIs (optionally in angle brackets) with CURIEs, in keys and
/// string values alike.
pub fn normalize_uris(value: &Value, prefixes: &PrefixMap) -> Value {
    match value {
        Value::String(s) => Value::String(normalize_str(s, prefixes)),
        Value::Array(items) => Value::Array(items.iter().map(|v| normalize_uris(v, prefixes)).collect()),
        Value::Object(map) => Value::Object(
            map.iter()
                .map(|(k, v)| (normalize_str(k, prefixes), normalize_uris(v, prefixes)))
                .collect(),
        ),
        other => other.clone(),
    }
}

fn normalize_str(s: &str, prefixes: &PrefixMap) -> String {
    let inner = s.strip_prefix('<').and_then(|r| r.strip_suffix('>')).unwrap_or(s);
    if is_absolute_iri(inner) && !inner.contains(char::is_whitespace) {
        prefixes.abbreviate(inner)
    } else {
        s.to_string()
    }
}

/// Parses, normalizes and checks a query model against `graph`.
///
/// Unknown keys are kept and reported; missing or mistyped schema keys,
/// dangling entity references, unknown terms and operator/value mismatches
/// make the outcome invalid.
pub fn validate_query_model(json_text: &str, graph: &Graph, prefixes: &PrefixMap) -> ExtractionOutcome {
    let raw = Some(json_text.to_string());
    let value: Value = match serde_json::from_str(json_text) {
        Ok(v) => v,
        Err(e) => return ExtractionOutcome::invalid(raw, vec![format!("invalid JSON: {e}")]),
    };
    let value = normalize_uris(&value, prefixes);
    let Value::Object(object) = &value else {
        return ExtractionOutcome::invalid(raw, vec!["top-level value is not a JSON object".into()]);
    };

    let mut errors = Vec::new();
    let mut notes = Vec::new();
    for key in ["entities", "properties", "filters"] {
        match object.get(key) {
            None => errors.push(format!("missing required key '{key}'")),
            Some(Value::Array(_)) => {}
            Some(_) => errors.push(format!("key '{key}' must be an array")),
        }
    }
    for key in object.keys() {
        if !TOP_LEVEL_KEYS.contains(&key.as_str()) {
            notes.push(format!("unknown key '{key}' retained"));
        }
    }
    if !errors.is_empty() {
        errors.extend(notes);
        return ExtractionOutcome::invalid(raw, errors);
    }

    // null limit/sort mean "absent"
    let mut cleaned: Map<String, Value> = object.clone();
    for key in ["limit", "sort"] {
        if cleaned.get(key) == Some(&Value::Null) {
            cleaned.remove(key);
        }
    }
    let model: QueryModel = match serde_json::from_value(Value::Object(cleaned)) {
        Ok(m) => m,
        Err(e) => {
            errors.push(format!("schema violation: {e}"));
            errors.extend(notes);
            return ExtractionOutcome::invalid(raw, errors);
        }
    };

    check_model(&model, graph, prefixes, &mut errors, &mut notes);
    if errors.is_empty() {
        ExtractionOutcome {
            status: ExtractionStatus::Valid,
            model: Some(model),
            raw_json_text: raw,
            diagnostics: notes,
        }
    } else {
        errors.extend(notes);
        ExtractionOutcome::invalid(raw, errors)
    }
}

fn check_model(
    model: &QueryModel,
    graph: &Graph,
    prefixes: &PrefixMap,
    errors: &mut Vec<String>,
    notes: &mut Vec<String>,
) {
    let known = |curie: &str| graph.contains_iri(&prefixes.expand(curie));
    let term_check = |what: &str, curie: &str, errors: &mut Vec<String>| {
        if !known(curie) {
            errors.push(format!("{what} '{curie}' does not resolve to a term in the graph"));
        }
    };

    let entity_uris: BTreeSet<&str> = model.entities.iter().map(|e| e.uri.as_str()).collect();
    for (i, e) in model.entities.iter().enumerate() {
        term_check(&format!("entities[{i}].uri"), &e.uri, errors);
        report_extra(&format!("entities[{i}]"), &e.extra, notes);
    }
    for (i, p) in model.properties.iter().enumerate() {
        if !entity_uris.contains(p.entity.as_str()) {
            errors.push(format!(
                "properties[{i}] references entity '{}' that is not listed in entities",
                p.entity
            ));
        }
        term_check(&format!("properties[{i}].property"), &p.property, errors);
        report_extra(&format!("properties[{i}]"), &p.extra, notes);
    }
    for (i, f) in model.filters.iter().enumerate() {
        if !entity_uris.contains(f.entity.as_str()) {
            errors.push(format!(
                "filters[{i}] references entity '{}' that is not listed in entities",
                f.entity
            ));
        }
        term_check(&format!("filters[{i}].property"), &f.property, errors);
        if let Err(msg) = check_arity(f.operator, f.value.as_ref()) {
            errors.push(format!("filters[{i}]: {msg}"));
        }
        report_extra(&format!("filters[{i}]"), &f.extra, notes);
    }
    if model.limit == Some(0) {
        errors.push("limit must be a positive integer".into());
    }
    if let Some(sort) = &model.sort {
        if !model.properties.iter().any(|p| p.property == sort.property) {
            errors.push(format!(
                "sort property '{}' is not among the requested properties",
                sort.property
            ));
        }
        report_extra("sort", &sort.extra, notes);
    }
}

fn report_extra(path: &str, extra: &BTreeMap<String, Value>, notes: &mut Vec<String>) {
    for key in extra.keys() {
        notes.push(format!("unknown key '{path}.{key}' retained"));
    }
}

fn is_scalar(v: &Value) -> bool {
    matches!(v, Value::String(_) | Value::Number(_) | Value::Bool(_))
}

fn check_arity(op: Operator, value: Option<&Value>) -> Result<(), String> {
    let value = value.filter(|v| !v.is_null());
    match op {
        Operator::Bound | Operator::NotEmpty => match value {
            None => Ok(()),
            Some(_) => Err(format!("operator '{op}' takes no value")),
        },
        Operator::Between => match value {
            Some(Value::Array(pair)) if pair.len() == 2 && pair.iter().all(is_scalar) => Ok(()),
            _ => Err("operator 'between' takes a [low, high] pair".into()),
        },
        Operator::WithinRadius => match value.and_then(geo_value) {
            Some((_, _, radius)) if radius > 0.0 => Ok(()),
            Some(_) => Err("within_radius radius must be positive".into()),
            None => Err("operator 'within_radius' takes { lat, lon, radius } numbers".into()),
        },
        _ => match value {
            Some(v) if is_scalar(v) => Ok(()),
            _ => Err(format!("operator '{op}' takes a single scalar value")),
        },
    }
}

fn geo_value(v: &Value) -> Option<(f64, f64, f64)> {
    let obj = v.as_object()?;
    let num = |k: &str| -> Option<f64> {
        match obj.get(k)? {
            Value::Number(n) => n.as_f64(),
            Value::String(s) => s.trim().parse().ok(),
            _ => None,
        }
    };
    Some((num("lat")?, num("lon")?, num("radius")?))
}

/// [`extract_json`] followed by [`validate_query_model`]; a valid model cut
/// out of prose is reported as [`ExtractionStatus::Recovered`].
pub fn extract_query_model(llm_text: &str, graph: &Graph, prefixes: &PrefixMap) -> ExtractionOutcome {
    match extract_json(llm_text) {
        Err(_) => ExtractionOutcome::invalid(None, vec!["no JSON object found in model output".to_string()]),
        Ok((json, recovered)) => {
            let mut outcome = validate_query_model(&json, graph, prefixes);
            if recovered && outcome.status == ExtractionStatus::Valid {
                outcome.status = ExtractionStatus::Recovered;
                outcome
                    .diagnostics
                    .insert(0, "JSON recovered from surrounding text".to_string());
            }
            outcome
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SparqlError {
    #[error("no graph pattern is mapped for property '{0}'")]
    UnmappedProperty(String),
    #[error("operator '{0}' is not supported by this mapping")]
    UnsupportedOperator(String),
    #[error("the query model requests no properties")]
    NoProperties,
    #[error("invalid query model: {0}")]
    InvalidModel(String),
}

#[derive(Debug, thiserror::Error)]
pub enum MappingError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid pattern mapping: {0}")]
    Json(#[from] serde_json::Error),
}

/// Property CURIE to a SPARQL triple-pattern template.
///
/// Templates may use `$entity` (the entity term), `$var` (the value
/// variable, `?vN`) and `$n` (the variable's index, for helper variables like
/// `?obs$n`). The geo template uses `$var`, `$lat`, `$lon` and `$radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternMapping {
    pub property_patterns: BTreeMap<String, String>,
    #[serde(default)]
    pub geo_filter_template: Option<String>,
    /// Extra prefixes the templates rely on, e.g. GeoSPARQL functions.
    #[serde(default)]
    pub prefixes: PrefixMap,
}

impl PatternMapping {
    pub fn from_json(text: &str) -> Result<Self, MappingError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, MappingError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn pattern_for<'a>(&'a self, property: &str, prefixes: &PrefixMap) -> Option<&'a str> {
        let wanted = prefixes.expand(property);
        self.property_patterns
            .iter()
            .find(|(k, _)| prefixes.expand(k) == wanted)
            .map(|(_, v)| v.as_str())
    }
}

static DATETIME: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}(:\d{2}(\.\d+)?)?(Z|[+-]\d{2}:\d{2})?$").unwrap());
static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$").unwrap());

struct Compiler<'a> {
    prefixes: PrefixMap,
    mapping: &'a PatternMapping,
    patterns: Vec<String>,
    // (entity IRI, property IRI) -> variable index
    vars: Vec<(String, String)>,
}

impl<'a> Compiler<'a> {
    fn term(&self, curie: &str) -> String {
        turtle_term(&Term::iri(self.prefixes.expand(curie)), &self.prefixes)
    }

    fn var_for(&mut self, entity: &str, property: &str) -> Result<usize, SparqlError> {
        let key = (self.prefixes.expand(entity), self.prefixes.expand(property));
        if let Some(i) = self.vars.iter().position(|k| *k == key) {
            return Ok(i);
        }
        let template = self
            .mapping
            .pattern_for(property, &self.prefixes)
            .ok_or_else(|| SparqlError::UnmappedProperty(property.to_string()))?;
        let n = self.vars.len();
        let pattern = template
            .replace("$entity", &self.term(entity))
            .replace("$var", &format!("?v{n}"))
            .replace("$n", &n.to_string());
        self.patterns.push(pattern);
        self.vars.push(key);
        Ok(n)
    }

    fn literal(&self, value: &Value) -> Result<String, SparqlError> {
        Ok(match value {
            Value::Number(n) => n.to_string(),
            Value::Bool(b) => b.to_string(),
            Value::String(s) if NUMBER.is_match(s.trim()) => s.trim().to_string(),
            Value::String(s) if DATETIME.is_match(s) => {
                format!("\"{s}\"^^{}", self.term("http://www.w3.org/2001/XMLSchema#dateTime"))
            }
            Value::String(s) => match self.prefixes.split(&self.prefixes.expand(s)) {
                Some(_) if s.contains(':') && !s.contains(char::is_whitespace) => self.term(s),
                _ => format!("\"{}\"", crate::rdf::escape_string(s)),
            },
            other => return Err(SparqlError::InvalidModel(format!("value {other} is not a scalar"))),
        })
    }

    fn filter(&self, var: usize, f: &Filter) -> Result<String, SparqlError> {
        let v = format!("?v{var}");
        let value = f.value.as_ref().filter(|v| !v.is_null());
        let missing = || SparqlError::InvalidModel(format!("operator '{}' needs a value", f.operator));
        Ok(match f.operator {
            op if op.is_comparison() => {
                format!(
                    "FILTER({v} {} {})",
                    op.as_str(),
                    self.literal(value.ok_or_else(missing)?)?
                )
            }
            Operator::Contains => {
                let needle = match value.ok_or_else(missing)? {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                format!(
                    "FILTER(CONTAINS(LCASE(STR({v})), \"{}\"))",
                    crate::rdf::escape_string(&needle.to_lowercase())
                )
            }
            Operator::Bound => format!("FILTER(BOUND({v}))"),
            Operator::NotEmpty => format!("FILTER(STR({v}) != \"\")"),
            Operator::Between => match value {
                Some(Value::Array(pair)) if pair.len() == 2 => format!(
                    "FILTER({v} >= {} && {v} <= {})",
                    self.literal(&pair[0])?,
                    self.literal(&pair[1])?
                ),
                _ => return Err(SparqlError::InvalidModel("between needs a pair".into())),
            },
            Operator::WithinRadius => {
                let template = self
                    .mapping
                    .geo_filter_template
                    .as_deref()
                    .ok_or_else(|| SparqlError::UnsupportedOperator("within_radius".into()))?;
                let (lat, lon, radius) = value
                    .and_then(geo_value)
                    .ok_or_else(|| SparqlError::InvalidModel("within_radius needs lat, lon and radius".into()))?;
                template
                    .replace("$var", &v)
                    .replace("$lat", &lat.to_string())
                    .replace("$lon", &lon.to_string())
                    .replace("$radius", &radius.to_string())
            }
            op => return Err(SparqlError::UnsupportedOperator(op.to_string())),
        })
    }
}

/// Compiles a validated model to a SPARQL SELECT query.
///
/// Requested properties bind `?v0, ?v1, ...` in model order; filters on
/// other properties get further variables that are joined but not selected.
pub fn build_sparql(model: &QueryModel, prefixes: &PrefixMap, mapping: &PatternMapping) -> Result<String, SparqlError> {
    if model.properties.is_empty() {
        return Err(SparqlError::NoProperties);
    }
    let mut merged = prefixes.clone();
    merged.merge(&mapping.prefixes);
    merged.merge(&PrefixMap::common());
    let mut c = Compiler {
        prefixes: merged,
        mapping,
        patterns: Vec::new(),
        vars: Vec::new(),
    };

    let mut selected = Vec::new();
    for p in &model.properties {
        let v = c.var_for(&p.entity, &p.property)?;
        if !selected.contains(&v) {
            selected.push(v);
        }
    }
    let mut filters = Vec::new();
    for f in &model.filters {
        let v = c.var_for(&f.entity, &f.property)?;
        filters.push(c.filter(v, f)?);
    }
    let order = match &model.sort {
        Some(sort) => {
            let wanted = c.prefixes.expand(&sort.property);
            let v = c.vars.iter().position(|(_, p)| *p == wanted).ok_or_else(|| {
                SparqlError::InvalidModel(format!("sort property '{}' is not requested", sort.property))
            })?;
            Some(match sort.direction {
                Direction::Asc => format!("ORDER BY ASC(?v{v})"),
                Direction::Desc => format!("ORDER BY DESC(?v{v})"),
            })
        }
        None => None,
    };

    let mut body = String::new();
    body.push_str("SELECT ");
    body.push_str(&selected.iter().map(|v| format!("?v{v}")).collect::<Vec<_>>().join(" "));
    body.push_str("\nWHERE {\n");
    for line in c.patterns.iter().chain(&filters) {
        body.push_str("  ");
        body.push_str(line);
        body.push('\n');
    }
    body.push('}');
    if let Some(order) = order {
        body.push('\n');
        body.push_str(&order);
    }
    if let Some(limit) = model.limit {
        body.push_str(&format!("\nLIMIT {limit}"));
    }

    let mut query = String::new();
    for (label, ns) in c.prefixes.iter() {
        if uses_prefix(&body, label) {
            query.push_str(&format!("PREFIX {label}: <{ns}>\n"));
        }
    }
    if !query.is_empty() {
        query.push('\n');
    }
    query.push_str(&body);
    Ok(query)
}

fn uses_prefix(body: &str, label: &str) -> bool {
    let needle = format!("{label}:");
    body.match_indices(&needle).any(|(i, _)| {
        let before = body[..i].chars().next_back();
        let after = body[i + needle.len()..].chars().next();
        !before.is_some_and(|c| c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | '<' | '/' | '#'))
            && !after.is_some_and(|c| c == '/')
    })
}
