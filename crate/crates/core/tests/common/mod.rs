#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use ldrag_core::llm::LlmConfig;
use ldrag_core::pipeline::{ExamplePaths, Pipeline, PipelineConfig, TemplatePaths};
use ldrag_core::rdf::{load_graph, Graph, InclusionFilter, PrefixMap, Term};
use ldrag_core::subgraph::build_subgraphs;
use ldrag_core::{EmbedderConfig, PatternMapping, WalkConfig};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn data(rel: &str) -> PathBuf {
    data_dir().join(rel)
}

pub fn read(rel: &str) -> String {
    std::fs::read_to_string(data(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn forest() -> Graph {
    load_graph(data("forest.ttl")).unwrap()
}

pub fn filtered_forest() -> Graph {
    InclusionFilter::from_json_file(data("inclusion_filter.json"))
        .unwrap()
        .apply(&forest())
}

/// Graph prefixes, the bundled prefix file and the common vocabularies.
pub fn bundled_prefixes() -> PrefixMap {
    let mut p = forest().prefixes().clone();
    p.merge(&PrefixMap::from_json_file(data("prefixes.json")).unwrap());
    p.merge(&PrefixMap::common());
    p
}

pub fn mapping() -> PatternMapping {
    PatternMapping::from_json_file(data("pattern_mapping.json")).unwrap()
}

pub fn config_with_mock(script: &str) -> PipelineConfig {
    let mut config = PipelineConfig {
        graph: "forest.ttl".into(),
        prefixes: Some("prefixes.json".into()),
        inclusion_filter: Some("inclusion_filter.json".into()),
        walk: WalkConfig::default(),
        embedder: EmbedderConfig::default(),
        llm: LlmConfig::mock(script),
        templates: TemplatePaths {
            structured_query: "prompts/uc1_detailed.json".into(),
            schema_answer: "prompts/uc2_schema.json".into(),
        },
        examples: ExamplePaths {
            structured_query: Some("prompts/uc1_examples.json".into()),
            schema_answer: None,
        },
        pattern_mapping: "pattern_mapping.json".into(),
        index: None,
        render: Default::default(),
        k_rank: 10,
        k_union: 2,
    };
    config.resolve_paths(&data_dir());
    config
}

pub fn pipeline_with_mock(script: &str) -> Pipeline {
    Pipeline::from_config(&config_with_mock(script)).unwrap()
}

/// Minimal structural check of the SELECT queries the compiler emits:
/// declared prefixes, one WHERE block, balanced brackets, terminated triple
/// patterns, and solution modifiers that refer to bound variables.
pub fn check_select(query: &str) -> Result<(), String> {
    use regex::Regex;
    use std::collections::BTreeSet;

    let prefix_re = Regex::new(r"^PREFIX ([A-Za-z][\w-]*): <[^<>\s]+>$").unwrap();
    let var_re = Regex::new(r"\?[A-Za-z_]\w*").unwrap();
    let curie_re = Regex::new(r#"(?:^|[\s(;,])([A-Za-z][\w-]*):[A-Za-z_]"#).unwrap();

    let mut lines = query.lines().peekable();
    let mut declared = BTreeSet::new();
    while let Some(line) = lines.peek() {
        if !line.starts_with("PREFIX ") {
            break;
        }
        let caps = prefix_re.captures(line).ok_or(format!("bad prefix line {line:?}"))?;
        declared.insert(caps[1].to_string());
        lines.next();
    }
    if !declared.is_empty() && lines.next() != Some("") {
        return Err("expected a blank line after the prologue".into());
    }
    let select = lines.next().ok_or("missing SELECT")?;
    let projected: Vec<&str> = select
        .strip_prefix("SELECT ")
        .ok_or(format!("expected SELECT, got {select:?}"))?
        .split(' ')
        .collect();
    if projected.is_empty()
        || projected
            .iter()
            .any(|v| !var_re.is_match(v) || var_re.find(v).unwrap().as_str() != *v)
    {
        return Err(format!("bad projection {select:?}"));
    }
    if lines.next() != Some("WHERE {") {
        return Err("expected WHERE {".into());
    }
    let mut bound = BTreeSet::new();
    let mut closed = false;
    for line in lines.by_ref() {
        if line == "}" {
            closed = true;
            break;
        }
        let body = line
            .strip_prefix("  ")
            .ok_or(format!("unindented body line {line:?}"))?;
        if body.starts_with("FILTER(") {
            let mut depth = 0i32;
            let mut in_str = false;
            for c in body.chars() {
                match c {
                    '"' => in_str = !in_str,
                    '(' if !in_str => depth += 1,
                    ')' if !in_str => depth -= 1,
                    _ => {}
                }
                if depth < 0 {
                    return Err(format!("unbalanced parentheses in {body:?}"));
                }
            }
            if depth != 0 || in_str || !body.ends_with(')') {
                return Err(format!("unbalanced filter {body:?}"));
            }
            for v in var_re.find_iter(body) {
                if !bound.contains(v.as_str()) {
                    return Err(format!("filter uses unbound {}", v.as_str()));
                }
            }
        } else {
            if !body.ends_with(" .") {
                return Err(format!("triple pattern not terminated: {body:?}"));
            }
            for v in var_re.find_iter(body) {
                bound.insert(v.as_str().to_string());
            }
        }
        for c in curie_re.captures_iter(body) {
            if !declared.contains(&c[1]) && !body.contains(&format!("\"{}:", &c[1])) {
                return Err(format!("undeclared prefix {}", &c[1]));
            }
        }
    }
    if !closed {
        return Err("WHERE block not closed".into());
    }
    for v in &projected {
        if !bound.contains(*v) {
            return Err(format!("projected {v} is never bound"));
        }
    }
    for line in lines {
        if let Some(rest) = line.strip_prefix("ORDER BY ") {
            let inner = rest
                .strip_prefix("ASC(")
                .or_else(|| rest.strip_prefix("DESC("))
                .and_then(|r| r.strip_suffix(')'))
                .ok_or(format!("bad ORDER BY {line:?}"))?;
            if !bound.contains(inner) {
                return Err(format!("ORDER BY unbound {inner}"));
            }
        } else if let Some(n) = line.strip_prefix("LIMIT ") {
            if n.parse::<u64>().map_or(true, |n| n == 0) {
                return Err(format!("bad LIMIT {n:?}"));
            }
        } else {
            return Err(format!("unexpected trailing line {line:?}"));
        }
    }
    Ok(())
}

pub fn random_graph(rng: &mut StdRng) -> Graph {
    let nodes = rng.random_range(2..=15usize);
    let triples = rng.random_range(1..=50usize);
    let node = |i: usize| -> Term {
        match i % 5 {
            4 => Term::blank(format!("b{i}")),
            _ => Term::iri(format!("http://ex.org/n{i}")),
        }
    };
    let statements: Vec<_> = (0..triples)
        .map(|_| {
            let s = node(rng.random_range(0..nodes));
            let p = Term::iri(format!("http://ex.org/p{}", rng.random_range(0..3)));
            let o = if rng.random_bool(0.25) {
                Term::literal(format!("v{}", rng.random_range(0..3)))
            } else {
                node(rng.random_range(0..nodes))
            };
            (s, p, o)
        })
        .collect();
    Graph::from_statements(statements, PrefixMap::new()).unwrap()
}

fn nodes_of(graph: &Graph, id: usize, literals: bool) -> Vec<&Term> {
    let t = graph.get(id).unwrap();
    let mut out = vec![&t.subject];
    if literals || !t.object.is_literal() {
        out.push(&t.object);
    }
    out
}

/// Adjacency by comparing every pair of triples, then `depth` rounds of expansion.
#[allow(clippy::needless_range_loop)]
pub fn subgraph_oracle(graph: &Graph, config: WalkConfig) -> Vec<Vec<usize>> {
    let n = graph.len();
    let lit = config.connect_via_literals;
    let mut adj = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            let a = nodes_of(graph, i, lit);
            let b = nodes_of(graph, j, lit);
            adj[i][j] = i == j || a.iter().any(|x| b.contains(x));
        }
    }
    let adj = &adj;
    (0..n)
        .map(|seed| {
            let mut reach = BTreeSet::from([seed]);
            for _ in 0..config.depth {
                let next: BTreeSet<usize> = reach.iter().flat_map(|&r| (0..n).filter(move |&j| adj[r][j])).collect();
                reach.extend(next);
            }
            reach.into_iter().collect()
        })
        .collect()
}

/// Compares `build_subgraphs` with the oracle on `cases` random graphs,
/// alternating depth 1 and 2, with and without literal connections. Returns
/// the number of (graph, config) pairs checked.
pub fn subgraph_oracle_check(seed: u64, cases: usize) -> Result<usize, String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut checked = 0;
    for case in 0..cases {
        let graph = random_graph(&mut rng);
        let depth = 1 + case % 2;
        for literals in [false, true] {
            let config = WalkConfig {
                depth,
                connect_via_literals: literals,
            };
            let map = build_subgraphs(&graph, config).map_err(|e| e.to_string())?;
            for (id, want) in subgraph_oracle(&graph, config).iter().enumerate() {
                if map.get(id) != Some(want.as_slice()) {
                    return Err(format!(
                        "case {case} depth {depth} literals {literals} triple {id}\n{}",
                        graph.to_ntriples()
                    ));
                }
            }
            checked += 1;
        }
    }
    Ok(checked)
}
