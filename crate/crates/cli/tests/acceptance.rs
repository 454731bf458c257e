//! Acceptance run: one PASS/FAIL line per criterion with its wall time.
//! Exits non-zero when any criterion fails or overruns its time budget.

#[path = "../../core/tests/common/mod.rs"]
mod core_common;
#[path = "../../service/tests/common/mod.rs"]
mod service_common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use core_common::{bundled_prefixes, data, filtered_forest, pipeline_with_mock, read, subgraph_oracle_check};
use ldrag_core::extract::ExtractionStatus;
use ldrag_core::harness::{compare_prompts, load_suite, run_suite, HarnessOptions, PromptArm, QuestionSpec, Verdicts};
use ldrag_core::llm::MockChat;
use ldrag_core::metrics::{compare, ojss, SnippetDetector};
use ldrag_core::pipeline::ShotMode;
use ldrag_core::retrieval::{build_index, load_labeled_suite};
use ldrag_core::subgraph::build_subgraphs;
use ldrag_core::{EmbedderConfig, MetricConfig, MockScript, PromptTemplate, WalkConfig};
use serde_json::{json, Value};

const STRSS_TOL: f64 = 1e-6;
const IDENTITY_TOL: f64 = 1e-9;
const SUITE_BUDGET: Duration = Duration::from_secs(60);

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, Box<dyn Fn() -> Outcome>);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn uc1() -> Vec<QuestionSpec> {
    load_suite(data("suites/uc1_suite.json")).unwrap()
}

fn metric_exactness() -> Outcome {
    let config = MetricConfig::default();
    let r = compare(&json!({"a": 1, "b": 2}), &json!({"a": 1, "b": 2, "c": 3}), &config).map_err(|e| e.to_string())?;
    ensure(
        (r.strss - 0.952381).abs() <= STRSS_TOL,
        format!("subset strss {}", r.strss),
    )?;

    let model = json!({
        "entities": [{"name": "Rain Gauge", "uri": "forest:RainGauge"}],
        "properties": [{"entity": "forest:RainGauge", "property": "forest:Rainfall"}],
        "filters": [{"entity": "forest:RainGauge", "property": "forest:Rainfall", "operator": ">", "value": 10}]
    });
    let same = compare(&model, &model, &config).map_err(|e| e.to_string())?;
    for v in [same.strss, same.semss, same.ojss] {
        ensure((v - 1.0).abs() <= IDENTITY_TOL, format!("identical pair {same:?}"))?;
    }
    let disjoint = compare(&json!({"a": "x"}), &json!({"b": "x"}), &config).map_err(|e| e.to_string())?;
    ensure(
        disjoint.strss == 0.0 && disjoint.semss == 0.0,
        format!("disjoint {disjoint:?}"),
    )?;
    ensure(ojss(0.8, 0.6, 0.5) == 0.7, "ojss(0.8, 0.6) != 0.7")?;
    Ok(format!(
        "subset strss {:.6}, identical 1/1/1, disjoint 0/0, ojss 0.7",
        r.strss
    ))
}

fn subgraph_oracle() -> Outcome {
    let checked = subgraph_oracle_check(0x5eed, 200)?;
    Ok(format!("200 random graphs, {checked} configurations match"))
}

fn top2_union() -> Outcome {
    let graph = filtered_forest();
    let suite = load_labeled_suite(data("suites/retrieval_gold.json")).map_err(|e| e.to_string())?;
    ensure(suite.len() == 20, format!("gold suite has {} queries", suite.len()))?;
    let embedder = EmbedderConfig::default().build().map_err(|e| e.to_string())?;
    let map = build_subgraphs(&graph, WalkConfig::default()).map_err(|e| e.to_string())?;
    let index = build_index(&graph, &map, embedder.as_ref()).map_err(|e| e.to_string())?;
    let mut hits = [0usize; 2];
    let mut strict = 0;
    for q in &suite {
        let ctx = |k| -> Result<BTreeSet<usize>, String> {
            let r = index
                .retrieve(embedder.as_ref(), &q.query, 10, k)
                .map_err(|e| e.to_string())?;
            Ok(r.context_ids.into_iter().collect())
        };
        let (c1, c2) = (ctx(1)?, ctx(2)?);
        ensure(
            c1.is_subset(&c2),
            format!("context(k=1) not within context(k=2) for '{}'", q.query),
        )?;
        let (h1, h2) = (q.gold.is_subset(&c1), q.gold.is_subset(&c2));
        hits[0] += h1 as usize;
        hits[1] += h2 as usize;
        strict += (h2 && !h1) as usize;
    }
    let acc1 = index
        .retrieval_accuracy(embedder.as_ref(), &suite, 1)
        .map_err(|e| e.to_string())?;
    let acc2 = index
        .retrieval_accuracy(embedder.as_ref(), &suite, 2)
        .map_err(|e| e.to_string())?;
    ensure(acc2 >= acc1, format!("accuracy fell from {acc1} to {acc2}"))?;
    ensure(strict >= 2, format!("only {strict} strict improvements"))?;
    Ok(format!(
        "accuracy {:.2} -> {:.2} ({}/{} -> {}/{}), {strict} strict improvements",
        acc1,
        acc2,
        hits[0],
        suite.len(),
        hits[1],
        suite.len()
    ))
}

fn e2e_mock() -> Outcome {
    let options = HarnessOptions::default();
    let questions = uc1();
    let run = |script: &str| run_suite(&questions, &pipeline_with_mock(script), &options, &Verdicts::new());

    let correct = run("mocks/uc1_correct.json").map_err(|e| e.to_string())?.report;
    ensure(
        correct.accuracy.mean == 1.0,
        format!("correct script accuracy {}", correct.accuracy.mean),
    )?;
    for t in &correct.trials {
        let want = read(&format!("fixtures/golden_sparql/{}.rq", t.question_id));
        ensure(
            t.sparql.as_deref() == Some(want.as_str()),
            format!("{} differs from its golden SPARQL", t.key),
        )?;
    }

    let prose = run("mocks/uc1_prose.json").map_err(|e| e.to_string())?.report;
    ensure(
        prose.accuracy.mean == 1.0,
        format!("prose accuracy {}", prose.accuracy.mean),
    )?;
    ensure(
        prose.trials.iter().all(|t| {
            t.extraction
                .as_ref()
                .is_some_and(|e| e.status == ExtractionStatus::Recovered)
        }),
        "a prose trial was not flagged recovered",
    )?;

    let nojson = run("mocks/uc1_nojson.json").map_err(|e| e.to_string())?.report;
    ensure(
        nojson.accuracy.mean == 0.0,
        format!("no-JSON accuracy {}", nojson.accuracy.mean),
    )?;
    for t in &nojson.trials {
        let diag = t.extraction.as_ref().is_some_and(|e| !e.diagnostics.is_empty()) || !t.diagnostics.is_empty();
        ensure(diag, format!("{} has no diagnostic", t.key))?;
    }
    Ok(format!(
        "{} trials per script: correct 100% with golden SPARQL, prose 100% recovered, no-JSON 0% with diagnostics",
        correct.trials.len()
    ))
}

fn prompt_ab() -> Outcome {
    let pipeline = pipeline_with_mock("mocks/uc1_correct.json");
    let arm = |template: &str, script: &str| -> Result<PromptArm, String> {
        let script = MockScript::from_json_file(data(script)).map_err(|e| e.to_string())?;
        Ok(PromptArm {
            template: PromptTemplate::from_json_file(data(template)).map_err(|e| e.to_string())?,
            llm: Some(std::sync::Arc::new(MockChat::new(script).map_err(|e| e.to_string())?)),
        })
    };
    let options = HarnessOptions {
        modes: vec![ShotMode::Zero],
        trials_per_mode: 1,
        ..HarnessOptions::default()
    };
    let cmp = compare_prompts(
        &uc1(),
        &pipeline,
        &arm("prompts/uc1_concise.json", "mocks/uc1_arm_concise.json")?,
        &arm("prompts/uc1_detailed.json", "mocks/uc1_arm_detailed.json")?,
        &options,
    )
    .map_err(|e| e.to_string())?;
    ensure(cmp.tasks.len() == 3, format!("{} tasks", cmp.tasks.len()))?;
    let filters = &cmp.tasks[2];
    let pct = filters.improvement_pct.map(|p| format!("{p:.2}")).unwrap_or_default();
    ensure(
        (filters.accuracy_a, filters.accuracy_b) == (0.35, 0.5),
        format!("filters {} -> {}", filters.accuracy_a, filters.accuracy_b),
    )?;
    ensure(pct == "42.86", format!("filters improvement {pct}%"))?;
    Ok(format!("filters 35% -> 50% = {pct}%"))
}

fn snippet_detector() -> Outcome {
    // Hand count of schema answers in the bundled script that quote RDF.
    const HAND_SNIPPETS: usize = 3;
    let cases: Vec<Value> = serde_json::from_str(&read("fixtures/snippet_corpus.json")).map_err(|e| e.to_string())?;
    ensure(cases.len() == 20, format!("corpus has {} items", cases.len()))?;
    let detector = SnippetDetector::with_prefixes(&bundled_prefixes());
    let wrong = cases
        .iter()
        .filter(|c| detector.detect(c["text"].as_str().unwrap_or_default()) != c["snippet"].as_bool().unwrap_or(false))
        .count();
    ensure(wrong == 0, format!("{wrong} misclassifications"))?;

    let suite = load_suite(data("suites/uc2_suite.json")).map_err(|e| e.to_string())?;
    let report = run_suite(
        &suite,
        &pipeline_with_mock("mocks/uc2_answers.json"),
        &HarnessOptions::default(),
        &Verdicts::new(),
    )
    .map_err(|e| e.to_string())?
    .report;
    let expected = HAND_SNIPPETS as f64 / suite.len() as f64;
    ensure(
        report.snippet_rate == Some(expected),
        format!("snippet rate {:?}, hand count gives {expected}", report.snippet_rate),
    )?;
    Ok(format!(
        "corpus 0/20 wrong; snippet rate {HAND_SNIPPETS}/{} = {expected}",
        suite.len()
    ))
}

fn determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("ldrag-acceptance-{}", std::process::id()));
    let mut reports = Vec::new();
    for run in ["first", "second"] {
        let mut texts = Vec::new();
        for suite in ["uc1_suite", "uc2_suite"] {
            let out = dir.join(run).join(suite);
            let status = Command::new(env!("CARGO_BIN_EXE_ldrag"))
                .arg("--config")
                .arg(data("ldrag.toml"))
                .arg("eval")
                .arg("--suite")
                .arg(data(&format!("suites/{suite}.json")))
                .arg("--out")
                .arg(&out)
                .env_remove("LDRAG_CONFIG")
                .output()
                .map_err(|e| e.to_string())?;
            ensure(
                status.status.success(),
                format!("eval failed: {}", String::from_utf8_lossy(&status.stderr)),
            )?;
            texts.push(std::fs::read_to_string(out.join("report.json")).map_err(|e| e.to_string())?);
        }
        reports.push(texts);
    }
    let _ = std::fs::remove_dir_all(&dir);
    ensure(reports[0] == reports[1], "reports differ between runs")?;
    let bytes: usize = reports[0].iter().map(String::len).sum();
    Ok(format!("two eval runs of both suites byte-identical ({bytes} bytes)"))
}

fn service_contract(started: Instant) -> Outcome {
    let n = service_common::replay_fixtures(false).map_err(|f| f.join("; "))?;
    ensure(n >= 20, format!("only {n} fixtures"))?;
    let mut statuses = BTreeSet::new();
    for entry in std::fs::read_dir(data("fixtures/service")).map_err(|e| e.to_string())? {
        let text = std::fs::read_to_string(entry.map_err(|e| e.to_string())?.path()).map_err(|e| e.to_string())?;
        let v: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        statuses.insert(v["response"]["status"].as_u64().unwrap_or(0));
    }
    for code in [400, 422, 502, 503] {
        ensure(statuses.contains(&code), format!("no fixture covers status {code}"))?;
    }
    let elapsed = started.elapsed();
    ensure(elapsed < SUITE_BUDGET, format!("acceptance run took {elapsed:?}"))?;
    Ok(format!(
        "{n} fixtures over loopback stubs, statuses {statuses:?}; all criteria in {:.1}s",
        elapsed.as_secs_f64()
    ))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let criteria: Vec<Criterion> = vec![
        ("metric exactness", Duration::from_secs(1), Box::new(metric_exactness)),
        (
            "subgraph oracle equivalence",
            Duration::from_secs(30),
            Box::new(subgraph_oracle),
        ),
        ("top-2 union property", Duration::from_secs(10), Box::new(top2_union)),
        (
            "end-to-end pipeline under mock LLM",
            Duration::from_secs(30),
            Box::new(e2e_mock),
        ),
        ("prompt A/B harness", SUITE_BUDGET, Box::new(prompt_ab)),
        ("snippet detector", SUITE_BUDGET, Box::new(snippet_detector)),
        ("determinism", SUITE_BUDGET, Box::new(determinism)),
        (
            "service contract",
            SUITE_BUDGET,
            Box::new(move || service_contract(started)),
        ),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = t.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > *budget => Err(format!("{detail}; over the {budget:?} budget")),
            other => other,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        failed += outcome.is_err() as usize;
        println!("{tag} [{}] {name} ({:.3}s): {detail}", i + 1, elapsed.as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
