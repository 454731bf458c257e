//! Drives the `ldrag` binary as a separate process.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::Duration;

use serde_json::Value;

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn ldrag(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ldrag"));
    cmd.args(args).env_remove("LDRAG_CONFIG").env_remove("RUST_LOG");
    cmd
}

fn run(args: &[&str]) -> Output {
    ldrag(args).output().unwrap()
}

fn with_config(args: &[&str]) -> Output {
    let config = data("ldrag.toml");
    let mut all = vec!["--config", config.to_str().unwrap()];
    all.extend_from_slice(args);
    run(&all)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(o: &Output) -> Value {
    assert_eq!(code(o), 0, "stderr: {}", stderr(o));
    serde_json::from_str(&stdout(o)).unwrap()
}

/// Copy of the bundled config with absolute paths and the index in `dir`.
fn temp_config(dir: &Path) -> PathBuf {
    let text = std::fs::read_to_string(data("ldrag.toml")).unwrap();
    let base = data("").canonicalize().unwrap();
    let mut out = String::new();
    for line in text.lines() {
        let line = match line.split_once(" = \"") {
            Some((key, rest)) if rest.ends_with(".json\"") || rest.ends_with(".ttl\"") => {
                let rel = rest.trim_end_matches('"');
                if key == "index" {
                    format!("index = {:?}", dir.join("forest.index.json").to_str().unwrap())
                } else {
                    format!("{key} = {:?}", base.join(rel).to_str().unwrap())
                }
            }
            _ => line.to_string(),
        };
        out.push_str(&line);
        out.push('\n');
    }
    let path = dir.join("ldrag.toml");
    std::fs::write(&path, out).unwrap();
    path
}

#[test]
fn ingest_reports_graph_sizes() {
    let v = json(&with_config(&["ingest", "--json"]));
    assert_eq!(v["triples"], 165);
    assert_eq!(v["filtered"], 105);
}

#[test]
fn ingest_writes_filtered_ntriples() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("filtered.nt");
    let o = with_config(&["ingest", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(out).unwrap();
    assert_eq!(text.lines().count(), 105);
    assert!(text.lines().all(|l| l.ends_with(" .")));
}

#[test]
fn index_then_ask_in_separate_processes() {
    let dir = tempfile::tempdir().unwrap();
    let config = temp_config(dir.path());
    let config = config.to_str().unwrap();
    let o = run(&["--config", config, "index"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("indexed 105 triples with builtin-fnv1a64-d256"));
    assert!(dir.path().join("forest.index.json").is_file());

    let o = run(&["--config", config, "ask", "Show rainfall above 10mm"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let golden = std::fs::read_to_string(data("fixtures/golden_sparql/1.1.rq")).unwrap();
    assert_eq!(stdout(&o).trim_end(), golden.trim_end());
}

#[test]
fn stale_index_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = temp_config(dir.path());
    let config = config.to_str().unwrap();
    assert_eq!(code(&run(&["--config", config, "index"])), 0);
    let text = std::fs::read_to_string(config)
        .unwrap()
        .replace("dimension = 256", "dimension = 64");
    std::fs::write(config, text).unwrap();
    let o = run(&["--config", config, "ask", "Show rainfall above 10mm"]);
    assert_eq!(code(&o), 2);
    assert!(
        stderr(&o).contains("does not match the index embedder"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn ask_json_carries_prompt_and_sparql() {
    let v = json(&with_config(&[
        "ask",
        "Show rainfall above 10mm",
        "--shots",
        "few",
        "--json",
    ]));
    assert_eq!(v["shots"], "few");
    assert_eq!(v["answer"]["kind"], "structured-query");
    assert!(v["answer"]["sparql"].as_str().unwrap().contains("FILTER(?v0 > 10)"));
    assert!(!v["prompt"]["messages"].as_array().unwrap().is_empty());
}

#[test]
fn ask_schema_answer_prints_text() {
    let o = with_config(&["ask", "What does HDOP stand for?", "--mode", "schema-answer"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("Horizontal Dilution of Precision"));
}

#[test]
fn failed_extraction_exits_with_pipeline_code() {
    let o = with_config(&["ask", "What is the meaning of life?"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no valid query model"));
}

#[test]
fn retrieve_json_respects_k() {
    let v = json(&with_config(&[
        "retrieve",
        "Rain Gauge observes Rainfall in millimetres per hour",
        "--k-rank",
        "4",
        "--k-union",
        "1",
        "--json",
    ]));
    assert_eq!(v["ranked"].as_array().unwrap().len(), 4);
    assert_eq!(v["ranked"][0]["triple_id"], 38);
    let ids = v["context_ids"].as_array().unwrap();
    assert!(ids.contains(&Value::from(38)));
}

#[test]
fn usage_errors_exit_with_one() {
    for args in [
        vec!["frobnicate"],
        vec!["ask"],
        vec!["ask", "q", "--shots", "many"],
        vec!["--config", "/nonexistent/ldrag.toml", "ingest"],
    ] {
        let o = run(&args);
        assert_eq!(code(&o), 1, "{args:?}: {}", stderr(&o));
    }
    let o = with_config(&["retrieve", "q", "--k-rank", "1", "--k-union", "3"]);
    assert_eq!(code(&o), 1);
    let o = run(&[
        "compare",
        data("fixtures/metrics_batch.jsonl").to_str().unwrap(),
        "--alpha",
        "2",
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn missing_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = ldrag(&["ingest"]).current_dir(dir.path()).output().unwrap();
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--config"));
}

#[test]
fn help_exits_zero() {
    let o = run(&["--help"]);
    assert_eq!(code(&o), 0);
    for verb in [
        "ingest",
        "index",
        "ask",
        "retrieve",
        "eval",
        "compare-prompts",
        "compare-embedders",
        "compare",
        "serve",
    ] {
        assert!(stdout(&o).contains(verb), "{verb}");
    }
}

#[test]
fn config_from_environment() {
    let o = ldrag(&["ingest", "--json"])
        .env("LDRAG_CONFIG", data("ldrag.toml"))
        .output()
        .unwrap();
    assert_eq!(json(&o)["triples"], 165);
}

#[test]
fn compare_reads_jsonl_from_stdin() {
    let input = std::fs::read(data("fixtures/metrics_batch.jsonl")).unwrap();
    let mut child = ldrag(&["compare", "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(&input).unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(code(&o), 0);
    let lines: Vec<Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 6);
    let expected = [
        ("subset", 0.952380952381, 1.0, 0.976190476190),
        ("identical", 1.0, 1.0, 1.0),
        ("disjoint", 0.0, 0.0, 0.0),
        ("paraphrase", 1.0, 0.741581623797, 0.870790811899),
        ("full-iri", 0.909090909091, 1.0, 0.954545454545),
    ];
    for (row, (id, strss, semss, ojss)) in lines.iter().zip(expected) {
        assert_eq!(row["id"], id);
        for (key, want) in [("strss", strss), ("semss", semss), ("ojss", ojss)] {
            let got = row[key].as_f64().unwrap();
            assert!((got - want).abs() < 1e-9, "{id} {key}: {got} vs {want}");
        }
    }
    assert_eq!(lines[5]["summary"]["count"], 5);
}

#[test]
fn eval_writes_reports_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let suite = data("suites/uc1_suite.json");
    let mut reports = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = with_config(&[
            "eval",
            "--suite",
            suite.to_str().unwrap(),
            "--trials",
            "2",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(stdout(&o).contains("G4 Complex Indirect Queries"));
        let csv = std::fs::read_to_string(out.join("heatmap.csv")).unwrap();
        assert_eq!(csv.lines().next(), Some("group,zero,few"));
        assert_eq!(csv.lines().count(), 5);
        assert!(out.join("report.txt").is_file());
        reports.push(std::fs::read_to_string(out.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let report: Value = serde_json::from_str(&reports[0]).unwrap();
    assert_eq!(report["accuracy"]["trials"], 80);
    assert_eq!(report["accuracy"]["mean"], 1.0);
}

#[test]
fn eval_applies_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let verdicts = dir.path().join("verdicts.json");
    std::fs::write(&verdicts, r#"{"1.1:zero:0": false}"#).unwrap();
    let v = json(&with_config(&[
        "eval",
        "--suite",
        data("suites/uc1_suite.json").to_str().unwrap(),
        "--trials",
        "1",
        "--modes",
        "zero",
        "--verdicts",
        verdicts.to_str().unwrap(),
        "--json",
    ]));
    assert_eq!(v["accuracy"]["correct"], 19);
    assert_eq!(v["accuracy"]["trials"], 20);
}

#[test]
fn compare_prompts_reports_relative_improvement() {
    let v = json(&with_config(&[
        "compare-prompts",
        "--suite",
        data("suites/uc1_suite.json").to_str().unwrap(),
        "--a",
        data("prompts/uc1_concise.json").to_str().unwrap(),
        "--b",
        data("prompts/uc1_detailed.json").to_str().unwrap(),
        "--a-mock",
        data("mocks/uc1_arm_concise.json").to_str().unwrap(),
        "--b-mock",
        data("mocks/uc1_arm_detailed.json").to_str().unwrap(),
        "--trials",
        "1",
        "--modes",
        "zero",
        "--json",
    ]));
    let got: Vec<String> = v["tasks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| format!("{:.2}", t["improvement_pct"].as_f64().unwrap()))
        .collect();
    assert_eq!(got, ["5.56", "30.77", "42.86"]);
}

#[test]
fn compare_embedders_table_and_json() {
    let suite = data("suites/retrieval_gold.json");
    let v = json(&with_config(&[
        "compare-embedders",
        "--suite",
        suite.to_str().unwrap(),
        "--embedder",
        "wide=builtin:256",
        "--embedder",
        "narrow=builtin:64",
        "--json",
    ]));
    assert_eq!(v["k_values"], serde_json::json!([1, 2]));
    assert_eq!(v["rows"][0]["name"], "wide");
    assert_eq!(v["rows"][0]["accuracy"], serde_json::json!([0.7, 0.8]));
    let o = with_config(&["compare-embedders", "--suite", suite.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("configured"));
    let o = with_config(&[
        "compare-embedders",
        "--suite",
        suite.to_str().unwrap(),
        "--embedder",
        "oops",
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn serve_answers_health_checks() {
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let listen = format!("127.0.0.1:{port}");
    let config = data("ldrag.toml");
    let mut child = ldrag(&["--config", config.to_str().unwrap(), "serve", "--listen", &listen])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(5)))
        .build()
        .into();
    let mut body = None;
    for _ in 0..300 {
        std::thread::sleep(Duration::from_millis(50));
        if let Ok(mut r) = agent.get(format!("http://{listen}/healthz")).call() {
            if r.status() == 200 {
                body = Some(r.body_mut().read_to_string().unwrap());
                break;
            }
        }
    }
    child.kill().unwrap();
    let _ = child.wait();
    let v: Value = serde_json::from_str(&body.expect("service became ready")).unwrap();
    assert_eq!(v["status"], "ok");
    assert_eq!(v["indexed"], 105);
}
