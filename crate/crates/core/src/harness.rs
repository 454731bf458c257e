//! Experiment runner: question suites, zero-/few-shot trials, binary
//! accuracy against references, metric aggregation, prompt A/B runs and
//! embedder comparisons.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::embedder::Embedder;
use crate::extract::{ExtractionOutcome, ExtractionStatus};
use crate::llm::ChatModel;
use crate::metrics::{canonical_value, flatten, MetricConfig, MetricError, MetricReport, Scorer};
use crate::pipeline::{Answer, Pipeline, PipelineError, ShotMode};
use crate::prompt::{PromptMode, PromptTemplate};
use crate::rdf::{Graph, PrefixMap};
use crate::retrieval::{build_index, LabeledQuery, RetrievalError};
use crate::subgraph::{build_subgraphs, WalkConfig};

pub const SECTIONS: [&str; 3] = ["entities", "properties", "filters"];

pub const GROUP_NAMES: [&str; 4] = [
    "Simple Direct Queries",
    "Complex Direct Queries",
    "Simple Indirect Queries",
    "Complex Indirect Queries",
];

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("the suite has no questions")]
    EmptySuite,
    #[error("question {id}: {message}")]
    InvalidQuestion { id: String, message: String },
    #[error("question {0} has no gold triples")]
    MissingGold(String),
    #[error("templates differ in mode: {0:?} vs {1:?}")]
    ModeMismatch(PromptMode, PromptMode),
    #[error("invalid harness options: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSpec {
    /// `group.index`, e.g. `3.10`.
    pub id: String,
    pub group: u8,
    pub text: String,
    pub use_case: u8,
    /// Query model JSON for use case 1, reference text for use case 2.
    #[serde(default)]
    pub reference: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_triples: Option<BTreeSet<usize>>,
}

impl QuestionSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |message: &str| HarnessError::InvalidQuestion {
            id: self.id.clone(),
            message: message.to_string(),
        };
        if !(1..=4).contains(&self.group) {
            return Err(bad("group must be 1..4"));
        }
        let (g, n) = self.id.split_once('.').ok_or_else(|| bad("id must look like G.N"))?;
        if g.parse::<u8>().ok() != Some(self.group) || n.parse::<u32>().is_err() {
            return Err(bad("id must be <group>.<index> and match the group"));
        }
        if self.text.trim().is_empty() {
            return Err(bad("text is empty"));
        }
        match self.use_case {
            1 if self.reference.is_object() => Ok(()),
            1 => Err(bad("use case 1 needs a query model reference")),
            2 if self.reference.is_string() => Ok(()),
            2 => Err(bad("use case 2 needs a reference text")),
            _ => Err(bad("use_case must be 1 or 2")),
        }
    }

    pub fn group_name(&self) -> &'static str {
        GROUP_NAMES[(self.group - 1) as usize]
    }
}

pub fn load_suite(path: impl AsRef<Path>) -> Result<Vec<QuestionSpec>, HarnessError> {
    let questions: Vec<QuestionSpec> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    for q in &questions {
        q.validate()?;
    }
    Ok(questions)
}

/// Human verdicts keyed by trial key (`id:mode:trial`), overriding the
/// automatic correctness check.
pub type Verdicts = BTreeMap<String, bool>;

pub fn load_verdicts(path: impl AsRef<Path>) -> Result<Verdicts, HarnessError> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

pub fn trial_key(question_id: &str, shots: ShotMode, trial: usize) -> String {
    format!("{question_id}:{}:{trial}", shots.as_str())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessOptions {
    pub trials_per_mode: usize,
    pub parallelism: usize,
    /// Modes run for use case 1; use case 2 is always zero-shot only.
    pub modes: Vec<ShotMode>,
    pub metrics: MetricConfig,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        Self {
            trials_per_mode: 3,
            parallelism: 4,
            modes: vec![ShotMode::Zero, ShotMode::Few],
            metrics: MetricConfig::default(),
        }
    }
}

impl HarnessOptions {
    fn validate(&self) -> Result<(), HarnessError> {
        if self.trials_per_mode == 0 {
            return Err(HarnessError::InvalidOptions("trials_per_mode must be positive".into()));
        }
        if self.parallelism == 0 {
            return Err(HarnessError::InvalidOptions("parallelism must be positive".into()));
        }
        if self.modes.is_empty() {
            return Err(HarnessError::InvalidOptions("at least one shot mode is needed".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub key: String,
    pub question_id: String,
    pub group: u8,
    pub use_case: u8,
    pub shots: ShotMode,
    pub trial: usize,
    pub raw_text: Option<String>,
    pub extraction: Option<ExtractionOutcome>,
    pub sparql: Option<String>,
    pub correct: bool,
    pub verdict_override: bool,
    pub metrics: Option<MetricReport>,
    pub snippet: Option<bool>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyStat {
    pub trials: usize,
    pub correct: usize,
    pub mean: f64,
    /// Population standard deviation of the accuracy of each (mode, trial
    /// index) slice.
    pub std: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionCounts {
    pub valid: usize,
    pub recovered: usize,
    pub invalid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub groups: Vec<u8>,
    pub modes: Vec<ShotMode>,
    /// `accuracy[group][mode]`, `None` where no trial ran.
    pub accuracy: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub questions: usize,
    pub trials_per_mode: usize,
    pub accuracy: AccuracyStat,
    pub groups: BTreeMap<u8, AccuracyStat>,
    pub modes: BTreeMap<ShotMode, AccuracyStat>,
    pub mean_strss: Option<f64>,
    pub mean_semss: Option<f64>,
    pub mean_ojss: Option<f64>,
    pub snippet_rate: Option<f64>,
    pub extraction: ExtractionCounts,
    pub heatmap: Heatmap,
    pub trials: Vec<TrialResult>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialLatency {
    pub key: String,
    pub latency_ms: u64,
}

/// A report plus wall-clock data kept out of it so reports stay
/// reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRun {
    pub report: SuiteReport,
    pub latencies: Vec<TrialLatency>,
}

fn values_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => x.as_f64() == y.as_f64(),
        _ => canonical_value(a) == canonical_value(b),
    }
}

fn leaves_match(reference: &Value, generated: &Value, prefixes: &PrefixMap) -> bool {
    let r = flatten(reference, prefixes);
    let g = flatten(generated, prefixes);
    r.0.iter()
        .all(|(k, rv)| g.get(k).is_some_and(|gv| values_equal(rv, gv)))
}

fn section_len(v: &Value, section: &str) -> Option<usize> {
    v.get(section).and_then(Value::as_array).map(Vec::len)
}

/// A section matches when both sides list the same number of items and every
/// reference leaf under it has an equal generated value.
pub fn section_matches(reference: &Value, generated: &Value, section: &str, prefixes: &PrefixMap) -> bool {
    let r = reference.get(section).cloned().unwrap_or(Value::Array(Vec::new()));
    let g = generated.get(section).cloned().unwrap_or(Value::Null);
    section_len(reference, section).unwrap_or(0) == section_len(generated, section).unwrap_or(0)
        && leaves_match(&r, &g, prefixes)
}

/// Use case 1 correctness: every section matches and every other reference
/// leaf (limit, sort) is reproduced.
pub fn model_matches(reference: &Value, generated: &Value, prefixes: &PrefixMap) -> bool {
    SECTIONS
        .iter()
        .all(|s| section_matches(reference, generated, s, prefixes))
        && leaves_match(reference, generated, prefixes)
}

fn normalize_text(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Use case 2 correctness without a human verdict: the answer contains the
/// reference text, ignoring case and whitespace runs.
pub fn text_matches(reference: &str, answer: &str) -> bool {
    normalize_text(answer).contains(&normalize_text(reference))
}

fn generated_value(extraction: &ExtractionOutcome) -> Value {
    if let Some(model) = &extraction.model {
        return model.to_value();
    }
    extraction
        .raw_json_text
        .as_deref()
        .and_then(|t| serde_json::from_str(t).ok())
        .unwrap_or_else(|| Value::Object(Default::default()))
}

struct TrialSpec<'a> {
    question: &'a QuestionSpec,
    shots: ShotMode,
    trial: usize,
}

fn trial_specs<'a>(questions: &'a [QuestionSpec], options: &HarnessOptions) -> Vec<TrialSpec<'a>> {
    let mut specs = Vec::new();
    for q in questions {
        let modes: &[ShotMode] = if q.use_case == 2 {
            &[ShotMode::Zero]
        } else {
            &options.modes
        };
        for &shots in modes {
            for trial in 0..options.trials_per_mode {
                specs.push(TrialSpec {
                    question: q,
                    shots,
                    trial,
                });
            }
        }
    }
    specs
}

fn run_trial(pipeline: &Pipeline, scorer: &Scorer, spec: &TrialSpec, verdicts: &Verdicts) -> (TrialResult, u64) {
    let q = spec.question;
    let key = trial_key(&q.id, spec.shots, spec.trial);
    let mode = if q.use_case == 1 {
        PromptMode::StructuredQuery
    } else {
        PromptMode::SchemaAnswer
    };
    let mut result = TrialResult {
        key: key.clone(),
        question_id: q.id.clone(),
        group: q.group,
        use_case: q.use_case,
        shots: spec.shots,
        trial: spec.trial,
        raw_text: None,
        extraction: None,
        sparql: None,
        correct: false,
        verdict_override: false,
        metrics: None,
        snippet: None,
        diagnostics: Vec::new(),
    };
    let mut latency = 0;
    match pipeline.ask(&q.text, mode, spec.shots) {
        Err(e) => result.diagnostics.push(format!("trial failed: {e}")),
        Ok(outcome) => {
            latency = outcome.timings.total_ms;
            result.raw_text = Some(outcome.response.text.clone());
            result.diagnostics.extend(outcome.diagnostics.iter().cloned());
            match outcome.answer {
                Answer::StructuredQuery { extraction, sparql } => {
                    let generated = generated_value(&extraction);
                    match scorer.compare(&q.reference, &generated) {
                        Ok(report) => result.metrics = Some(report),
                        Err(e) => result.diagnostics.push(format!("metrics failed: {e}")),
                    }
                    result.correct =
                        extraction.is_usable() && model_matches(&q.reference, &generated, pipeline.prefixes());
                    result.diagnostics.extend(extraction.diagnostics.iter().cloned());
                    result.extraction = Some(extraction);
                    result.sparql = sparql;
                }
                Answer::SchemaAnswer { text, snippet } => {
                    result.snippet = Some(snippet);
                    result.correct = text_matches(q.reference.as_str().unwrap_or(""), &text);
                }
            }
        }
    }
    if let Some(&verdict) = verdicts.get(&key) {
        result.correct = verdict;
        result.verdict_override = true;
    }
    (result, latency)
}

fn accuracy_stat(trials: &[&TrialResult]) -> AccuracyStat {
    let correct = trials.iter().filter(|t| t.correct).count();
    let mean = if trials.is_empty() {
        0.0
    } else {
        correct as f64 / trials.len() as f64
    };
    let mut slices: BTreeMap<(ShotMode, usize), (usize, usize)> = BTreeMap::new();
    for t in trials {
        let e = slices.entry((t.shots, t.trial)).or_default();
        e.0 += t.correct as usize;
        e.1 += 1;
    }
    let rates: Vec<f64> = slices.values().map(|(c, n)| *c as f64 / *n as f64).collect();
    let std = if rates.is_empty() {
        0.0
    } else {
        let m = rates.iter().sum::<f64>() / rates.len() as f64;
        (rates.iter().map(|r| (r - m).powi(2)).sum::<f64>() / rates.len() as f64).sqrt()
    };
    AccuracyStat {
        trials: trials.len(),
        correct,
        mean,
        std,
    }
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Folds trial results (already in question, mode, trial order) into a report.
pub fn aggregate(questions: usize, trials_per_mode: usize, trials: Vec<TrialResult>) -> SuiteReport {
    let all: Vec<&TrialResult> = trials.iter().collect();
    let mut groups = BTreeMap::new();
    for g in 1..=4u8 {
        let subset: Vec<&TrialResult> = trials.iter().filter(|t| t.group == g).collect();
        if !subset.is_empty() {
            groups.insert(g, accuracy_stat(&subset));
        }
    }
    let mut modes = BTreeMap::new();
    for m in [ShotMode::Zero, ShotMode::Few] {
        let subset: Vec<&TrialResult> = trials.iter().filter(|t| t.shots == m).collect();
        if !subset.is_empty() {
            modes.insert(m, accuracy_stat(&subset));
        }
    }
    let mut extraction = ExtractionCounts::default();
    for t in &trials {
        match t.extraction.as_ref().map(|e| e.status) {
            Some(ExtractionStatus::Valid) => extraction.valid += 1,
            Some(ExtractionStatus::Recovered) => extraction.recovered += 1,
            Some(ExtractionStatus::Invalid) => extraction.invalid += 1,
            None if t.use_case == 1 => extraction.invalid += 1,
            None => {}
        }
    }
    let heat_groups: Vec<u8> = groups.keys().copied().collect();
    let heat_modes = vec![ShotMode::Zero, ShotMode::Few];
    let accuracy = heat_groups
        .iter()
        .map(|&g| {
            heat_modes
                .iter()
                .map(|&m| {
                    let subset: Vec<&TrialResult> = trials.iter().filter(|t| t.group == g && t.shots == m).collect();
                    (!subset.is_empty()).then(|| accuracy_stat(&subset).mean)
                })
                .collect()
        })
        .collect();
    let metrics = || trials.iter().filter_map(|t| t.metrics.as_ref());
    SuiteReport {
        questions,
        trials_per_mode,
        accuracy: accuracy_stat(&all),
        groups,
        modes,
        mean_strss: mean_of(metrics().map(|m| m.strss)),
        mean_semss: mean_of(metrics().map(|m| m.semss)),
        mean_ojss: mean_of(metrics().map(|m| m.ojss)),
        snippet_rate: mean_of(trials.iter().filter_map(|t| t.snippet).map(|s| s as u8 as f64)),
        extraction,
        heatmap: Heatmap {
            groups: heat_groups,
            modes: heat_modes,
            accuracy,
        },
        trials,
    }
}

fn thread_pool(parallelism: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| HarnessError::InvalidOptions(e.to_string()))
}

fn scorer_for(pipeline: &Pipeline, options: &HarnessOptions) -> Result<Scorer, HarnessError> {
    let mut config = options.metrics.clone();
    config.prefixes.merge(pipeline.prefixes());
    Ok(Scorer::new(config)?)
}

/// Runs every question for every mode and trial. Failing trials count as
/// incorrect and carry a diagnostic; they never abort the run.
pub fn run_suite(
    questions: &[QuestionSpec],
    pipeline: &Pipeline,
    options: &HarnessOptions,
    verdicts: &Verdicts,
) -> Result<SuiteRun, HarnessError> {
    if questions.is_empty() {
        return Err(HarnessError::EmptySuite);
    }
    options.validate()?;
    for q in questions {
        q.validate()?;
    }
    let scorer = scorer_for(pipeline, options)?;
    let specs = trial_specs(questions, options);
    let results: Vec<(TrialResult, u64)> = thread_pool(options.parallelism)?.install(|| {
        specs
            .par_iter()
            .map(|s| run_trial(pipeline, &scorer, s, verdicts))
            .collect()
    });
    let latencies = results
        .iter()
        .map(|(t, ms)| TrialLatency {
            key: t.key.clone(),
            latency_ms: *ms,
        })
        .collect();
    let trials = results.into_iter().map(|(t, _)| t).collect();
    Ok(SuiteRun {
        report: aggregate(questions.len(), options.trials_per_mode, trials),
        latencies,
    })
}

fn pct(v: Option<f64>) -> String {
    v.map(|v| format!("{:.1}%", v * 100.0)).unwrap_or_else(|| "-".into())
}

impl SuiteReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Group x mode accuracy with a header row.
    pub fn heatmap_csv(&self) -> String {
        let mut out = String::from("group");
        for m in &self.heatmap.modes {
            out.push(',');
            out.push_str(m.as_str());
        }
        out.push('\n');
        for (g, row) in self.heatmap.groups.iter().zip(&self.heatmap.accuracy) {
            out.push_str(&format!("G{g}"));
            for cell in row {
                out.push(',');
                if let Some(v) = cell {
                    out.push_str(&format!("{v:.4}"));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn text_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<30} {:>8} {:>8} {:>18}", "group", "zero", "few", "overall");
        for (g, row) in self.heatmap.groups.iter().zip(&self.heatmap.accuracy) {
            let stat = &self.groups[g];
            let _ = writeln!(
                out,
                "{:<30} {:>8} {:>8} {:>18}",
                format!("G{g} {}", GROUP_NAMES[(*g - 1) as usize]),
                pct(row[0]),
                pct(row[1]),
                format!("{} ± {:.2}", pct(Some(stat.mean)), stat.std),
            );
        }
        let mode = |m| self.modes.get(&m).map(|s| s.mean);
        let _ = writeln!(
            out,
            "{:<30} {:>8} {:>8} {:>18}",
            "all",
            pct(mode(ShotMode::Zero)),
            pct(mode(ShotMode::Few)),
            format!("{} ± {:.2}", pct(Some(self.accuracy.mean)), self.accuracy.std),
        );
        if let (Some(s), Some(m), Some(o)) = (self.mean_strss, self.mean_semss, self.mean_ojss) {
            let _ = writeln!(out, "StrSS {:.4}  SemSS {:.4}  OJSS {:.4}", s, m, o);
        }
        if let Some(rate) = self.snippet_rate {
            let _ = writeln!(out, "snippet rate {}", pct(Some(rate)));
        }
        let e = &self.extraction;
        let _ = writeln!(
            out,
            "extraction: {} valid, {} recovered, {} invalid",
            e.valid, e.recovered, e.invalid
        );
        out
    }
}

/// One side of a prompt comparison. `llm` replaces the pipeline's model when
/// set, which lets scripted runs give each arm its own fixtures.
#[derive(Clone)]
pub struct PromptArm {
    pub template: PromptTemplate,
    pub llm: Option<Arc<dyn ChatModel>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskComparison {
    pub task: String,
    pub correct_a: usize,
    pub correct_b: usize,
    pub accuracy_a: f64,
    pub accuracy_b: f64,
    /// `(b - a) / a` in percent; `None` when `a` is zero.
    pub improvement_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptComparison {
    pub template_a: String,
    pub template_b: String,
    pub trials: usize,
    pub tasks: Vec<TaskComparison>,
}

pub fn relative_improvement(a: f64, b: f64) -> Option<f64> {
    (a != 0.0).then(|| (b - a) / a * 100.0)
}

fn section_counts(
    questions: &[&QuestionSpec],
    pipeline: &Pipeline,
    options: &HarnessOptions,
) -> Result<([usize; 3], usize), HarnessError> {
    let specs = trial_specs_ref(questions, options);
    let hits: Vec<[bool; 3]> = thread_pool(options.parallelism)?.install(|| {
        specs
            .par_iter()
            .map(|s| {
                let Ok(outcome) = pipeline.ask(&s.question.text, PromptMode::StructuredQuery, s.shots) else {
                    return [false; 3];
                };
                match outcome.extraction() {
                    Some(e) if e.is_usable() => {
                        let generated = generated_value(e);
                        SECTIONS.map(|sec| section_matches(&s.question.reference, &generated, sec, pipeline.prefixes()))
                    }
                    _ => [false; 3],
                }
            })
            .collect()
    });
    let mut counts = [0usize; 3];
    for h in &hits {
        for i in 0..3 {
            counts[i] += h[i] as usize;
        }
    }
    Ok((counts, hits.len()))
}

fn trial_specs_ref<'a>(questions: &[&'a QuestionSpec], options: &HarnessOptions) -> Vec<TrialSpec<'a>> {
    let mut specs = Vec::new();
    for q in questions {
        for &shots in &options.modes {
            for trial in 0..options.trials_per_mode {
                specs.push(TrialSpec {
                    question: q,
                    shots,
                    trial,
                });
            }
        }
    }
    specs
}

/// Scores entities, properties and filters separately for two templates on
/// the use case 1 questions.
pub fn compare_prompts(
    questions: &[QuestionSpec],
    pipeline: &Pipeline,
    arm_a: &PromptArm,
    arm_b: &PromptArm,
    options: &HarnessOptions,
) -> Result<PromptComparison, HarnessError> {
    if arm_a.template.mode != arm_b.template.mode {
        return Err(HarnessError::ModeMismatch(arm_a.template.mode, arm_b.template.mode));
    }
    options.validate()?;
    let uc1: Vec<&QuestionSpec> = questions.iter().filter(|q| q.use_case == 1).collect();
    if uc1.is_empty() {
        return Err(HarnessError::EmptySuite);
    }
    for q in &uc1 {
        q.validate()?;
    }
    let arm_pipeline = |arm: &PromptArm| -> Result<Pipeline, HarnessError> {
        let p = pipeline.with_template(arm.template.clone())?;
        Ok(match &arm.llm {
            Some(llm) => p.with_llm(llm.clone()),
            None => p,
        })
    };
    let (a, total) = section_counts(&uc1, &arm_pipeline(arm_a)?, options)?;
    let (b, _) = section_counts(&uc1, &arm_pipeline(arm_b)?, options)?;
    let tasks = SECTIONS
        .iter()
        .enumerate()
        .map(|(i, task)| {
            let accuracy_a = a[i] as f64 / total as f64;
            let accuracy_b = b[i] as f64 / total as f64;
            TaskComparison {
                task: task.to_string(),
                correct_a: a[i],
                correct_b: b[i],
                accuracy_a,
                accuracy_b,
                improvement_pct: relative_improvement(accuracy_a, accuracy_b),
            }
        })
        .collect();
    Ok(PromptComparison {
        template_a: arm_a.template.id.clone(),
        template_b: arm_b.template.id.clone(),
        trials: total,
        tasks,
    })
}

impl PromptComparison {
    pub fn text_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:>12} {:>12} {:>12}",
            "task", self.template_a, self.template_b, "improvement"
        );
        for t in &self.tasks {
            let _ = writeln!(
                out,
                "{:<12} {:>12} {:>12} {:>12}",
                t.task,
                format!("{:.2}%", t.accuracy_a * 100.0),
                format!("{:.2}%", t.accuracy_b * 100.0),
                t.improvement_pct
                    .map(|v| format!("{v:.2}%"))
                    .unwrap_or_else(|| "undefined".into()),
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderRow {
    pub name: String,
    pub fingerprint: String,
    /// Retrieval accuracy for each entry of `k_values`.
    pub accuracy: Vec<f64>,
    /// Last column minus first, in percentage points.
    pub improvement_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderComparison {
    pub k_values: Vec<usize>,
    pub rows: Vec<EmbedderRow>,
    pub mean_improvement_pct: f64,
}

pub fn labeled_from_questions(questions: &[QuestionSpec]) -> Result<Vec<LabeledQuery>, HarnessError> {
    questions
        .iter()
        .map(|q| match &q.gold_triples {
            Some(gold) => Ok(LabeledQuery {
                query: q.text.clone(),
                gold: gold.clone(),
            }),
            None => Err(HarnessError::MissingGold(q.id.clone())),
        })
        .collect()
}

/// Retrieval accuracy of each embedder at each `k_union`.
pub fn compare_embedders(
    graph: &Graph,
    walk: WalkConfig,
    suite: &[LabeledQuery],
    embedders: &[(String, Arc<dyn Embedder>)],
    k_values: &[usize],
) -> Result<EmbedderComparison, HarnessError> {
    if suite.is_empty() {
        return Err(HarnessError::EmptySuite);
    }
    if k_values.is_empty() || k_values.contains(&0) {
        return Err(HarnessError::InvalidOptions("k values must be positive".into()));
    }
    let map = build_subgraphs(graph, walk).map_err(RetrievalError::from)?;
    let mut rows = Vec::new();
    for (name, embedder) in embedders {
        let index = build_index(graph, &map, embedder.as_ref())?;
        let accuracy = k_values
            .iter()
            .map(|&k| index.retrieval_accuracy(embedder.as_ref(), suite, k))
            .collect::<Result<Vec<_>, _>>()?;
        let improvement_pct = (accuracy[accuracy.len() - 1] - accuracy[0]) * 100.0;
        rows.push(EmbedderRow {
            name: name.clone(),
            fingerprint: embedder.fingerprint(),
            accuracy,
            improvement_pct,
        });
    }
    let mean_improvement_pct = mean_of(rows.iter().map(|r| r.improvement_pct)).unwrap_or(0.0);
    Ok(EmbedderComparison {
        k_values: k_values.to_vec(),
        rows,
        mean_improvement_pct,
    })
}

impl EmbedderComparison {
    pub fn text_table(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<28}", "embedder");
        for k in &self.k_values {
            let _ = write!(out, " {:>9}", format!("top-{k}"));
        }
        let _ = writeln!(out, " {:>12}", "improvement");
        for r in &self.rows {
            let _ = write!(out, "{:<28}", r.name);
            for a in &r.accuracy {
                let _ = write!(out, " {:>9}", format!("{:.1}%", a * 100.0));
            }
            let _ = writeln!(out, " {:>12}", format!("{:+.1}%", r.improvement_pct));
        }
        let _ = writeln!(out, "mean improvement: {:+.1}%", self.mean_improvement_pct);
        out
    }
}
