//! Verb implementations.

use std::io::{BufReader, Read as _, Write as _};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ldrag_core::harness::{
    compare_embedders, compare_prompts, load_suite, load_verdicts, run_suite, HarnessError, HarnessOptions, PromptArm,
    Verdicts,
};
use ldrag_core::llm::MockChat;
use ldrag_core::metrics::{batch_to_jsonl, score_batch, MetricError, Scorer};
use ldrag_core::pipeline::{build_index_for, load_graphs, Answer, Pipeline, PipelineError};
use ldrag_core::retrieval::{load_labeled_suite, RetrievalError};
use ldrag_core::{Embedder, EmbedderConfig, ExtractionStatus, MetricConfig, MockScript, PrefixMap, PromptTemplate};
use ldrag_service::{ConfigError, ServeError, ServiceConfig};

use crate::{Cli, Command, RunArgs};

const DEFAULT_CONFIG: &str = "ldrag.toml";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Serve(#[from] ServeError),
    #[error("{0}")]
    Failed(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(ConfigError::Read { .. }) => 1,
            _ => 2,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn config_path(explicit: &Option<PathBuf>) -> Option<PathBuf> {
    explicit.clone().or_else(|| {
        Path::new(DEFAULT_CONFIG)
            .is_file()
            .then(|| PathBuf::from(DEFAULT_CONFIG))
    })
}

fn load_config(explicit: &Option<PathBuf>) -> Result<ServiceConfig> {
    let path = config_path(explicit)
        .ok_or_else(|| CliError::Usage(format!("no configuration: pass --config or create ./{DEFAULT_CONFIG}")))?;
    let config = ServiceConfig::load(path)?;
    config.validate()?;
    Ok(config)
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("output serializes"));
}

fn harness_options(run: &RunArgs) -> HarnessOptions {
    let mut options = HarnessOptions::default();
    if let Some(t) = run.trials {
        options.trials_per_mode = t;
    }
    if let Some(p) = run.parallelism {
        options.parallelism = p;
    }
    if !run.modes.is_empty() {
        options.modes = run.modes.iter().map(|&m| m.into()).collect();
    }
    options
}

fn mock_model(path: &Path) -> Result<Arc<dyn ldrag_core::ChatModel>> {
    let script = MockScript::from_json_file(path).map_err(PipelineError::from)?;
    Ok(Arc::new(MockChat::new(script).map_err(PipelineError::from)?))
}

fn parse_embedder(spec: &str) -> Result<(String, Arc<dyn Embedder>)> {
    let (name, value) = spec.split_once('=').ok_or_else(|| {
        CliError::Usage(format!(
            "embedder '{spec}' must look like name=builtin:<dim> or name=<file>"
        ))
    })?;
    let config = match value.strip_prefix("builtin:") {
        Some(dim) => EmbedderConfig::builtin(
            dim.parse()
                .map_err(|_| CliError::Usage(format!("bad embedder dimension '{dim}'")))?,
        ),
        None => {
            let text = std::fs::read_to_string(value)?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("embedder config {value}: {e}")))?
        }
    };
    config.validate().map_err(PipelineError::from)?;
    Ok((name.to_string(), config.build().map_err(PipelineError::from)?))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { out, json } => {
            let config = load_config(&cli.config)?;
            let graphs = load_graphs(&config.pipeline)?;
            graphs.full.check().map_err(PipelineError::from)?;
            if let Some(out) = &out {
                std::fs::write(out, graphs.filtered.to_ntriples())?;
            }
            let summary = serde_json::json!({
                "graph": config.pipeline.graph,
                "triples": graphs.full.len(),
                "filtered": graphs.filtered.len(),
                "prefixes": graphs.prefixes.len(),
            });
            if json {
                print_json(&summary);
            } else {
                println!("triples:  {}", graphs.full.len());
                println!("filtered: {}", graphs.filtered.len());
                println!("prefixes: {}", graphs.prefixes.len());
            }
        }
        Command::Index { out } => {
            let config = load_config(&cli.config)?;
            let out = out
                .or_else(|| config.pipeline.index.clone())
                .ok_or_else(|| CliError::Usage("no output path: pass --out or set index in the config".into()))?;
            let graphs = load_graphs(&config.pipeline)?;
            let embedder = config.pipeline.embedder.build().map_err(PipelineError::from)?;
            let index = build_index_for(&config.pipeline, &graphs, embedder.as_ref())?;
            index.save(&out)?;
            println!(
                "indexed {} triples with {} -> {}",
                index.len(),
                index.fingerprint(),
                out.display()
            );
        }
        Command::Ask {
            question,
            mode,
            shots,
            json,
        } => {
            let config = load_config(&cli.config)?;
            let pipeline = Pipeline::from_config(&config.pipeline)?;
            let outcome = pipeline.ask(&question, mode.into(), shots.into())?;
            if json {
                print_json(&outcome);
            }
            match &outcome.answer {
                Answer::StructuredQuery { extraction, sparql } => match (extraction.status, sparql) {
                    (ExtractionStatus::Invalid, _) | (_, None) => {
                        let mut reasons = extraction.diagnostics.clone();
                        reasons.extend(outcome.diagnostics.iter().cloned());
                        return Err(CliError::Failed(format!(
                            "no valid query model: {}",
                            reasons.join("; ")
                        )));
                    }
                    (_, Some(sparql)) if !json => println!("{sparql}"),
                    _ => {}
                },
                Answer::SchemaAnswer { text, .. } if !json => println!("{text}"),
                Answer::SchemaAnswer { .. } => {}
            }
        }
        Command::Retrieve {
            question,
            k_rank,
            k_union,
            json,
        } => {
            let config = load_config(&cli.config)?;
            let k_rank = k_rank.unwrap_or(config.pipeline.k_rank);
            let k_union = k_union.unwrap_or(config.pipeline.k_union);
            if k_union == 0 || k_rank < k_union {
                return Err(CliError::Usage(format!(
                    "need 1 <= k-union <= k-rank, got {k_union} and {k_rank}"
                )));
            }
            let pipeline = Pipeline::from_config(&config.pipeline)?;
            let result = pipeline.retrieve(&question, k_rank, k_union)?;
            if json {
                print_json(&result);
            } else {
                for r in &result.ranked {
                    println!("{:>6}  {:.4}", r.triple_id, r.score);
                }
                println!();
                println!("{}", result.context_text);
            }
        }
        Command::Eval {
            suite,
            verdicts,
            run,
            out,
            json,
        } => {
            let config = load_config(&cli.config)?;
            let questions = load_suite(&suite)?;
            let verdicts = match verdicts {
                Some(p) => load_verdicts(p)?,
                None => Verdicts::new(),
            };
            let pipeline = Pipeline::from_config(&config.pipeline)?;
            let result = run_suite(&questions, &pipeline, &harness_options(&run), &verdicts)?;
            let report = &result.report;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("report.json"), report.to_json())?;
                std::fs::write(dir.join("heatmap.csv"), report.heatmap_csv())?;
                std::fs::write(dir.join("report.txt"), report.text_table())?;
            }
            if json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.text_table());
            }
        }
        Command::ComparePrompts {
            suite,
            template_a,
            template_b,
            a_mock,
            b_mock,
            run,
            json,
        } => {
            let config = load_config(&cli.config)?;
            let questions = load_suite(&suite)?;
            let pipeline = Pipeline::from_config(&config.pipeline)?;
            let arm = |template: &Path, mock: &Option<PathBuf>| -> Result<PromptArm> {
                Ok(PromptArm {
                    template: PromptTemplate::from_json_file(template).map_err(PipelineError::from)?,
                    llm: mock.as_deref().map(mock_model).transpose()?,
                })
            };
            let cmp = compare_prompts(
                &questions,
                &pipeline,
                &arm(&template_a, &a_mock)?,
                &arm(&template_b, &b_mock)?,
                &harness_options(&run),
            )?;
            if json {
                print_json(&cmp);
            } else {
                print!("{}", cmp.text_table());
            }
        }
        Command::CompareEmbedders {
            suite,
            embedders,
            k,
            json,
        } => {
            let config = load_config(&cli.config)?;
            let labeled = load_labeled_suite(&suite)?;
            let embedders = if embedders.is_empty() {
                vec![(
                    "configured".to_string(),
                    config.pipeline.embedder.build().map_err(PipelineError::from)?,
                )]
            } else {
                embedders
                    .iter()
                    .map(|s| parse_embedder(s))
                    .collect::<Result<Vec<_>>>()?
            };
            let graphs = load_graphs(&config.pipeline)?;
            let cmp = compare_embedders(&graphs.filtered, config.pipeline.walk, &labeled, &embedders, &k)?;
            if json {
                print_json(&cmp);
            } else {
                print!("{}", cmp.text_table());
            }
        }
        Command::Compare {
            input,
            beta,
            alpha,
            out,
        } => {
            let mut metric = MetricConfig::default();
            if let Some(path) = config_path(&cli.config) {
                let config = load_config(&Some(path))?;
                let mut prefixes = PrefixMap::common();
                if let Some(p) = &config.pipeline.prefixes {
                    prefixes.merge(&PrefixMap::from_json_file(p).map_err(PipelineError::from)?);
                }
                metric.prefixes = prefixes;
                metric.embedder = config.pipeline.embedder.clone();
            }
            if let Some(b) = beta {
                metric.beta = b;
            }
            if let Some(a) = alpha {
                metric.alpha = a;
            }
            metric.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let scorer = Scorer::new(metric)?;
            let text = if input == Path::new("-") {
                let mut s = String::new();
                std::io::stdin().read_to_string(&mut s)?;
                s
            } else {
                std::fs::read_to_string(&input)?
            };
            let (rows, summary) = score_batch(BufReader::new(text.as_bytes()), &scorer)?;
            let jsonl = batch_to_jsonl(&rows, &summary);
            match out {
                Some(path) => std::fs::write(path, jsonl)?,
                None => {
                    let mut stdout = std::io::stdout().lock();
                    stdout.write_all(jsonl.as_bytes())?;
                    if !jsonl.ends_with('\n') {
                        stdout.write_all(b"\n")?;
                    }
                }
            }
        }
        Command::Serve { listen } => {
            let mut config = load_config(&cli.config)?;
            if let Some(l) = listen {
                config.listen = l;
                config.validate()?;
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(ldrag_service::serve(config, async {
                let _ = tokio::signal::ctrl_c().await;
            }))?;
        }
    }
    Ok(())
}
