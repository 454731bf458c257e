//! `ldrag`: ingest an RDF graph, build the retrieval index, ask questions,
//! run evaluation suites and serve the HTTP API.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 when the pipeline fails.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ldrag_core::pipeline::ShotMode;
use ldrag_core::prompt::PromptMode;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "ldrag", version, about = "Conversational querying over RDF sensor graphs")]
pub struct Cli {
    /// Configuration file (TOML or JSON).
    #[arg(long, global = true, env = "LDRAG_CONFIG")]
    pub config: Option<PathBuf>,
    /// More log output on stderr; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Parse and filter the configured graph and report its size.
    Ingest {
        /// Write the filtered graph as N-Triples.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Build the retrieval index and save it.
    Index {
        /// Output file; defaults to the `index` path in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Answer one question.
    Ask {
        question: String,
        #[arg(long, value_enum, default_value_t = Mode::StructuredQuery)]
        mode: Mode,
        #[arg(long, value_enum, default_value_t = Shots::Zero)]
        shots: Shots,
        /// Print the full outcome, prompt included, as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Show the triples retrieved for a question.
    Retrieve {
        question: String,
        #[arg(long)]
        k_rank: Option<usize>,
        #[arg(long)]
        k_union: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Run a question suite and report accuracy and similarity metrics.
    Eval {
        #[arg(long)]
        suite: PathBuf,
        /// JSON object of trial key to verdict, overriding automatic checks.
        #[arg(long)]
        verdicts: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
        /// Directory for report.json, heatmap.csv and report.txt.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Compare two structured-query templates on a suite.
    ComparePrompts {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long = "a")]
        template_a: PathBuf,
        #[arg(long = "b")]
        template_b: PathBuf,
        /// Mock script answering for template A instead of the configured model.
        #[arg(long)]
        a_mock: Option<PathBuf>,
        #[arg(long)]
        b_mock: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        json: bool,
    },
    /// Retrieval accuracy of one or more embedders on a labeled suite.
    CompareEmbedders {
        #[arg(long)]
        suite: PathBuf,
        /// `name=builtin:<dim>` or `name=<embedder config .json>`; the
        /// configured embedder when omitted.
        #[arg(long = "embedder")]
        embedders: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2])]
        k: Vec<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Score JSON lines of reference/generated pairs.
    Compare {
        /// Input file, or `-` for stdin.
        #[arg(default_value = "-")]
        input: PathBuf,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API until interrupted.
    Serve {
        #[arg(long)]
        listen: Option<String>,
    },
}

#[derive(Args)]
pub struct RunArgs {
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub modes: Vec<Shots>,
    #[arg(long)]
    pub parallelism: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Mode {
    StructuredQuery,
    SchemaAnswer,
}

impl From<Mode> for PromptMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::StructuredQuery => PromptMode::StructuredQuery,
            Mode::SchemaAnswer => PromptMode::SchemaAnswer,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Shots {
    Zero,
    Few,
}

impl From<Shots> for ShotMode {
    fn from(s: Shots) -> Self {
        match s {
            Shots::Zero => ShotMode::Zero,
            Shots::Few => ShotMode::Few,
        }
    }
}

fn init_logging(verbose: u8, serving: bool) {
    let default = match (verbose, serving) {
        (0, false) => "warn",
        (0, true) | (1, _) => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    init_logging(cli.verbose, matches!(cli.command, Command::Serve { .. }));
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
