mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use framedex_core::Error;

use commands::{BenchOptions, EvalOptions};
use config::{Overrides, UsageError};

/// Text-to-frame search over video patch embeddings.
#[derive(Debug, Parser)]
#[command(name = "framedex", version)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Summarize frames into patch embeddings and metadata.
    Ingest,
    /// Train codebooks and write the index.
    Build,
    /// Retrain codebooks from an existing index under the current settings.
    Rebuild,
    /// Run one text query and print or write the result manifest.
    Query {
        text: String,
        #[arg(long)]
        query_id: Option<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score queries against ground truth.
    Eval {
        /// Result manifests to score instead of running queries.
        #[arg(long, num_args = 1..)]
        manifests: Vec<PathBuf>,
        /// Also report recall at every power-of-two probe count.
        #[arg(long)]
        sweep: bool,
        /// Timed repetitions per query (at least 5).
        #[arg(long, default_value_t = 5)]
        runs: usize,
    },
    /// Latency against index size and against rerank load.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "10,50,100,500")]
        objects: Vec<usize>,
        #[arg(long, default_value_t = 10_000)]
        rerank_corpus: usize,
        #[arg(long, default_value_t = 50)]
        queries: usize,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long, default_value = "bench")]
        out_dir: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let c = cli.overrides.resolve()?;
    match cli.command {
        Command::Ingest => commands::ingest(&c),
        Command::Build => commands::build(&c),
        Command::Rebuild => commands::rebuild(&c),
        Command::Query { text, query_id, output } => commands::query(&c, &text, query_id.as_deref(), output.as_deref()),
        Command::Eval { manifests, sweep, runs } => commands::eval(&c, &EvalOptions { manifests, runs, sweep }),
        Command::Bench { sizes, objects, rerank_corpus, queries, runs, out_dir } => {
            commands::bench(&c, &BenchOptions { sizes, objects, rerank_corpus, queries, runs, out_dir })
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Parse { .. } | Error::InvalidConfig(_) | Error::EmptyQuery => 2,
                Error::InsufficientTrainingData { .. } => 3,
                Error::EmptyIndex => 4,
                Error::EmptyGroundTruth => 5,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
