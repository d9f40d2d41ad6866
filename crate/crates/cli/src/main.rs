use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pcm_core::cleaner::FilterName;
use pcm_core::metrics::CountUnit;

mod commands;

/// Partial component matching for SQL, plus dataset cleaning and statistics.
#[derive(Debug, Parser)]
#[command(name = "pcm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score predicted queries against gold queries.
    Evaluate(EvaluateArgs),
    /// Corpus diversity statistics of a dataset file.
    Stats(StatsArgs),
    /// Clean a raw query log into a dataset.
    Clean(CleanArgs),
    /// Report which queries of a dataset file parse.
    ParseCheck(InputArgs),
    /// Group the queries of a dataset file by template.
    Template(InputArgs),
    /// Dump the per-category element sets of one query.
    Elements(ElementsArgs),
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Gold dataset: JSONL, or a two-column utterance/query `.tsv`.
    #[arg(long)]
    gold: PathBuf,
    /// Predictions: one query per line, or JSONL with `QuerySetId` and
    /// `QueryBody` (or `id` and `query`).
    #[arg(long)]
    pred: PathBuf,
    /// Match predictions to gold rows by id instead of by line order.
    #[arg(long)]
    id_join: bool,
    /// Lead the summary with the NoValues scores.
    #[arg(long)]
    novalues: bool,
    #[arg(long, value_name = "UNIT", default_value = "subtree")]
    count_unit: CountUnit,
    /// Write the per-pair reports as JSONL.
    #[arg(long, value_name = "FILE")]
    per_example: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    input: PathBuf,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    ngram_n: u32,
    /// Print the plain-text table instead of JSON.
    #[arg(long)]
    table: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CleanArgs {
    /// Log file: JSONL, `.csv` or `.tsv` with a header row.
    log: PathBuf,
    /// Enabled filters, comma separated. Defaults to all of them.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    filters: Option<Vec<FilterName>>,
    /// Also check numbers that appear in the title.
    #[arg(long)]
    title_numbers: bool,
    #[arg(long, default_value = "QuerySetId")]
    col_id: String,
    /// Execution-order column; rows without it fall back to file order.
    #[arg(long, default_value = "RevisionOrder")]
    col_revision: String,
    #[arg(long, default_value = "Title")]
    col_title: String,
    #[arg(long, default_value = "Description")]
    col_description: String,
    #[arg(long, default_value = "QueryBody")]
    col_query: String,
    /// Where the audit trail goes, as JSONL.
    #[arg(long)]
    audit: Option<PathBuf>,
    /// Cleaned dataset as JSONL; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InputArgs {
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ElementsArgs {
    query: String,
    /// Anonymize values and drop join conditions first.
    #[arg(long)]
    novalues: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with its exit status: 1 for usage errors, 2 for bad input.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: 1,
            error: error.into(),
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(error: E) -> Self {
        Failure {
            code: 2,
            error: error.into(),
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("PCM_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| {
            Failure::usage(anyhow::anyhow!(
                "PCM_THREADS must be a positive integer, got `{value}`"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(Failure::usage)
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Stats(args) => commands::stats(args),
        Command::Clean(args) => commands::clean(args),
        Command::ParseCheck(args) => commands::parse_check(args),
        Command::Template(args) => commands::template(args),
        Command::Elements(args) => commands::elements(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}
