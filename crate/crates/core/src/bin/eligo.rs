use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use eligo::runner::{
    cmd_convert, cmd_evaluate, cmd_report, cmd_screen, ConvertArgs, EvaluateArgs, RunError, CONVERSION_REPORT_FILE,
};
use eligo::Verdict;

/// Clinical trial eligibility pre-screening over admission notes.
#[derive(Debug, Parser)]
#[command(name = "eligo", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Answer every (note, question) with the configured pathways.
    Screen {
        #[arg(long)]
        config: PathBuf,
        /// Also write results.canonical.jsonl (sorted, without timings).
        #[arg(long)]
        canonical: bool,
    },
    /// Score results against gold labels.
    Evaluate {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Admission notes, enabling the grounding check.
        #[arg(long)]
        notes: Option<PathBuf>,
        /// Positive class of the binary projection at question level.
        #[arg(long, default_value = "YES")]
        positive_class: Verdict,
    },
    /// Decompose criteria into questions and draft rules.
    Convert {
        #[arg(long)]
        criteria: PathBuf,
        #[arg(long)]
        backends: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Directory of prompt template overrides.
        #[arg(long)]
        prompts: Option<PathBuf>,
    },
    /// Render an existing metrics.json as Markdown.
    Report {
        #[arg(long)]
        metrics: PathBuf,
        /// Output file (default: report.md beside the metrics).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

async fn run(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Screen { config, canonical } => {
            let outcome = cmd_screen(&config, canonical).await?;
            let c = outcome.manifest.counts;
            println!(
                "screened {} notes x {} questions x {} labels: {} answered, {} skipped, {} failed",
                c.notes, c.questions, c.labels, c.answered, c.skipped, c.failed
            );
            if c.failed > 0 {
                return Err(RunError::Failures { failed: c.failed, out: outcome.out });
            }
        }
        Command::Evaluate { results, gold, catalog, out, notes, positive_class } => {
            let args = EvaluateArgs { results, gold, catalog, out: out.clone(), notes, positive_class };
            let summary = cmd_evaluate(&args)?;
            println!("evaluated {} pathway label(s); report in {}", summary.pathways.len(), out.display());
        }
        Command::Convert { criteria, backends, out, prompts } => {
            let (counts, report) = cmd_convert(&ConvertArgs { criteria, backends, out: out.clone(), prompts }).await?;
            println!(
                "catalog: {} questions, {} criteria, {} trials; see {}",
                counts.questions,
                counts.criteria,
                counts.trials,
                out.join(CONVERSION_REPORT_FILE).display()
            );
            let pending = report.needs_human_rule();
            if !pending.is_empty() {
                println!("rules needing human authoring: {}", pending.join(", "));
            }
        }
        Command::Report { metrics, out } => {
            print!("{}", cmd_report(&metrics, out.as_deref())?);
        }
    }
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("eligo: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
