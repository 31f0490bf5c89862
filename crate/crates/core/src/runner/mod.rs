//! Command orchestration behind the `eligo` binary.
//!
//! Every command returns a [`RunError`] whose [`RunError::exit_code`] is the
//! process status: 2 for configuration problems, 3 for unreadable or invalid
//! inputs, 4 when work items failed (partial output is kept), 1 otherwise.

mod config;
mod convert;
mod evaluate;
mod records;
mod screen;

use thiserror::Error;

pub use config::{role_label, PathwaySelection, RunConfig, DEBATE_LABEL, VOTE_LABEL};
pub use convert::{cmd_convert, BackendsFile, ConvertArgs, CONVERSION_REPORT_FILE};
pub use evaluate::{cmd_evaluate, cmd_report, EvaluateArgs, METRICS_FILE, PER_QUESTION_FILE, REPORT_FILE};
pub use records::{
    canonicalize_results, load_results, CriterionVerdictRecord, ResultRecord, TrialVerdictRecord, VerdictRecord,
};
pub use screen::{cmd_screen, screen, FailureRecord, ManifestCounts, RunManifest, ScreenOutcome};

pub const RESULTS_FILE: &str = "results.jsonl";
pub const CANONICAL_RESULTS_FILE: &str = "results.canonical.jsonl";
pub const DEBATES_FILE: &str = "debates.jsonl";
pub const VERDICTS_FILE: &str = "verdicts.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("{failed} work item(s) failed; partial results kept in {}", out.display())]
    Failures { failed: u64, out: std::path::PathBuf },
    #[error("{0}")]
    Runtime(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Input(_) => 3,
            RunError::Failures { .. } => 4,
            RunError::Runtime(_) => 1,
        }
    }
}

fn io_failure(what: &str, path: &std::path::Path, e: impl std::fmt::Display) -> RunError {
    RunError::Runtime(format!("{what} {}: {e}", path.display()))
}
