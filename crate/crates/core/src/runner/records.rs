//! JSONL record types written by `eligo screen`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{io_failure, RunError};
use crate::gateway::ParsedAnswer;
use crate::rules::TrialStatus;
use crate::verdict::Verdict;

/// One answered (note, question, pathway label).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub note_id: String,
    pub question_id: String,
    pub pathway: String,
    pub value: Verdict,
    pub rationale: String,
    pub evidence: Vec<String>,
    pub parse_fallback: bool,
    pub elapsed_s: f64,
    pub provenance: String,
    /// Pointer to the debate transcript (`debates.jsonl#note|question`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
}

pub type RecordKey = (String, String, String);

impl ResultRecord {
    pub fn new(note_id: &str, question_id: &str, pathway: &str, answer: &ParsedAnswer, elapsed_s: f64) -> Self {
        ResultRecord {
            note_id: note_id.into(),
            question_id: question_id.into(),
            pathway: pathway.into(),
            value: answer.value,
            rationale: answer.rationale.clone(),
            evidence: answer.evidence.clone(),
            parse_fallback: answer.parse_fallback,
            elapsed_s,
            provenance: answer.provenance.clone(),
            transcript: None,
        }
    }

    pub fn key(&self) -> RecordKey {
        (self.note_id.clone(), self.question_id.clone(), self.pathway.clone())
    }

    pub fn answer(&self) -> ParsedAnswer {
        ParsedAnswer {
            value: self.value,
            rationale: self.rationale.clone(),
            evidence: self.evidence.clone(),
            provenance: self.provenance.clone(),
            parse_fallback: self.parse_fallback,
        }
    }
}

/// Criterion outcome line of `verdicts.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionVerdictRecord {
    pub note_id: String,
    pub criterion_id: String,
    pub pathway: String,
    pub met: bool,
    pub stable: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unknown_ids: Vec<String>,
}

/// Trial outcome line of `verdicts.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialVerdictRecord {
    pub note_id: String,
    pub trial_id: String,
    pub pathway: String,
    pub status: TrialStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VerdictRecord {
    Criterion(CriterionVerdictRecord),
    Trial(TrialVerdictRecord),
}

fn parse_lines<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<Vec<T>, RunError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| RunError::Input(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Reads a results file; every line must be a valid record.
pub fn load_results(path: &Path) -> Result<Vec<ResultRecord>, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::Input(format!("{}: {e}", path.display())))?;
    parse_lines(path, &text)
}

/// Reads a JSONL file being resumed. A final line without its newline is
/// the remains of an interrupted write: it is dropped and the file is
/// truncated back to the last complete record.
pub(crate) fn load_for_resume<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, RunError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(RunError::Input(format!("{}: {e}", path.display()))),
    };
    let complete_len = if text.ends_with('\n') { text.len() } else { text.rfind('\n').map_or(0, |i| i + 1) };
    let complete = &text[..complete_len];
    if complete.len() != text.len() {
        let tail = &text[complete.len()..];
        if serde_json::from_str::<serde_json::Value>(tail).is_ok() {
            // A complete record that only lacks its newline.
            let mut f = std::fs::OpenOptions::new().append(true).open(path).map_err(|e| io_failure("open", path, e))?;
            f.write_all(b"\n").map_err(|e| io_failure("write", path, e))?;
            return parse_lines(path, &text);
        }
        warn!(path = %path.display(), "dropping incomplete final line");
        std::fs::write(path, complete).map_err(|e| io_failure("rewrite", path, e))?;
    }
    parse_lines(path, complete)
}

/// Records sorted by key with wall-clock fields removed, one JSON object
/// per line. Two runs with the same config and fixtures canonicalize to
/// identical bytes.
pub fn canonicalize_results(records: &[ResultRecord]) -> String {
    let mut lines: Vec<(RecordKey, String)> = records
        .iter()
        .map(|r| {
            let mut value = serde_json::to_value(r).expect("records serialize");
            if let Some(obj) = value.as_object_mut() {
                obj.remove("elapsed_s");
            }
            (r.key(), value.to_string())
        })
        .collect();
    lines.sort();
    let mut out = String::new();
    for (_, line) in lines {
        out.push_str(&line);
        out.push('\n');
    }
    out
}
