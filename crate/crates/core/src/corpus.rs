//! Admission notes, the eligibility catalog and gold labels.
//!
//! Notes and gold labels are JSONL (one record per line); the catalog is
//! three JSON documents that are loaded whole and cross-validated.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rules::{is_valid_question_id, parse_rule, RuleExpr, RuleParseError};
use crate::verdict::{CriterionLabel, Verdict};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}:{line}: schema error{}: {message}", path.display(), field.as_deref().map(|f| format!(" in field `{f}`")).unwrap_or_default())]
    Schema {
        path: PathBuf,
        /// 1-based line number; 0 for whole-document JSON files.
        line: usize,
        field: Option<String>,
        message: String,
    },
    #[error("duplicate {kind} id {id:?}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("dangling reference to {id:?} in {location}")]
    DanglingReference { id: String, location: String },
    #[error("criterion {criterion_id}: {source}")]
    RuleParse {
        criterion_id: String,
        #[source]
        source: RuleParseError,
    },
    #[error("invalid {kind} {id:?}: {message}")]
    Invalid { kind: &'static str, id: String, message: String },
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io { path: path.to_path_buf(), source }
}

fn schema_err(path: &Path, line: usize, err: &serde_json::Error) -> CorpusError {
    let message = err.to_string();
    // serde_json names offending fields in backticks ("missing field `x`").
    let field = message.split('`').nth(1).map(str::to_string);
    CorpusError::Schema { path: path.to_path_buf(), line, field, message }
}

/// Reads a JSONL file into records, skipping blank lines.
pub(crate) fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| schema_err(path, idx + 1, &e))?;
        out.push((idx + 1, record));
    }
    Ok(out)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| schema_err(path, e.line(), &e))
}

// ---------------------------------------------------------------------------
// Notes
// ---------------------------------------------------------------------------

/// Recognised note sections. Unknown section names are rejected on load.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sections {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chief_complaint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub present_illness: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub past_history: Option<String>,
}

impl Sections {
    fn ordered(&self) -> [(&'static str, Option<&str>); 3] {
        [
            ("CHIEF COMPLAINT", self.chief_complaint.as_deref()),
            ("PRESENT ILLNESS", self.present_illness.as_deref()),
            ("PAST HISTORY", self.past_history.as_deref()),
        ]
    }
}

/// One de-identified admission note.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissionNote {
    pub note_id: String,
    pub sections: Sections,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra_text: Option<String>,
}

impl AdmissionNote {
    pub fn new(note_id: impl Into<String>, sections: Sections) -> Self {
        Self { note_id: note_id.into(), sections, extra_text: None }
    }

    fn check(&self) -> std::result::Result<(), (&'static str, &'static str)> {
        if self.note_id.trim().is_empty() {
            return Err(("note_id", "note_id must be non-empty"));
        }
        let has_text = self.sections.ordered().iter().any(|(_, t)| t.is_some_and(|t| !t.trim().is_empty()));
        if !has_text {
            return Err(("sections", "at least one section must have text"));
        }
        Ok(())
    }
}

/// Loads notes from JSONL, preserving file order.
pub fn load_notes(path: &Path) -> Result<Vec<AdmissionNote>> {
    let records: Vec<(usize, AdmissionNote)> = read_jsonl(path)?;
    let mut seen = BTreeSet::new();
    let mut notes = Vec::with_capacity(records.len());
    for (line, note) in records {
        if let Err((field, message)) = note.check() {
            return Err(CorpusError::Schema {
                path: path.to_path_buf(),
                line,
                field: Some(field.into()),
                message: message.into(),
            });
        }
        if !seen.insert(note.note_id.clone()) {
            return Err(CorpusError::DuplicateId { kind: "note", id: note.note_id });
        }
        notes.push(note);
    }
    Ok(notes)
}

/// The single rendering of a note used for prompting and grounding.
///
/// Sections appear in a fixed order regardless of input order; absent or
/// blank sections are skipped.
pub fn canonical_text(note: &AdmissionNote) -> String {
    let mut out = String::new();
    let extra = ("EXTRA TEXT", note.extra_text.as_deref());
    for (name, text) in note.sections.ordered().into_iter().chain(std::iter::once(extra)) {
        if let Some(text) = text.filter(|t| !t.trim().is_empty()) {
            out.push_str(name);
            out.push_str(":\n");
            out.push_str(text);
            out.push('\n');
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Diagnosis,
    EtiologyAndPathology,
    SymptomAndEvent,
    Intervention,
}

impl Category {
    pub const ALL: [Category; 4] =
        [Category::Diagnosis, Category::EtiologyAndPathology, Category::SymptomAndEvent, Category::Intervention];

    /// Human-readable name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Category::Diagnosis => "Diagnosis",
            Category::EtiologyAndPathology => "Etiology and Pathology",
            Category::SymptomAndEvent => "Symptom and Event",
            Category::Intervention => "Intervention",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskType {
    Classification,
    DirectMatch,
}

impl TaskType {
    pub const ALL: [TaskType; 2] = [TaskType::Classification, TaskType::DirectMatch];

    pub fn display_name(self) -> &'static str {
        match self {
            TaskType::Classification => "Classification",
            TaskType::DirectMatch => "Direct Match",
        }
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionSpec {
    pub question_id: String,
    pub text: String,
    pub category: Category,
    pub task_type: TaskType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriterionKind {
    Inclusion,
    Exclusion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriterionSpec {
    pub criterion_id: String,
    #[serde(default)]
    pub trial_ids: Vec<String>,
    pub kind: CriterionKind,
    pub text: String,
    /// Aggregation rule text. May be empty in a conversion input.
    #[serde(default)]
    pub rule: String,
    #[serde(default)]
    pub question_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialSpec {
    pub trial_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry_code: Option<String>,
    pub criterion_ids: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct QuestionsFile {
    pub questions: Vec<QuestionSpec>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CriteriaFile {
    pub criteria: Vec<CriterionSpec>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrialsFile {
    pub trials: Vec<TrialSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogCounts {
    pub questions: usize,
    pub criteria: usize,
    pub trials: usize,
}

/// A cross-validated eligibility catalog.
#[derive(Debug, Clone)]
pub struct Catalog {
    questions: Vec<QuestionSpec>,
    criteria: Vec<CriterionSpec>,
    trials: Vec<TrialSpec>,
    rules: BTreeMap<String, RuleExpr>,
    question_index: BTreeMap<String, usize>,
}

pub const QUESTIONS_FILE: &str = "questions.json";
pub const CRITERIA_FILE: &str = "criteria.json";
pub const TRIALS_FILE: &str = "trials.json";

/// Loads and validates a catalog from its three documents.
pub fn load_catalog(questions_path: &Path, criteria_path: &Path, trials_path: &Path) -> Result<Catalog> {
    let q: QuestionsFile = read_json(questions_path)?;
    let c: CriteriaFile = read_json(criteria_path)?;
    let t: TrialsFile = read_json(trials_path)?;
    Catalog::new(q.questions, c.criteria, t.trials)
}

impl Catalog {
    /// Loads `questions.json`, `criteria.json` and `trials.json` from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Catalog> {
        load_catalog(&dir.join(QUESTIONS_FILE), &dir.join(CRITERIA_FILE), &dir.join(TRIALS_FILE))
    }

    pub fn new(questions: Vec<QuestionSpec>, criteria: Vec<CriterionSpec>, trials: Vec<TrialSpec>) -> Result<Catalog> {
        let mut question_index = BTreeMap::new();
        for (i, q) in questions.iter().enumerate() {
            if !is_valid_question_id(&q.question_id) {
                return Err(CorpusError::Invalid {
                    kind: "question",
                    id: q.question_id.clone(),
                    message: "question_id is not a valid rule identifier".into(),
                });
            }
            if q.text.trim().is_empty() {
                return Err(CorpusError::Invalid { kind: "question", id: q.question_id.clone(), message: "text is empty".into() });
            }
            if q.category == Category::SymptomAndEvent && q.task_type != TaskType::Classification {
                return Err(CorpusError::Invalid {
                    kind: "question",
                    id: q.question_id.clone(),
                    message: "SymptomAndEvent questions must be Classification".into(),
                });
            }
            if question_index.insert(q.question_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId { kind: "question", id: q.question_id.clone() });
            }
        }

        let trial_ids: BTreeSet<&str> = trials.iter().map(|t| t.trial_id.as_str()).collect();
        let mut rules = BTreeMap::new();
        let mut criterion_ids = BTreeSet::new();
        for c in &criteria {
            if c.criterion_id.trim().is_empty() {
                return Err(CorpusError::Invalid { kind: "criterion", id: c.criterion_id.clone(), message: "empty id".into() });
            }
            if c.text.trim().is_empty() {
                return Err(CorpusError::Invalid { kind: "criterion", id: c.criterion_id.clone(), message: "text is empty".into() });
            }
            let rule = if c.rule.trim().is_empty() {
                None
            } else {
                Some(
                    parse_rule(&c.rule)
                        .map_err(|source| CorpusError::RuleParse { criterion_id: c.criterion_id.clone(), source })?,
                )
            };
            for qid in rule.iter().flat_map(RuleExpr::question_ids) {
                if !c.question_ids.contains(&qid) {
                    return Err(CorpusError::DanglingReference {
                        id: qid,
                        location: format!("rule of criterion {} (not in question_ids)", c.criterion_id),
                    });
                }
            }
            for qid in &c.question_ids {
                if !question_index.contains_key(qid) {
                    return Err(CorpusError::DanglingReference {
                        id: qid.clone(),
                        location: format!("question_ids of criterion {}", c.criterion_id),
                    });
                }
            }
            for tid in &c.trial_ids {
                if !trial_ids.contains(tid.as_str()) {
                    return Err(CorpusError::DanglingReference {
                        id: tid.clone(),
                        location: format!("trial_ids of criterion {}", c.criterion_id),
                    });
                }
            }
            if !criterion_ids.insert(c.criterion_id.as_str()) {
                return Err(CorpusError::DuplicateId { kind: "criterion", id: c.criterion_id.clone() });
            }
            if let Some(rule) = rule {
                rules.insert(c.criterion_id.clone(), rule);
            }
        }

        let mut seen_trials = BTreeSet::new();
        for t in &trials {
            if !seen_trials.insert(t.trial_id.as_str()) {
                return Err(CorpusError::DuplicateId { kind: "trial", id: t.trial_id.clone() });
            }
            if t.criterion_ids.is_empty() {
                return Err(CorpusError::Invalid { kind: "trial", id: t.trial_id.clone(), message: "criterion_ids is empty".into() });
            }
            for cid in &t.criterion_ids {
                if !criterion_ids.contains(cid.as_str()) {
                    return Err(CorpusError::DanglingReference { id: cid.clone(), location: format!("trial {}", t.trial_id) });
                }
            }
        }

        Ok(Catalog { questions, criteria, trials, rules, question_index })
    }

    pub fn counts(&self) -> CatalogCounts {
        CatalogCounts { questions: self.questions.len(), criteria: self.criteria.len(), trials: self.trials.len() }
    }

    pub fn questions(&self) -> &[QuestionSpec] {
        &self.questions
    }

    pub fn criteria(&self) -> &[CriterionSpec] {
        &self.criteria
    }

    pub fn trials(&self) -> &[TrialSpec] {
        &self.trials
    }

    pub fn question(&self, id: &str) -> Option<&QuestionSpec> {
        self.question_index.get(id).map(|&i| &self.questions[i])
    }

    pub fn criterion(&self, id: &str) -> Option<&CriterionSpec> {
        self.criteria.iter().find(|c| c.criterion_id == id)
    }

    /// Criteria whose rule is still empty, awaiting human authoring.
    pub fn pending_rules(&self) -> Vec<&str> {
        self.criteria
            .iter()
            .filter(|c| !self.rules.contains_key(&c.criterion_id))
            .map(|c| c.criterion_id.as_str())
            .collect()
    }

    /// Parsed rule of a criterion; `None` while the rule is pending.
    pub fn rule(&self, criterion_id: &str) -> Option<&RuleExpr> {
        self.rules.get(criterion_id)
    }

    /// Writes the three catalog documents into `dir`, rules in canonical form.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let criteria = self
            .criteria
            .iter()
            .map(|c| CriterionSpec {
                rule: self.rules.get(&c.criterion_id).map(ToString::to_string).unwrap_or_default(),
                ..c.clone()
            })
            .collect();
        write_json(&dir.join(QUESTIONS_FILE), &QuestionsFile { questions: self.questions.clone() })?;
        write_json(&dir.join(CRITERIA_FILE), &CriteriaFile { criteria })?;
        write_json(&dir.join(TRIALS_FILE), &TrialsFile { trials: self.trials.clone() })
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("catalog types serialize");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

// ---------------------------------------------------------------------------
// Gold labels
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GoldLabel {
    Yes,
    No,
    Unknown,
    Met,
    NotMet,
}

/// One line of `gold.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldRecord {
    pub note_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criterion_id: Option<String>,
    pub label: GoldLabel,
}

pub type ItemKey = (String, String);

/// Expert labels keyed by (note_id, question_id) and (note_id, criterion_id).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldSet {
    pub question_labels: BTreeMap<ItemKey, Verdict>,
    pub criterion_labels: BTreeMap<ItemKey, CriterionLabel>,
}

impl GoldSet {
    pub fn insert_question(&mut self, note_id: &str, question_id: &str, label: Verdict) {
        self.question_labels.insert((note_id.into(), question_id.into()), label);
    }

    pub fn insert_criterion(&mut self, note_id: &str, criterion_id: &str, label: CriterionLabel) {
        self.criterion_labels.insert((note_id.into(), criterion_id.into()), label);
    }

    /// Checks every key against the catalog and, when given, the note ids.
    pub fn validate(&self, catalog: &Catalog, note_ids: Option<&BTreeSet<String>>) -> Result<()> {
        let check_note = |n: &str| match note_ids {
            Some(ids) if !ids.contains(n) => {
                Err(CorpusError::DanglingReference { id: n.into(), location: "gold labels (note_id)".into() })
            }
            _ => Ok(()),
        };
        for (n, q) in self.question_labels.keys() {
            check_note(n)?;
            if catalog.question(q).is_none() {
                return Err(CorpusError::DanglingReference { id: q.clone(), location: "gold labels (question_id)".into() });
            }
        }
        for (n, c) in self.criterion_labels.keys() {
            check_note(n)?;
            if catalog.criterion(c).is_none() {
                return Err(CorpusError::DanglingReference { id: c.clone(), location: "gold labels (criterion_id)".into() });
            }
        }
        Ok(())
    }

    pub fn to_records(&self) -> Vec<GoldRecord> {
        let q = self.question_labels.iter().map(|((n, q), v)| GoldRecord {
            note_id: n.clone(),
            question_id: Some(q.clone()),
            criterion_id: None,
            label: match v {
                Verdict::Yes => GoldLabel::Yes,
                Verdict::No => GoldLabel::No,
                Verdict::Unknown => GoldLabel::Unknown,
            },
        });
        let c = self.criterion_labels.iter().map(|((n, c), v)| GoldRecord {
            note_id: n.clone(),
            question_id: None,
            criterion_id: Some(c.clone()),
            label: match v {
                CriterionLabel::Met => GoldLabel::Met,
                CriterionLabel::NotMet => GoldLabel::NotMet,
            },
        });
        q.chain(c).collect()
    }
}

/// Loads gold labels from JSONL. Each record names exactly one of
/// `question_id` / `criterion_id`, with a label of the matching kind.
pub fn load_gold(path: &Path) -> Result<GoldSet> {
    let mut gold = GoldSet::default();
    for (line, rec) in read_jsonl::<GoldRecord>(path)? {
        let schema = |field: &str, message: &str| CorpusError::Schema {
            path: path.to_path_buf(),
            line,
            field: Some(field.into()),
            message: message.into(),
        };
        let key_taken = match (&rec.question_id, &rec.criterion_id) {
            (Some(q), None) => {
                let v = match rec.label {
                    GoldLabel::Yes => Verdict::Yes,
                    GoldLabel::No => Verdict::No,
                    GoldLabel::Unknown => Verdict::Unknown,
                    _ => return Err(schema("label", "question labels must be YES, NO or UNKNOWN")),
                };
                gold.question_labels.insert((rec.note_id.clone(), q.clone()), v).is_some()
            }
            (None, Some(c)) => {
                let v = match rec.label {
                    GoldLabel::Met => CriterionLabel::Met,
                    GoldLabel::NotMet => CriterionLabel::NotMet,
                    _ => return Err(schema("label", "criterion labels must be MET or NOT_MET")),
                };
                gold.criterion_labels.insert((rec.note_id.clone(), c.clone()), v).is_some()
            }
            _ => return Err(schema("question_id", "exactly one of question_id and criterion_id is required")),
        };
        if key_taken {
            let id = rec.question_id.or(rec.criterion_id).unwrap_or_default();
            return Err(CorpusError::DuplicateId { kind: "gold label", id: format!("{}|{}", rec.note_id, id) });
        }
    }
    Ok(gold)
}
