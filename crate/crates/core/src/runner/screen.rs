//! `eligo screen`: answer every (note, question) with the enabled pathways.
//!
//! Results are appended to `results.jsonl` as each completes, so a killed
//! run loses at most the line being written. On restart, keys already in
//! the file are skipped; role answers on file are reused when only the vote
//! is missing. Verdicts and the manifest are (re)written at the end, the
//! manifest last.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use futures::future::join_all;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::{info, warn};

use super::config::{role_label, DEBATE_LABEL, VOTE_LABEL};
use super::records::{load_for_resume, load_results, RecordKey};
use super::{
    canonicalize_results, io_failure, CriterionVerdictRecord, ResultRecord, RunConfig, RunError, TrialVerdictRecord,
    VerdictRecord, CANONICAL_RESULTS_FILE, DEBATES_FILE, MANIFEST_FILE, RESULTS_FILE, VERDICTS_FILE,
};
use crate::corpus::{load_gold, load_notes, AdmissionNote, Catalog, QuestionSpec};
use crate::gateway::{Gateway, GatewayError, GatewayStats};
use crate::pathway_a::{answer_with_role, majority_vote, RoleAnswer, RoleProfile};
use crate::pathway_b::{run_debate, DebateRecord};
use crate::prompts::PromptSet;
use crate::rules::{criterion_verdict, trial_verdict, AnswerMap};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub note_id: String,
    pub question_id: String,
    pub pathway: String,
    pub error: String,
}

/// `answered + failed + skipped == expected == notes × questions × labels`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub notes: u64,
    pub questions: u64,
    pub labels: u64,
    pub expected: u64,
    /// Records written by this run.
    pub answered: u64,
    pub failed: u64,
    /// Records already on file from an earlier run.
    pub skipped: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub engine_version: String,
    /// SHA-256 of the run configuration bytes.
    pub config_digest: String,
    pub started_at: String,
    pub finished_at: String,
    pub backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<String>,
    pub pathways: Vec<String>,
    pub counts: ManifestCounts,
    pub gateway: GatewayStats,
    /// Criteria skipped in verdicts because their rule is still empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pending_rules: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<FailureRecord>,
}

#[derive(Debug, Clone)]
pub struct ScreenOutcome {
    pub out: PathBuf,
    pub manifest: RunManifest,
}

/// Loads `run.json`, builds its backend and runs the screen.
pub async fn cmd_screen(config_path: &Path, canonical: bool) -> Result<ScreenOutcome, RunError> {
    let (cfg, bytes) = RunConfig::load(config_path)?;
    // Paths in the config are already resolved against its directory.
    let gateway = Gateway::from_config(&cfg.backend, Path::new(""), cfg.seed.as_deref()).map_err(|e| match e {
        GatewayError::Fixtures { .. } => RunError::Input(e.to_string()),
        other => RunError::Config(other.to_string()),
    })?;
    screen(&cfg, &bytes, gateway, canonical).await
}

struct Sinks {
    results: Mutex<File>,
    debates: Mutex<File>,
}

fn append(file: &Mutex<File>, path: &Path, line: &str) -> Result<(), RunError> {
    let mut buf = String::with_capacity(line.len() + 1);
    buf.push_str(line);
    buf.push('\n');
    let mut f = file.lock().expect("sink mutex poisoned");
    f.write_all(buf.as_bytes()).map_err(|e| io_failure("append to", path, e))
}

fn open_append(path: &Path) -> Result<File, RunError> {
    OpenOptions::new().create(true).append(true).open(path).map_err(|e| io_failure("open", path, e))
}

struct Context<'a> {
    cfg: &'a RunConfig,
    prompts: PromptSet,
    profiles: Vec<RoleProfile>,
    gateway: Gateway,
    existing: BTreeMap<RecordKey, ResultRecord>,
    debated: BTreeSet<(String, String)>,
    sinks: Sinks,
    results_path: PathBuf,
    debates_path: PathBuf,
}

#[derive(Default)]
struct UnitOutcome {
    answered: u64,
    skipped: u64,
    failures: Vec<FailureRecord>,
}

impl Context<'_> {
    fn has(&self, note: &str, question: &str, label: &str) -> bool {
        self.existing.contains_key(&(note.to_string(), question.to_string(), label.to_string()))
    }

    fn write(&self, record: &ResultRecord) -> Result<(), RunError> {
        let line = serde_json::to_string(record).expect("records serialize");
        append(&self.sinks.results, &self.results_path, &line)
    }

    async fn unit(&self, note: &AdmissionNote, question: &QuestionSpec) -> Result<UnitOutcome, RunError> {
        let (n, q) = (note.note_id.as_str(), question.question_id.as_str());
        let labels = self.cfg.labels();
        let missing: Vec<&String> = labels.iter().filter(|l| !self.has(n, q, l)).collect();
        let mut outcome = UnitOutcome { skipped: (labels.len() - missing.len()) as u64, ..Default::default() };
        if missing.is_empty() {
            return Ok(outcome);
        }
        let fail = |label: &str, error: String| FailureRecord {
            note_id: n.into(),
            question_id: q.into(),
            pathway: label.into(),
            error,
        };
        let vote_missing = missing.iter().any(|l| *l == VOTE_LABEL);

        let pathway_a = async {
            let mut out = UnitOutcome::default();
            let mut roles: Vec<Option<RoleAnswer>> = Vec::new();
            let mut calls = Vec::new();
            for profile in &self.profiles {
                let label = role_label(profile.role);
                let role_missing = missing.iter().any(|l| **l == label);
                if !role_missing && !vote_missing {
                    continue;
                }
                let on_file = self.existing.get(&(n.to_string(), q.to_string(), label.clone()));
                match on_file {
                    Some(rec) => roles.push(Some(RoleAnswer {
                        note_id: n.into(),
                        question_id: q.into(),
                        role: profile.role,
                        answer: rec.answer(),
                        elapsed_ms: (rec.elapsed_s * 1000.0).round() as u64,
                    })),
                    None => {
                        roles.push(None);
                        calls.push((roles.len() - 1, label, answer_with_role(question, note, profile, &self.gateway)));
                    }
                }
            }
            let (slots, futures): (Vec<_>, Vec<_>) = calls.into_iter().map(|(i, l, f)| ((i, l), f)).unzip();
            for ((slot, label), result) in slots.into_iter().zip(join_all(futures).await) {
                match result {
                    Ok(answer) => {
                        let rec = ResultRecord::new(n, q, &label, &answer.answer, answer.elapsed_ms as f64 / 1000.0);
                        self.write(&rec)?;
                        out.answered += 1;
                        roles[slot] = Some(answer);
                    }
                    Err(e) => {
                        warn!(note = n, question = q, pathway = %label, error = %e, "role failed");
                        out.failures.push(fail(&label, e.to_string()));
                    }
                }
            }
            if vote_missing {
                match roles.as_slice() {
                    [Some(a), Some(b), Some(c)] => {
                        let voted = majority_vote(a, b, c).map_err(|e| RunError::Runtime(e.to_string()))?;
                        let elapsed_ms = a.elapsed_ms + b.elapsed_ms + c.elapsed_ms;
                        self.write(&ResultRecord::new(n, q, VOTE_LABEL, &voted, elapsed_ms as f64 / 1000.0))?;
                        out.answered += 1;
                    }
                    _ => out.failures.push(fail(VOTE_LABEL, "a role answer is unavailable".into())),
                }
            }
            Ok::<_, RunError>(out)
        };

        let pathway_b = async {
            let mut out = UnitOutcome::default();
            if !missing.iter().any(|l| *l == DEBATE_LABEL) {
                return Ok(out);
            }
            match run_debate(&self.prompts, question, note, &self.gateway).await {
                Ok(result) => {
                    if !self.debated.contains(&(n.to_string(), q.to_string())) {
                        let record =
                            DebateRecord { note_id: n.into(), question_id: q.into(), transcript: result.transcript };
                        let line = serde_json::to_string(&record).expect("transcripts serialize");
                        append(&self.sinks.debates, &self.debates_path, &line)?;
                    }
                    let mut rec =
                        ResultRecord::new(n, q, DEBATE_LABEL, &result.outcome, result.elapsed_ms as f64 / 1000.0);
                    rec.transcript = Some(format!("{DEBATES_FILE}#{n}|{q}"));
                    self.write(&rec)?;
                    out.answered += 1;
                }
                Err(e) => {
                    warn!(note = n, question = q, error = %e, "debate failed");
                    out.failures.push(fail(DEBATE_LABEL, e.to_string()));
                }
            }
            Ok::<_, RunError>(out)
        };

        let (a, b) = tokio::join!(pathway_a, pathway_b);
        for part in [a?, b?] {
            outcome.answered += part.answered;
            outcome.failures.extend(part.failures);
        }
        Ok(outcome)
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Computes criterion and trial verdicts per (pathway label, note) from the
/// records on file.
fn verdict_records(
    catalog: &Catalog,
    notes: &[AdmissionNote],
    labels: &[String],
    records: &[ResultRecord],
) -> Result<Vec<VerdictRecord>, RunError> {
    let mut answers: BTreeMap<(&str, &str), AnswerMap> = BTreeMap::new();
    for r in records {
        answers.entry((r.pathway.as_str(), r.note_id.as_str())).or_default().insert(r.question_id.clone(), r.value);
    }
    let mut criteria_out = Vec::new();
    let mut trials_out = Vec::new();
    for label in labels {
        for note in notes {
            let Some(map) = answers.get(&(label.as_str(), note.note_id.as_str())) else { continue };
            let mut verdicts = Vec::new();
            for c in catalog.criteria().iter().filter(|c| catalog.rule(&c.criterion_id).is_some()) {
                let v = criterion_verdict(c, map).map_err(|e| RunError::Runtime(e.to_string()))?;
                criteria_out.push(VerdictRecord::Criterion(CriterionVerdictRecord {
                    note_id: note.note_id.clone(),
                    criterion_id: c.criterion_id.clone(),
                    pathway: label.clone(),
                    met: v.met,
                    stable: v.stable,
                    unknown_ids: v.sensitivity.unknown_ids.clone(),
                }));
                verdicts.push(v);
            }
            for t in catalog.trials() {
                if !t.criterion_ids.iter().all(|cid| verdicts.iter().any(|v| &v.criterion_id == cid)) {
                    continue;
                }
                let tv = trial_verdict(t, &verdicts).map_err(|e| RunError::Runtime(e.to_string()))?;
                trials_out.push(VerdictRecord::Trial(TrialVerdictRecord {
                    note_id: note.note_id.clone(),
                    trial_id: t.trial_id.clone(),
                    pathway: label.clone(),
                    status: tv.status,
                }));
            }
        }
    }
    criteria_out.extend(trials_out);
    Ok(criteria_out)
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<(), RunError> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item).expect("records serialize"));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| io_failure("write", path, e))
}

/// Runs the screen described by `cfg` against `gateway`. `config_bytes`
/// feeds the manifest digest.
pub async fn screen(
    cfg: &RunConfig,
    config_bytes: &[u8],
    gateway: Gateway,
    canonical: bool,
) -> Result<ScreenOutcome, RunError> {
    cfg.validate()?;
    let started_at = now();
    let prompts = match &cfg.prompts {
        Some(dir) => PromptSet::load_dir(dir).map_err(|e| RunError::Config(e.to_string()))?,
        None => PromptSet::default(),
    };
    let notes = load_notes(&cfg.notes).map_err(|e| RunError::Input(e.to_string()))?;
    let catalog = Catalog::load_dir(&cfg.catalog).map_err(|e| RunError::Input(e.to_string()))?;
    if let Some(gold_path) = &cfg.gold {
        let gold = load_gold(gold_path).map_err(|e| RunError::Input(e.to_string()))?;
        let ids: BTreeSet<String> = notes.iter().map(|n| n.note_id.clone()).collect();
        gold.validate(&catalog, Some(&ids)).map_err(|e| RunError::Input(e.to_string()))?;
    }
    std::fs::create_dir_all(&cfg.out).map_err(|e| io_failure("create", &cfg.out, e))?;

    let results_path = cfg.out.join(RESULTS_FILE);
    let debates_path = cfg.out.join(DEBATES_FILE);
    let mut existing = BTreeMap::new();
    for r in load_for_resume::<ResultRecord>(&results_path)? {
        existing.entry(r.key()).or_insert(r);
    }
    let debated = load_for_resume::<DebateRecord>(&debates_path)?
        .into_iter()
        .map(|d| (d.note_id, d.question_id))
        .collect();
    if !existing.is_empty() {
        info!(records = existing.len(), "resuming from existing results");
    }

    let profiles = crate::pathway_a::Role::ALL
        .into_iter()
        .filter(|r| cfg.roles.contains(r))
        .map(|r| RoleProfile::from_prompts(&prompts, r))
        .collect();
    let ctx = Context {
        cfg,
        prompts,
        profiles,
        gateway: gateway.clone(),
        existing,
        debated,
        sinks: Sinks { results: Mutex::new(open_append(&results_path)?), debates: Mutex::new(open_append(&debates_path)?) },
        results_path: results_path.clone(),
        debates_path,
    };

    let units: Vec<(&AdmissionNote, &QuestionSpec)> =
        notes.iter().flat_map(|n| catalog.questions().iter().map(move |q| (n, q))).collect();
    info!(units = units.len(), labels = ?cfg.labels(), backend = %gateway.identity(), "screening");
    let outcomes: Vec<Result<UnitOutcome, RunError>> =
        stream::iter(units).map(|(n, q)| ctx.unit(n, q)).buffer_unordered(cfg.concurrency).collect().await;

    let labels = cfg.labels();
    let mut counts = ManifestCounts {
        notes: notes.len() as u64,
        questions: catalog.questions().len() as u64,
        labels: labels.len() as u64,
        ..Default::default()
    };
    counts.expected = counts.notes * counts.questions * counts.labels;
    let mut failures = Vec::new();
    for o in outcomes {
        let o = o?;
        counts.answered += o.answered;
        counts.skipped += o.skipped;
        failures.extend(o.failures);
    }
    counts.failed = failures.len() as u64;
    failures.sort_by(|a, b| (&a.note_id, &a.question_id, &a.pathway).cmp(&(&b.note_id, &b.question_id, &b.pathway)));
    drop(ctx);

    let records = load_results(&results_path)?;
    write_lines(&cfg.out.join(VERDICTS_FILE), &verdict_records(&catalog, &notes, &labels, &records)?)?;
    if canonical {
        let path = cfg.out.join(CANONICAL_RESULTS_FILE);
        std::fs::write(&path, canonicalize_results(&records)).map_err(|e| io_failure("write", &path, e))?;
    }

    let manifest = RunManifest {
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
        config_digest: hex::encode(Sha256::digest(config_bytes)),
        started_at,
        finished_at: now(),
        backend: gateway.identity(),
        seed: cfg.seed.clone(),
        pathways: labels,
        counts,
        gateway: gateway.stats(),
        pending_rules: catalog.pending_rules().into_iter().map(str::to_string).collect(),
        failures,
    };
    let path = cfg.out.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| io_failure("write", &path, e))?;
    info!(answered = counts.answered, failed = counts.failed, skipped = counts.skipped, "screen finished");
    Ok(ScreenOutcome { out: cfg.out.clone(), manifest })
}
