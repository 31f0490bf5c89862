//! `eligo evaluate` and `eligo report`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use tracing::info;

use super::{io_failure, load_results, ResultRecord, RunError};
use crate::corpus::{load_gold, load_notes, AdmissionNote, Catalog, ItemKey};
use crate::eval::{
    counterfactual_rate, grounding_check, render_report, score_criteria, score_questions, timing_stats, EvalSummary,
    PathwayMetrics,
};
use crate::gateway::ParsedAnswer;
use crate::rules::{criterion_verdict, AnswerMap};
use crate::verdict::Verdict;

pub const METRICS_FILE: &str = "metrics.json";
pub const REPORT_FILE: &str = "report.md";
pub const PER_QUESTION_FILE: &str = "per_question.csv";

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub results: PathBuf,
    pub gold: PathBuf,
    pub catalog: PathBuf,
    pub out: PathBuf,
    /// Notes for the grounding check; without them grounding and the
    /// counterfactual proxy are omitted.
    pub notes: Option<PathBuf>,
    pub positive_class: Verdict,
}

fn input(e: impl std::fmt::Display) -> RunError {
    RunError::Input(e.to_string())
}

type Predictions = BTreeMap<ItemKey, ParsedAnswer>;

fn group_by_label(records: &[ResultRecord]) -> Result<BTreeMap<String, Predictions>, RunError> {
    let mut out: BTreeMap<String, Predictions> = BTreeMap::new();
    for r in records {
        let previous = out.entry(r.pathway.clone()).or_default().insert((r.note_id.clone(), r.question_id.clone()), r.answer());
        if previous.is_some() {
            return Err(RunError::Input(format!(
                "duplicate result for note {} question {} pathway {}",
                r.note_id, r.question_id, r.pathway
            )));
        }
    }
    Ok(out)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<EvalSummary, RunError> {
    let catalog = Catalog::load_dir(&args.catalog).map_err(input)?;
    let gold = load_gold(&args.gold).map_err(input)?;
    gold.validate(&catalog, None).map_err(input)?;
    let records = load_results(&args.results)?;
    if let Some(r) = records.iter().find(|r| catalog.question(&r.question_id).is_none()) {
        return Err(RunError::Input(format!("results reference unknown question id {:?}", r.question_id)));
    }
    let notes: Option<BTreeMap<String, AdmissionNote>> = match &args.notes {
        Some(p) => Some(load_notes(p).map_err(input)?.into_iter().map(|n| (n.note_id.clone(), n)).collect()),
        None => None,
    };

    let by_label = group_by_label(&records)?;
    let mut summary = EvalSummary::default();
    if notes.is_none() {
        summary.notes.push("No notes supplied: grounding and counterfactual proxy not computed.".into());
    }
    for (label, predictions) in &by_label {
        let (labelled, unlabelled): (Predictions, Predictions) =
            predictions.clone().into_iter().partition(|(k, _)| gold.question_labels.contains_key(k));
        if !unlabelled.is_empty() {
            summary.notes.push(format!("{label}: {} predictions without a gold label were not scored.", unlabelled.len()));
        }
        let mut question = score_questions(&labelled, &gold, &catalog, args.positive_class).map_err(input)?;
        if let Some(notes) = &notes {
            question.counterfactual = Some(counterfactual_rate(&labelled, &gold, notes).map_err(input)?);
        }

        let criterion = if gold.criterion_labels.is_empty() {
            None
        } else {
            let mut verdicts = BTreeMap::new();
            for (note_id, criterion_id) in gold.criterion_labels.keys() {
                let spec = catalog.criterion(criterion_id).expect("gold validated against catalog");
                let Some(rule) = catalog.rule(criterion_id) else { continue };
                let mut answers = AnswerMap::new();
                for q in rule.question_ids() {
                    if let Some(a) = predictions.get(&(note_id.clone(), q.clone())) {
                        answers.insert(q, a.value);
                    }
                }
                if !answers.missing_ids(rule).is_empty() {
                    continue;
                }
                let v = criterion_verdict(spec, &answers).map_err(input)?;
                verdicts.insert((note_id.clone(), criterion_id.clone()), v);
            }
            Some(score_criteria(&verdicts, &gold).map_err(input)?)
        };
        summary.pathways.insert(label.clone(), PathwayMetrics { question: Some(question), criterion });
    }
    summary.timing = timing_stats(records.iter().map(|r| (r.pathway.as_str(), r.elapsed_s)));

    std::fs::create_dir_all(&args.out).map_err(|e| io_failure("create", &args.out, e))?;
    let metrics_path = args.out.join(METRICS_FILE);
    let mut json = serde_json::to_string_pretty(&summary).expect("metrics serialize");
    json.push('\n');
    std::fs::write(&metrics_path, json).map_err(|e| io_failure("write", &metrics_path, e))?;
    let report_path = args.out.join(REPORT_FILE);
    std::fs::write(&report_path, render_report(&summary)).map_err(|e| io_failure("write", &report_path, e))?;
    write_per_question(&args.out.join(PER_QUESTION_FILE), &records, &gold.question_labels, notes.as_ref())?;
    info!(out = %args.out.display(), pathways = summary.pathways.len(), "evaluation written");
    Ok(summary)
}

fn write_per_question(
    path: &Path,
    records: &[ResultRecord],
    gold: &BTreeMap<ItemKey, Verdict>,
    notes: Option<&BTreeMap<String, AdmissionNote>>,
) -> Result<(), RunError> {
    let mut sorted: Vec<&ResultRecord> = records.iter().collect();
    sorted.sort_by(|a, b| (&a.pathway, &a.note_id, &a.question_id).cmp(&(&b.pathway, &b.note_id, &b.question_id)));
    let mut w = csv::Writer::from_path(path).map_err(|e| io_failure("write", path, e))?;
    let fail = |e: csv::Error| io_failure("write", path, e);
    w.write_record(["note_id", "question_id", "gold", "predicted", "grounding", "elapsed_s", "pathway"]).map_err(fail)?;
    for r in sorted {
        let gold = gold.get(&(r.note_id.clone(), r.question_id.clone())).map(|v| v.as_str()).unwrap_or("");
        let grounding = notes
            .and_then(|n| n.get(&r.note_id))
            .map(|note| grounding_check(&r.answer(), note).as_str())
            .unwrap_or("");
        let elapsed = format!("{:.3}", r.elapsed_s);
        w.write_record([&r.note_id, &r.question_id, gold, r.value.as_str(), grounding, &elapsed, &r.pathway])
            .map_err(fail)?;
    }
    w.flush().map_err(|e| io_failure("write", path, e))
}

/// Renders an existing `metrics.json` without recomputing anything. The
/// report goes to `out`, or `report.md` beside the metrics file.
pub fn cmd_report(metrics: &Path, out: Option<&Path>) -> Result<String, RunError> {
    let text = std::fs::read_to_string(metrics).map_err(|e| RunError::Input(format!("{}: {e}", metrics.display())))?;
    let summary: EvalSummary =
        serde_json::from_str(&text).map_err(|e| RunError::Input(format!("{}: {e}", metrics.display())))?;
    let markdown = render_report(&summary);
    let target = match out {
        Some(p) => p.to_path_buf(),
        None => metrics.with_file_name(REPORT_FILE),
    };
    std::fs::write(&target, &markdown).map_err(|e| io_failure("write", &target, e))?;
    Ok(markdown)
}
