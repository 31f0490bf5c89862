//! Scoring against expert labels.
//!
//! Question-level answers are tri-valued; precision, recall and F1 use a
//! binary projection (one positive class, everything else negative) while
//! accuracy is reported both as tri-class exact match and on the projection.
//! Criterion-level scoring is natively binary with MET as positive.
//!
//! Any ratio with a zero denominator is reported as 0.

mod grounding;
mod report;
mod timing;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use grounding::{counterfactual_rate, grounding_check, normalize_for_grounding, CounterfactualReport, Grounding};
pub use report::{pathway_display_name, render_report, EvalSummary, PathwayMetrics};
pub use timing::{timing_stats, TimingStats};

use crate::corpus::{Catalog, Category, GoldSet, ItemKey, TaskType};
use crate::gateway::ParsedAnswer;
use crate::rules::CriterionVerdict;
use crate::verdict::{CriterionLabel, Verdict};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    /// An id that cannot be resolved against the catalog, gold labels or notes.
    #[error("unresolvable {kind} {id:?}{}", note_id.as_deref().map(|n| format!(" (note {n})")).unwrap_or_default())]
    Key { kind: &'static str, id: String, note_id: Option<String> },
}

fn key_error(kind: &'static str, id: &str, note_id: Option<&str>) -> EvalError {
    EvalError::Key { kind, id: id.to_string(), note_id: note_id.map(str::to_string) }
}

/// A gold × predicted count matrix over a fixed label order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub labels: Vec<String>,
    /// `matrix[gold][predicted]`.
    pub matrix: Vec<Vec<u64>>,
}

impl ConfusionCounts {
    pub fn new(labels: &[&str]) -> Self {
        Self { labels: labels.iter().map(|s| s.to_string()).collect(), matrix: vec![vec![0; labels.len()]; labels.len()] }
    }

    pub fn for_questions() -> Self {
        Self::new(&Verdict::ALL.map(Verdict::as_str))
    }

    pub fn for_criteria() -> Self {
        Self::new(&[CriterionLabel::Met.as_str(), CriterionLabel::NotMet.as_str()])
    }

    pub fn add(&mut self, gold: usize, predicted: usize) {
        self.matrix[gold][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.matrix.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.matrix.len()).map(|i| self.matrix[i][i]).sum()
    }

    /// (tp, fp, fn, tn) with `positive` as the positive class.
    pub fn binary(&self, positive: usize) -> (u64, u64, u64, u64) {
        let mut c = (0, 0, 0, 0);
        for (g, row) in self.matrix.iter().enumerate() {
            for (p, &n) in row.iter().enumerate() {
                match (g == positive, p == positive) {
                    (true, true) => c.0 += n,
                    (false, true) => c.1 += n,
                    (true, false) => c.2 += n,
                    (false, false) => c.3 += n,
                }
            }
        }
        c
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Headline numbers derived from one confusion matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub count: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy_triclass: f64,
    pub accuracy_binary: f64,
}

impl Scores {
    pub fn from_counts(counts: &ConfusionCounts, positive: usize) -> Self {
        let (tp, fp, fn_, tn) = counts.binary(positive);
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        Scores {
            count: counts.total(),
            precision,
            recall,
            f1: f1_score(precision, recall),
            accuracy_triclass: ratio(counts.trace(), counts.total()),
            accuracy_binary: ratio(tp + tn, counts.total()),
        }
    }
}

/// Scores of the items in one (category, task type) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub category: Category,
    pub task_type: TaskType,
    pub scores: Scores,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Question,
    Criterion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub level: Level,
    pub positive_class: String,
    /// Items with both a prediction and a gold label.
    pub answered_count: u64,
    /// Gold items without a prediction; not part of any metric.
    pub unanswered_count: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Tri-class exact match for questions; equals `accuracy_binary` for criteria.
    pub accuracy: f64,
    pub accuracy_triclass: f64,
    pub accuracy_binary: f64,
    pub counts: ConfusionCounts,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub breakdowns: Vec<Breakdown>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterfactual: Option<CounterfactualReport>,
}

impl MetricReport {
    fn from_counts(level: Level, counts: ConfusionCounts, positive: usize, unanswered: u64) -> Self {
        let s = Scores::from_counts(&counts, positive);
        MetricReport {
            level,
            positive_class: counts.labels[positive].clone(),
            answered_count: s.count,
            unanswered_count: unanswered,
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
            accuracy: s.accuracy_triclass,
            accuracy_triclass: s.accuracy_triclass,
            accuracy_binary: s.accuracy_binary,
            counts,
            breakdowns: Vec::new(),
            counterfactual: None,
        }
    }

    pub fn scores(&self) -> Scores {
        Scores {
            count: self.answered_count,
            precision: self.precision,
            recall: self.recall,
            f1: self.f1,
            accuracy_triclass: self.accuracy_triclass,
            accuracy_binary: self.accuracy_binary,
        }
    }
}

/// Question-level scoring with `positive` as the binary positive class.
pub fn score_questions(
    predictions: &BTreeMap<ItemKey, ParsedAnswer>,
    gold: &GoldSet,
    catalog: &Catalog,
    positive: Verdict,
) -> Result<MetricReport, EvalError> {
    let mut overall = ConfusionCounts::for_questions();
    let mut cells: BTreeMap<(Category, TaskType), ConfusionCounts> = BTreeMap::new();
    for ((note_id, question_id), answer) in predictions {
        let question =
            catalog.question(question_id).ok_or_else(|| key_error("question", question_id, Some(note_id)))?;
        let expected = gold
            .question_labels
            .get(&(note_id.clone(), question_id.clone()))
            .ok_or_else(|| key_error("gold label for question", question_id, Some(note_id)))?;
        overall.add(expected.index(), answer.value.index());
        cells
            .entry((question.category, question.task_type))
            .or_insert_with(ConfusionCounts::for_questions)
            .add(expected.index(), answer.value.index());
    }
    let unanswered = gold.question_labels.keys().filter(|k| !predictions.contains_key(*k)).count() as u64;
    let mut report = MetricReport::from_counts(Level::Question, overall, positive.index(), unanswered);
    report.breakdowns = cells
        .into_iter()
        .map(|((category, task_type), counts)| Breakdown {
            category,
            task_type,
            scores: Scores::from_counts(&counts, positive.index()),
        })
        .collect();
    Ok(report)
}

/// Criterion-level scoring; MET is the positive class.
pub fn score_criteria(
    verdicts: &BTreeMap<ItemKey, CriterionVerdict>,
    gold: &GoldSet,
) -> Result<MetricReport, EvalError> {
    let index = |met: bool| if met { 0 } else { 1 };
    let mut counts = ConfusionCounts::for_criteria();
    for ((note_id, criterion_id), verdict) in verdicts {
        let expected = gold
            .criterion_labels
            .get(&(note_id.clone(), criterion_id.clone()))
            .ok_or_else(|| key_error("gold label for criterion", criterion_id, Some(note_id)))?;
        counts.add(index(*expected == CriterionLabel::Met), index(verdict.met));
    }
    let unanswered = gold.criterion_labels.keys().filter(|k| !verdicts.contains_key(*k)).count() as u64;
    Ok(MetricReport::from_counts(Level::Criterion, counts, 0, unanswered))
}
