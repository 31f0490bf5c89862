//! `metrics.json` document and its Markdown rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{MetricReport, Scores, TimingStats};

/// Metrics of one pathway label at both levels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PathwayMetrics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<MetricReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criterion: Option<MetricReport>,
}

/// Everything `eligo evaluate` measured; serialized as `metrics.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    /// Keyed by pathway label (`A:CRC`, `A:JD`, `A:IE`, `A:vote`, `B`).
    pub pathways: BTreeMap<String, PathwayMetrics>,
    #[serde(default)]
    pub timing: BTreeMap<String, TimingStats>,
    /// Free-form caveats recorded during evaluation.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Row label for a pathway label.
pub fn pathway_display_name(label: &str) -> String {
    match label {
        "B" => "Pathway B".into(),
        "A:vote" => "Pathway A: majority vote".into(),
        other => match other.strip_prefix("A:") {
            Some(role) => format!("Pathway A: {role}"),
            None => other.to_string(),
        },
    }
}

fn label_rank(label: &str) -> (usize, &str) {
    let rank = ["A:CRC", "A:JD", "A:IE", "A:vote", "B"].iter().position(|l| *l == label).unwrap_or(usize::MAX);
    (rank, label)
}

fn ordered<T>(map: &BTreeMap<String, T>) -> Vec<(&String, &T)> {
    let mut v: Vec<_> = map.iter().collect();
    v.sort_by(|a, b| label_rank(a.0).cmp(&label_rank(b.0)));
    v
}

fn row(name: &str, s: &Scores) -> String {
    format!("| {name} | {:.3} | {:.3} | {:.3} | {:.3} |\n", s.precision, s.recall, s.f1, s.accuracy_triclass)
}

const SUMMARY_HEADER: &str = "| Pathway | Precision | Recall | F1 | Accuracy |\n|---|---|---|---|---|\n";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into())
}

/// Renders the report tables: overall question-level performance,
/// breakdown by category and task type, criterion-level performance,
/// counterfactual proxy and timing.
pub fn render_report(summary: &EvalSummary) -> String {
    let pathways = ordered(&summary.pathways);
    let mut out = String::from("# Evaluation report\n\n");

    let questions: Vec<_> = pathways.iter().filter_map(|(l, m)| m.question.as_ref().map(|q| (*l, q))).collect();
    if !questions.is_empty() {
        out.push_str("## Question level\n\n");
        out.push_str(SUMMARY_HEADER);
        for (label, q) in &questions {
            out.push_str(&row(&pathway_display_name(label), &q.scores()));
        }
        let positive = &questions[0].1.positive_class;
        let _ = writeln!(
            out,
            "\nPositive class {positive}; other values count as negative. Accuracy is tri-class exact match \
             (binary-projection accuracy is in metrics.json).\n"
        );
        out.push_str("| Pathway | Answered | Unanswered |\n|---|---|---|\n");
        for (label, q) in &questions {
            let _ = writeln!(out, "| {} | {} | {} |", pathway_display_name(label), q.answered_count, q.unanswered_count);
        }

        out.push_str("\n## By category and task type\n");
        for (label, q) in &questions {
            let _ = writeln!(out, "\n### {}\n", pathway_display_name(label));
            out.push_str("| Category | Task type | N | Precision | Recall | F1 | Accuracy |\n|---|---|---|---|---|---|---|\n");
            for b in &q.breakdowns {
                let s = &b.scores;
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {:.3} | {:.3} | {:.3} | {:.3} |",
                    b.category, b.task_type, s.count, s.precision, s.recall, s.f1, s.accuracy_triclass
                );
            }
            let s = q.scores();
            let _ = writeln!(
                out,
                "| All | All | {} | {:.3} | {:.3} | {:.3} | {:.3} |",
                s.count, s.precision, s.recall, s.f1, s.accuracy_triclass
            );
        }
    }

    let criteria: Vec<_> = pathways.iter().filter_map(|(l, m)| m.criterion.as_ref().map(|c| (*l, c))).collect();
    if !criteria.is_empty() {
        out.push_str("\n## Criterion level\n\n");
        out.push_str(SUMMARY_HEADER);
        for (label, c) in &criteria {
            out.push_str(&row(&pathway_display_name(label), &c.scores()));
        }
    }

    let counterfactual: Vec<_> =
        questions.iter().filter_map(|(l, q)| q.counterfactual.as_ref().map(|c| (*l, c))).collect();
    if !counterfactual.is_empty() {
        out.push_str("\n## Counterfactual (automated proxy)\n\n");
        out.push_str(
            "Wrong YES/NO answers whose evidence quotes are not found in the note. \
             This replaces manual review and is an approximation of it.\n\n",
        );
        out.push_str("| Pathway | Items | Wrong | Counterfactual | Rate | Rate among errors |\n|---|---|---|---|---|---|\n");
        for (label, c) in counterfactual {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {:.2}% | {:.2}% |",
                pathway_display_name(label),
                c.items,
                c.errors,
                c.counterfactuals,
                c.rate * 100.0,
                c.rate_among_errors * 100.0
            );
        }
    }

    if !summary.timing.is_empty() {
        out.push_str("\n## Processing time (seconds)\n\n");
        out.push_str("| Pathway | N | Mean | P50 | P90 | Max |\n|---|---|---|---|---|---|\n");
        for (label, t) in ordered(&summary.timing) {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} |",
                pathway_display_name(label),
                t.count,
                opt(t.mean),
                opt(t.p50),
                opt(t.p90),
                opt(t.max)
            );
        }
    }

    if !summary.notes.is_empty() {
        out.push_str("\n## Notes\n\n");
        for n in &summary.notes {
            let _ = writeln!(out, "- {n}");
        }
    }
    out
}
