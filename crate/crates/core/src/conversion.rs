//! Criteria conversion: decompose each eligibility criterion into simple
//! questions with one or more backends, then reconcile the drafts with a
//! refiner backend into a validated catalog entry and a draft rule.
//!
//! Backends answer with a line contract: `Q: <question>` per question and a
//! final `RULE: <rule>` line whose question references are `Q1..Qn` in the
//! order listed. The refiner may label its questions with
//! `Q: <question> | <category> | <task type>`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use futures::future::join_all;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::corpus::{Catalog, Category, CorpusError, CriterionSpec, QuestionSpec, TaskType, TrialSpec};
use crate::gateway::{ChatMessage, ChatRequest, Gateway, GatewayError};
use crate::prompts::PromptSet;
use crate::rules::parse_rule;

const CONVERSION_SYSTEM: &str = "You are a clinical research assistant preparing eligibility pre-screening questions.";

#[derive(Debug, Error)]
pub enum ConversionError {
    #[error("criterion {criterion_id}: criterion text is empty")]
    EmptyCriterion { criterion_id: String },
    #[error("criterion {criterion_id}: every backend failed ({})", causes.iter().map(|(l, e)| format!("{l}: {e}")).collect::<Vec<_>>().join("; "))]
    AllBackendsFailed { criterion_id: String, causes: Vec<(String, GatewayError)> },
    #[error("criterion {criterion_id}: no question drafts to merge")]
    NoDrafts { criterion_id: String },
    #[error("criterion {criterion_id}: refiner failed: {source}")]
    Refiner {
        criterion_id: String,
        #[source]
        source: GatewayError,
    },
    #[error("criterion {criterion_id}: refinement output unusable: {reason}")]
    RefinementParse { criterion_id: String, reason: String },
    #[error(transparent)]
    Catalog(#[from] CorpusError),
}

/// A gateway with the label it is reported under.
#[derive(Debug, Clone)]
pub struct NamedBackend {
    pub label: String,
    pub gateway: Gateway,
}

impl NamedBackend {
    pub fn new(label: impl Into<String>, gateway: Gateway) -> Self {
        Self { label: label.into(), gateway }
    }
}

/// One candidate question proposed by one backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionDraft {
    pub text: String,
    pub source_backend: String,
    pub criterion_id: String,
    pub suggested_category: Option<Category>,
    pub suggested_task_type: Option<TaskType>,
}

/// Drafts from every backend that answered, plus their proposed rules.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Generation {
    pub drafts: Vec<QuestionDraft>,
    /// (backend label, rule text as proposed, in that backend's Q1..Qn).
    pub proposed_rules: Vec<(String, String)>,
    pub warnings: Vec<String>,
    pub failed_backends: Vec<String>,
}

/// Parsed output of one conversion or refinement completion.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct LineOutput {
    questions: Vec<(String, Option<Category>, Option<TaskType>)>,
    rule: Option<String>,
    malformed: Vec<String>,
}

fn strip_prefix_ci<'a>(line: &'a str, prefix: &str) -> Option<&'a str> {
    let head = line.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix).then(|| line[prefix.len()..].trim())
}

fn squash(s: &str) -> String {
    s.chars().filter(char::is_ascii_alphanumeric).collect::<String>().to_ascii_lowercase()
}

fn parse_category(s: &str) -> Option<Category> {
    let key = squash(s);
    Category::ALL.into_iter().find(|c| squash(c.display_name()) == key)
}

fn parse_task_type(s: &str) -> Option<TaskType> {
    let key = squash(s);
    TaskType::ALL.into_iter().find(|t| squash(t.display_name()) == key)
}

/// Reads `Q:` and `RULE:` lines. Prose around them is ignored; a `Q:` line
/// with no text, or with labels that do not parse, counts as malformed.
fn parse_lines(text: &str, labelled: bool) -> LineOutput {
    let mut out = LineOutput::default();
    for raw in text.lines() {
        let line = raw.trim().trim_start_matches(['-', '*']).trim();
        if let Some(body) = strip_prefix_ci(line, "Q:") {
            if body.is_empty() {
                out.malformed.push(raw.to_string());
                continue;
            }
            let parts: Vec<&str> = body.split('|').map(str::trim).collect();
            match parts.as_slice() {
                [q] => out.questions.push((q.to_string(), None, None)),
                [q, cat, task] if labelled && !q.is_empty() => match (parse_category(cat), parse_task_type(task)) {
                    (Some(c), Some(t)) => out.questions.push((q.to_string(), Some(c), Some(t))),
                    _ => {
                        out.malformed.push(raw.to_string());
                        out.questions.push((q.to_string(), None, None));
                    }
                },
                _ => out.malformed.push(raw.to_string()),
            }
        } else if let Some(body) = strip_prefix_ci(line, "RULE:") {
            if !body.is_empty() {
                out.rule = Some(body.to_string());
            }
        }
    }
    out
}

/// Normalized question text for duplicate detection: lowercase, single
/// spaces, no terminal punctuation.
pub fn normalize_question(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed.trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace()).to_string()
}

fn kind_name(criterion: &CriterionSpec) -> &'static str {
    match criterion.kind {
        crate::corpus::CriterionKind::Inclusion => "inclusion",
        crate::corpus::CriterionKind::Exclusion => "exclusion",
    }
}

/// Conversion request for one criterion, tagged `convert|<criterion>|<backend>`.
pub fn build_conversion_prompt(
    prompts: &PromptSet,
    criterion: &CriterionSpec,
    backend_label: &str,
) -> Result<ChatRequest, ConversionError> {
    if criterion.text.trim().is_empty() {
        return Err(ConversionError::EmptyCriterion { criterion_id: criterion.criterion_id.clone() });
    }
    let body = prompts
        .conversion
        .render(&[("kind", kind_name(criterion)), ("criterion", criterion.text.trim())])
        .expect("conversion template is validated");
    Ok(ChatRequest::new(
        vec![ChatMessage::system(CONVERSION_SYSTEM), ChatMessage::user(body)],
        format!("convert|{}|{}", criterion.criterion_id, backend_label),
    ))
}

/// Asks every backend (concurrently) for a question set.
pub async fn generate_questions(
    prompts: &PromptSet,
    criterion: &CriterionSpec,
    backends: &[NamedBackend],
) -> Result<Generation, ConversionError> {
    let requests = backends
        .iter()
        .map(|b| build_conversion_prompt(prompts, criterion, &b.label))
        .collect::<Result<Vec<_>, _>>()?;
    let replies = join_all(backends.iter().zip(&requests).map(|(b, req)| b.gateway.complete(req))).await;

    let mut generation = Generation::default();
    let mut causes = Vec::new();
    for (backend, reply) in backends.iter().zip(replies) {
        let text = match reply {
            Ok(text) => text,
            Err(e) => {
                warn!(criterion = %criterion.criterion_id, backend = %backend.label, error = %e, "conversion backend failed");
                generation.warnings.push(format!("{}: backend failed: {e}", backend.label));
                generation.failed_backends.push(backend.label.clone());
                causes.push((backend.label.clone(), e));
                continue;
            }
        };
        let parsed = parse_lines(&text, false);
        if parsed.questions.is_empty() {
            generation.warnings.push(format!("{}: no \"Q:\" lines in reply", backend.label));
        }
        for line in &parsed.malformed {
            generation.warnings.push(format!("{}: malformed line skipped: {}", backend.label, line.trim()));
        }
        generation.drafts.extend(parsed.questions.into_iter().map(|(text, _, _)| QuestionDraft {
            text,
            source_backend: backend.label.clone(),
            criterion_id: criterion.criterion_id.clone(),
            suggested_category: None,
            suggested_task_type: None,
        }));
        if let Some(rule) = parsed.rule {
            generation.proposed_rules.push((backend.label.clone(), rule));
        }
    }
    if !backends.is_empty() && causes.len() == backends.len() {
        return Err(ConversionError::AllBackendsFailed { criterion_id: criterion.criterion_id.clone(), causes });
    }
    Ok(generation)
}

/// Drops drafts whose normalized text was already seen; first one wins.
pub fn dedup_drafts(drafts: &[QuestionDraft]) -> Vec<QuestionDraft> {
    let mut seen = std::collections::BTreeSet::new();
    drafts.iter().filter(|d| seen.insert(normalize_question(&d.text))).cloned().collect()
}

/// A reconciled criterion: its final questions and updated spec.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergedCriterion {
    pub questions: Vec<QuestionSpec>,
    /// The input criterion with `rule` and `question_ids` filled in.
    pub criterion: CriterionSpec,
    /// The refiner's rule was missing or unusable; `criterion.rule` is empty.
    pub needs_human_rule: bool,
    pub rule_problem: Option<String>,
    pub duplicates_removed: usize,
    pub warnings: Vec<String>,
}

fn refine_prompt(
    prompts: &PromptSet,
    criterion: &CriterionSpec,
    drafts: &[QuestionDraft],
    rules: &[(String, String)],
) -> ChatRequest {
    let mut draft_block = String::new();
    for (i, d) in drafts.iter().enumerate() {
        let _ = writeln!(draft_block, "D{}. {} [{}]", i + 1, d.text, d.source_backend);
    }
    let mut rule_block = String::new();
    for (label, rule) in rules {
        let _ = writeln!(rule_block, "- {label}: {rule}");
    }
    if rule_block.is_empty() {
        rule_block.push_str("(none)\n");
    }
    let body = prompts
        .refine
        .render(&[
            ("kind", kind_name(criterion)),
            ("criterion", criterion.text.trim()),
            ("drafts", draft_block.trim_end()),
            ("rules", rule_block.trim_end()),
        ])
        .expect("refine template is validated");
    ChatRequest::new(
        vec![ChatMessage::system(CONVERSION_SYSTEM), ChatMessage::user(body)],
        format!("refine|{}", criterion.criterion_id),
    )
}

/// Collapses near-duplicate drafts, asks the refiner to reconcile them and
/// restate the rule, and assigns ids `<criterion_id>.q<k>`. The result is
/// validated as a one-criterion catalog before it is returned.
pub async fn merge_question_sets(
    prompts: &PromptSet,
    criterion: &CriterionSpec,
    generation: &Generation,
    refiner: &NamedBackend,
) -> Result<MergedCriterion, ConversionError> {
    let cid = &criterion.criterion_id;
    if generation.drafts.is_empty() {
        return Err(ConversionError::NoDrafts { criterion_id: cid.clone() });
    }
    let unique = dedup_drafts(&generation.drafts);
    let mut duplicates_removed = generation.drafts.len() - unique.len();

    let req = refine_prompt(prompts, criterion, &unique, &generation.proposed_rules);
    let reply = refiner
        .gateway
        .complete(&req)
        .await
        .map_err(|source| ConversionError::Refiner { criterion_id: cid.clone(), source })?;
    let parsed = parse_lines(&reply, true);
    if parsed.questions.is_empty() {
        return Err(ConversionError::RefinementParse {
            criterion_id: cid.clone(),
            reason: "refiner reply has no \"Q:\" lines".into(),
        });
    }

    let mut warnings: Vec<String> =
        parsed.malformed.iter().map(|l| format!("refiner: malformed line: {}", l.trim())).collect();
    // Refiner position (1-based) -> final id; duplicates map onto the first.
    let mut position_ids: BTreeMap<String, String> = BTreeMap::new();
    let mut by_text: BTreeMap<String, String> = BTreeMap::new();
    let mut questions: Vec<QuestionSpec> = Vec::new();
    for (pos, (text, category, task_type)) in parsed.questions.iter().enumerate() {
        let key = normalize_question(text);
        if let Some(existing) = by_text.get(&key) {
            duplicates_removed += 1;
            position_ids.insert(format!("Q{}", pos + 1), existing.clone());
            continue;
        }
        let id = format!("{cid}.q{}", questions.len() + 1);
        let category = category.unwrap_or(Category::Diagnosis);
        let mut task_type = task_type.unwrap_or(TaskType::Classification);
        if category == Category::SymptomAndEvent && task_type != TaskType::Classification {
            warnings.push(format!("{id}: symptom/event questions are classification tasks; label adjusted"));
            task_type = TaskType::Classification;
        }
        questions.push(QuestionSpec { question_id: id.clone(), text: text.clone(), category, task_type });
        by_text.insert(key, id.clone());
        position_ids.insert(format!("Q{}", pos + 1), id);
    }

    let (rule_text, rule_problem) = match parsed.rule.as_deref() {
        None => (String::new(), Some("refiner proposed no RULE line".to_string())),
        Some(text) => match parse_rule(text) {
            Err(e) => (String::new(), Some(format!("proposed rule {text:?} does not parse: {e}"))),
            Ok(rule) => match rule.question_ids().into_iter().find(|q| !position_ids.contains_key(q)) {
                Some(unknown) => (String::new(), Some(format!("proposed rule references unknown question {unknown}"))),
                None => (rule.rename_questions(&|q| position_ids[q].clone()).to_string(), None),
            },
        },
    };
    if let Some(problem) = &rule_problem {
        warn!(criterion = %cid, %problem, "rule left for human authoring");
    }

    let updated = CriterionSpec {
        rule: rule_text,
        question_ids: questions.iter().map(|q| q.question_id.clone()).collect(),
        ..criterion.clone()
    };
    let check = CriterionSpec { trial_ids: Vec::new(), ..updated.clone() };
    Catalog::new(questions.clone(), vec![check], Vec::new())?;

    Ok(MergedCriterion {
        questions,
        needs_human_rule: rule_problem.is_some(),
        criterion: updated,
        rule_problem,
        duplicates_removed,
        warnings,
    })
}

/// Per-criterion bookkeeping for the conversion report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CriterionReport {
    pub criterion_id: String,
    pub drafts_per_backend: Vec<(String, usize)>,
    pub duplicates_removed: usize,
    pub final_questions: usize,
    pub needs_human_rule: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConversionReport {
    pub criteria: Vec<CriterionReport>,
}

impl ConversionReport {
    pub fn needs_human_rule(&self) -> Vec<&str> {
        self.criteria.iter().filter(|c| c.needs_human_rule).map(|c| c.criterion_id.as_str()).collect()
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# Conversion report\n\n");
        out.push_str("| Criterion | Drafts | Duplicates removed | Final questions | Rule |\n");
        out.push_str("|---|---|---|---|---|\n");
        for c in &self.criteria {
            let drafts = c.drafts_per_backend.iter().map(|(l, n)| format!("{l}: {n}")).collect::<Vec<_>>().join(", ");
            let rule = if c.needs_human_rule { "NEEDS HUMAN RULE" } else { "drafted" };
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} |",
                c.criterion_id, drafts, c.duplicates_removed, c.final_questions, rule
            );
        }
        let warned: Vec<_> = self.criteria.iter().filter(|c| !c.warnings.is_empty()).collect();
        if !warned.is_empty() {
            out.push_str("\n## Warnings\n");
            for c in warned {
                let _ = writeln!(out, "\n### {}\n", c.criterion_id);
                for w in &c.warnings {
                    let _ = writeln!(out, "- {w}");
                }
            }
        }
        out
    }
}

/// Converts every criterion and assembles a validated catalog. Trials are
/// derived from the criteria's `trial_ids`, in first-appearance order.
pub async fn convert_criteria(
    prompts: &PromptSet,
    criteria: &[CriterionSpec],
    backends: &[NamedBackend],
    refiner: &NamedBackend,
) -> Result<(Catalog, ConversionReport), ConversionError> {
    let mut questions = Vec::new();
    let mut merged_criteria = Vec::new();
    let mut report = ConversionReport::default();
    for criterion in criteria {
        let generation = generate_questions(prompts, criterion, backends).await?;
        let merged = merge_question_sets(prompts, criterion, &generation, refiner).await?;
        let drafts_per_backend = backends
            .iter()
            .map(|b| (b.label.clone(), generation.drafts.iter().filter(|d| d.source_backend == b.label).count()))
            .collect();
        let mut warnings = generation.warnings.clone();
        warnings.extend(merged.warnings.iter().cloned());
        warnings.extend(merged.rule_problem.iter().cloned());
        report.criteria.push(CriterionReport {
            criterion_id: criterion.criterion_id.clone(),
            drafts_per_backend,
            duplicates_removed: merged.duplicates_removed,
            final_questions: merged.questions.len(),
            needs_human_rule: merged.needs_human_rule,
            warnings,
        });
        questions.extend(merged.questions);
        merged_criteria.push(merged.criterion);
    }

    let mut trials: Vec<TrialSpec> = Vec::new();
    for c in &merged_criteria {
        for tid in &c.trial_ids {
            match trials.iter_mut().find(|t| &t.trial_id == tid) {
                Some(t) => t.criterion_ids.push(c.criterion_id.clone()),
                None => trials.push(TrialSpec {
                    trial_id: tid.clone(),
                    registry_code: None,
                    criterion_ids: vec![c.criterion_id.clone()],
                }),
            }
        }
    }
    Ok((Catalog::new(questions, merged_criteria, trials)?, report))
}
