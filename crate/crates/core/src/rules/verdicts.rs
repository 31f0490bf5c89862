//! Criterion- and trial-level roll-up.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{eval_rule, parse_rule, sensitivity, AnswerMap, RuleParseError, Sensitivity};
use crate::corpus::{CriterionKind, CriterionSpec, TrialSpec};
use crate::verdict::Verdict;

#[derive(Debug, Error)]
pub enum VerdictError {
    #[error("criterion {criterion_id}: {source}")]
    Rule {
        criterion_id: String,
        #[source]
        source: RuleParseError,
    },
    #[error("trial {trial_id}: no verdict for criterion {criterion_id}")]
    MissingVerdict { trial_id: String, criterion_id: String },
}

/// Rule outcome for one criterion on one note.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionVerdict {
    pub criterion_id: String,
    pub kind: CriterionKind,
    pub met: bool,
    pub stable: bool,
    pub sensitivity: Sensitivity,
    /// Answers of every question the rule references, as evaluated.
    pub answers: BTreeMap<String, Verdict>,
    pub missing_ids: Vec<String>,
}

impl CriterionVerdict {
    /// Whether this criterion leaves the patient eligible: inclusions must be
    /// met, exclusions must not be.
    pub fn passes(&self) -> bool {
        match self.kind {
            CriterionKind::Inclusion => self.met,
            CriterionKind::Exclusion => !self.met,
        }
    }
}

pub fn criterion_verdict(criterion: &CriterionSpec, answers: &AnswerMap) -> Result<CriterionVerdict, VerdictError> {
    let rule = parse_rule(&criterion.rule).map_err(|source| VerdictError::Rule {
        criterion_id: criterion.criterion_id.clone(),
        source,
    })?;
    let sens = sensitivity(&rule, answers);
    Ok(CriterionVerdict {
        criterion_id: criterion.criterion_id.clone(),
        kind: criterion.kind,
        met: eval_rule(&rule, answers),
        stable: sens.is_stable(),
        sensitivity: sens,
        answers: rule.question_ids().into_iter().map(|q| {
            let v = answers.get(&q);
            (q, v)
        }).collect(),
        missing_ids: answers.missing_ids(&rule),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TrialStatus {
    Eligible,
    Ineligible,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialVerdict {
    pub trial_id: String,
    pub status: TrialStatus,
    /// Criteria that block eligibility. For UNDETERMINED this holds the
    /// unstable criteria the outcome hinges on.
    pub failing: Vec<String>,
}

/// Rolls criterion verdicts up to a trial.
///
/// * ELIGIBLE: every criterion passes and every verdict is stable.
/// * INELIGIBLE: at least one criterion fails with a stable verdict.
/// * UNDETERMINED: otherwise; the outcome depends on unstable verdicts.
pub fn trial_verdict(trial: &TrialSpec, verdicts: &[CriterionVerdict]) -> Result<TrialVerdict, VerdictError> {
    let by_id: BTreeMap<&str, &CriterionVerdict> = verdicts.iter().map(|v| (v.criterion_id.as_str(), v)).collect();
    let mut relevant = Vec::with_capacity(trial.criterion_ids.len());
    for cid in &trial.criterion_ids {
        let v = by_id.get(cid.as_str()).ok_or_else(|| VerdictError::MissingVerdict {
            trial_id: trial.trial_id.clone(),
            criterion_id: cid.clone(),
        })?;
        relevant.push(*v);
    }

    let failing: Vec<String> = relevant.iter().filter(|v| !v.passes()).map(|v| v.criterion_id.clone()).collect();
    let stable_failure = relevant.iter().any(|v| !v.passes() && v.stable);
    let (status, failing) = if stable_failure {
        (TrialStatus::Ineligible, failing)
    } else if !failing.is_empty() {
        (TrialStatus::Undetermined, failing)
    } else {
        let unstable: Vec<String> = relevant.iter().filter(|v| !v.stable).map(|v| v.criterion_id.clone()).collect();
        if unstable.is_empty() {
            (TrialStatus::Eligible, Vec::new())
        } else {
            (TrialStatus::Undetermined, unstable)
        }
    };
    Ok(TrialVerdict { trial_id: trial.trial_id.clone(), status, failing })
}
