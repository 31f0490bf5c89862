//! Evidence grounding and the counterfactual-inference proxy.
//!
//! An answer is grounded when every evidence quote occurs in the note after
//! both are normalized. A wrong YES/NO answer whose evidence is not grounded
//! is counted as a counterfactual inference; a wrong answer with grounded
//! evidence is an inference error, not a fabrication.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{key_error, ratio, EvalError};
use crate::corpus::{canonical_text, AdmissionNote, GoldSet, ItemKey};
use crate::gateway::ParsedAnswer;
use crate::verdict::Verdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Grounding {
    Grounded,
    Ungrounded,
    NoEvidence,
}

impl Grounding {
    pub fn as_str(self) -> &'static str {
        match self {
            Grounding::Grounded => "GROUNDED",
            Grounding::Ungrounded => "UNGROUNDED",
            Grounding::NoEvidence => "NO_EVIDENCE",
        }
    }
}

/// Lowercases, turns every character that is neither alphanumeric nor
/// whitespace into a space, and collapses whitespace runs.
pub fn normalize_for_grounding(text: &str) -> String {
    let mapped: String = text
        .chars()
        .flat_map(|c| {
            let keep = c.is_alphanumeric();
            let lower: Vec<char> = if keep { c.to_lowercase().collect() } else { vec![' '] };
            lower
        })
        .collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn grounding_check(answer: &ParsedAnswer, note: &AdmissionNote) -> Grounding {
    let quotes: Vec<String> =
        answer.evidence.iter().map(|q| normalize_for_grounding(q)).filter(|q| !q.is_empty()).collect();
    if quotes.is_empty() {
        return Grounding::NoEvidence;
    }
    let haystack = normalize_for_grounding(&canonical_text(note));
    if quotes.iter().all(|q| haystack.contains(q.as_str())) {
        Grounding::Grounded
    } else {
        Grounding::Ungrounded
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualReport {
    pub items: u64,
    pub errors: u64,
    pub counterfactuals: u64,
    /// Counterfactuals over all items.
    pub rate: f64,
    /// Counterfactuals over wrong answers.
    pub rate_among_errors: f64,
}

/// Automated counterfactual-inference proxy over scored predictions.
pub fn counterfactual_rate(
    predictions: &BTreeMap<ItemKey, ParsedAnswer>,
    gold: &GoldSet,
    notes: &BTreeMap<String, AdmissionNote>,
) -> Result<CounterfactualReport, EvalError> {
    let (mut errors, mut counterfactuals) = (0, 0);
    for ((note_id, question_id), answer) in predictions {
        let expected = gold
            .question_labels
            .get(&(note_id.clone(), question_id.clone()))
            .ok_or_else(|| key_error("gold label for question", question_id, Some(note_id)))?;
        let note = notes.get(note_id).ok_or_else(|| key_error("note", note_id, None))?;
        if answer.value == *expected {
            continue;
        }
        errors += 1;
        if answer.value != Verdict::Unknown && grounding_check(answer, note) == Grounding::Ungrounded {
            counterfactuals += 1;
        }
    }
    let items = predictions.len() as u64;
    Ok(CounterfactualReport {
        items,
        errors,
        counterfactuals,
        rate: ratio(counterfactuals, items),
        rate_among_errors: ratio(counterfactuals, errors),
    })
}
