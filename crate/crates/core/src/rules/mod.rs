//! Criterion aggregation rules.
//!
//! Rules combine tri-valued question answers into a two-valued criterion
//! outcome. Atoms compare one answer against one value, so `Q4 IS NOT YES`
//! holds when Q4 is `NO` or `UNKNOWN`. Uncertainty is surfaced separately by
//! [`sensitivity`], which checks whether any resolution of the `UNKNOWN`
//! answers could flip the outcome.

mod parser;
mod verdicts;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use parser::{is_valid_question_id, parse_rule, RuleParseError};
pub use verdicts::{criterion_verdict, trial_verdict, CriterionVerdict, TrialStatus, TrialVerdict, VerdictError};

use crate::verdict::Verdict;

/// Maximum number of UNKNOWN answers [`sensitivity`] will enumerate over.
pub const SENSITIVITY_MAX_UNKNOWNS: usize = 16;

/// Parsed aggregation rule.
///
/// `ANY`/`ALL` have no node of their own: [`RuleExpr::any`] and
/// [`RuleExpr::all`] expand them into `Or`/`And` of atoms.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RuleExpr {
    Atom { question: String, negated: bool, value: Verdict },
    Not(Box<RuleExpr>),
    And(Vec<RuleExpr>),
    Or(Vec<RuleExpr>),
}

impl RuleExpr {
    pub fn is(question: impl Into<String>, value: Verdict) -> Self {
        RuleExpr::Atom { question: question.into(), negated: false, value }
    }

    pub fn is_not(question: impl Into<String>, value: Verdict) -> Self {
        RuleExpr::Atom { question: question.into(), negated: true, value }
    }

    /// `ANY(ids) IS value`: true when at least one answer equals `value`.
    ///
    /// # Panics
    /// If `ids` is empty.
    pub fn any<S: Into<String>>(ids: impl IntoIterator<Item = S>, value: Verdict) -> Self {
        Self::quantified(ids, value, RuleExpr::Or)
    }

    /// `ALL(ids) IS value`: true when every answer equals `value`.
    ///
    /// # Panics
    /// If `ids` is empty.
    pub fn all<S: Into<String>>(ids: impl IntoIterator<Item = S>, value: Verdict) -> Self {
        Self::quantified(ids, value, RuleExpr::And)
    }

    fn quantified<S: Into<String>>(
        ids: impl IntoIterator<Item = S>,
        value: Verdict,
        build: fn(Vec<RuleExpr>) -> RuleExpr,
    ) -> Self {
        let mut atoms: Vec<RuleExpr> = ids.into_iter().map(|q| RuleExpr::is(q, value)).collect();
        assert!(!atoms.is_empty(), "ANY/ALL needs at least one question id");
        if atoms.len() == 1 {
            atoms.pop().expect("one atom")
        } else {
            build(atoms)
        }
    }

    /// Question ids referenced by the rule, in order of first appearance.
    pub fn question_ids(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        self.visit_atoms(&mut |q| {
            if seen.insert(q.to_string()) {
                out.push(q.to_string());
            }
        });
        out
    }

    fn visit_atoms(&self, f: &mut impl FnMut(&str)) {
        match self {
            RuleExpr::Atom { question, .. } => f(question),
            RuleExpr::Not(inner) => inner.visit_atoms(f),
            RuleExpr::And(children) | RuleExpr::Or(children) => {
                children.iter().for_each(|c| c.visit_atoms(f))
            }
        }
    }

    /// Returns a copy with every question id passed through `rename`.
    pub fn rename_questions(&self, rename: &impl Fn(&str) -> String) -> RuleExpr {
        match self {
            RuleExpr::Atom { question, negated, value } => RuleExpr::Atom {
                question: rename(question),
                negated: *negated,
                value: *value,
            },
            RuleExpr::Not(inner) => RuleExpr::Not(Box::new(inner.rename_questions(rename))),
            RuleExpr::And(c) => RuleExpr::And(c.iter().map(|e| e.rename_questions(rename)).collect()),
            RuleExpr::Or(c) => RuleExpr::Or(c.iter().map(|e| e.rename_questions(rename)).collect()),
        }
    }

    /// Evaluates against an arbitrary answer lookup.
    pub fn eval_with(&self, lookup: &impl Fn(&str) -> Verdict) -> bool {
        match self {
            RuleExpr::Atom { question, negated, value } => (lookup(question) == *value) != *negated,
            RuleExpr::Not(inner) => !inner.eval_with(lookup),
            RuleExpr::And(children) => children.iter().all(|c| c.eval_with(lookup)),
            RuleExpr::Or(children) => children.iter().any(|c| c.eval_with(lookup)),
        }
    }

    fn is_compound(&self) -> bool {
        matches!(self, RuleExpr::And(_) | RuleExpr::Or(_))
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_compound() {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

/// Canonical rendering: upper-case keywords, compound operands parenthesized.
/// Parsing the output yields the same tree.
impl fmt::Display for RuleExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleExpr::Atom { question, negated, value } => {
                let op = if *negated { "IS NOT" } else { "IS" };
                write!(f, "{question} {op} {value}")
            }
            RuleExpr::Not(inner) => {
                f.write_str("NOT ")?;
                inner.fmt_child(f)
            }
            RuleExpr::And(children) | RuleExpr::Or(children) => {
                let sep = if matches!(self, RuleExpr::And(_)) { " AND " } else { " OR " };
                for (i, child) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    child.fmt_child(f)?;
                }
                Ok(())
            }
        }
    }
}

/// Answers available for one note, keyed by question id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerMap {
    answers: BTreeMap<String, Verdict>,
}

impl AnswerMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, question_id: impl Into<String>, value: Verdict) {
        self.answers.insert(question_id.into(), value);
    }

    /// Answer for `question_id`; a missing answer reads as `UNKNOWN`.
    pub fn get(&self, question_id: &str) -> Verdict {
        self.answers.get(question_id).copied().unwrap_or(Verdict::Unknown)
    }

    pub fn contains(&self, question_id: &str) -> bool {
        self.answers.contains_key(question_id)
    }

    /// Ids referenced by `expr` that have no recorded answer.
    pub fn missing_ids(&self, expr: &RuleExpr) -> Vec<String> {
        expr.question_ids().into_iter().filter(|q| !self.contains(q)).collect()
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Verdict)> {
        self.answers.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl<K: Into<String>> FromIterator<(K, Verdict)> for AnswerMap {
    fn from_iter<T: IntoIterator<Item = (K, Verdict)>>(iter: T) -> Self {
        Self { answers: iter.into_iter().map(|(k, v)| (k.into(), v)).collect() }
    }
}

/// Two-valued evaluation over tri-valued answers.
pub fn eval_rule(expr: &RuleExpr, answers: &AnswerMap) -> bool {
    expr.eval_with(&|q| answers.get(q))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Stability {
    Stable,
    Unstable,
}

/// Outcome of [`sensitivity`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub stability: Stability,
    /// Referenced questions whose answer is UNKNOWN (or missing).
    pub unknown_ids: Vec<String>,
    /// Set when too many unknowns were present to enumerate; the result is
    /// then UNSTABLE without having been checked.
    pub capped: bool,
}

impl Sensitivity {
    pub fn is_stable(&self) -> bool {
        self.stability == Stability::Stable
    }
}

/// Checks whether resolving UNKNOWN answers can change the rule outcome.
///
/// Every resolution is enumerated: each referenced UNKNOWN answer becomes YES
/// or NO, or stays UNKNOWN (partial resolutions). This covers all `2^k` full
/// completions, and the result is STABLE only if every resolution agrees
/// with the outcome on the actual answers.
pub fn sensitivity(expr: &RuleExpr, answers: &AnswerMap) -> Sensitivity {
    let unknown_ids: Vec<String> = expr
        .question_ids()
        .into_iter()
        .filter(|q| answers.get(q) == Verdict::Unknown)
        .collect();
    let k = unknown_ids.len();
    if k > SENSITIVITY_MAX_UNKNOWNS {
        return Sensitivity { stability: Stability::Unstable, unknown_ids, capped: true };
    }

    let slot: BTreeMap<&str, u32> = unknown_ids.iter().zip(0..).map(|(q, i)| (q.as_str(), 3u32.pow(i))).collect();
    let eval_state = |state: u32| {
        expr.eval_with(&|q| match slot.get(q) {
            Some(&weight) => match (state / weight) % 3 {
                1 => Verdict::Yes,
                2 => Verdict::No,
                _ => Verdict::Unknown,
            },
            None => answers.get(q),
        })
    };
    let actual = eval_rule(expr, answers);
    let stable = (1..3u32.pow(k as u32)).all(|state| eval_state(state) == actual);
    Sensitivity {
        stability: if stable { Stability::Stable } else { Stability::Unstable },
        unknown_ids,
        capped: false,
    }
}
