//! Role-based answering: three expert personas, combined by majority vote.
//!
//! * CRC (clinical research coordinator): locates the note sections that
//!   usually hold the answer, then extracts from them.
//! * JD (junior doctor): reads the whole note and reasons clinically. Tends
//!   to the highest recall of the three.
//! * IE (information engineer): term matching across the note with
//!   attention to negation.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{canonical_text, AdmissionNote, QuestionSpec};
use crate::gateway::{parse_answer, ChatRequest, Gateway, GatewayError, ParsedAnswer};
use crate::prompts::{PromptSet, PromptTemplate};
use crate::verdict::Verdict;

/// Provenance of a voted answer.
pub const VOTE_PROVENANCE: &str = "majority_vote";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Crc,
    Jd,
    Ie,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Crc, Role::Jd, Role::Ie];

    pub fn code(self) -> &'static str {
        match self {
            Role::Crc => "CRC",
            Role::Jd => "JD",
            Role::Ie => "IE",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "crc" => Ok(Role::Crc),
            "jd" => Ok(Role::Jd),
            "ie" => Ok(Role::Ie),
            other => Err(format!("unknown role {other:?} (expected crc, jd or ie)")),
        }
    }
}

/// A role and the chain-of-thought instructions it is prompted with.
#[derive(Debug, Clone)]
pub struct RoleProfile {
    pub role: Role,
    template: PromptTemplate,
}

impl RoleProfile {
    pub fn new(role: Role, template: PromptTemplate) -> Self {
        Self { role, template }
    }

    pub fn from_prompts(prompts: &PromptSet, role: Role) -> Self {
        let template = match role {
            Role::Crc => &prompts.role_crc,
            Role::Jd => &prompts.role_jd,
            Role::Ie => &prompts.role_ie,
        };
        Self::new(role, template.clone())
    }

    /// The three built-in profiles.
    pub fn builtin() -> [RoleProfile; 3] {
        let prompts = PromptSet::default();
        Role::ALL.map(|r| RoleProfile::from_prompts(&prompts, r))
    }

    pub fn instructions(&self) -> &str {
        self.template.text()
    }
}

/// Provenance tag of a role request: `note|question|role<CODE>`.
pub fn role_tag(note_id: &str, question_id: &str, role: Role) -> String {
    format!("{note_id}|{question_id}|role{}", role.code())
}

#[derive(Debug, Error)]
#[error("{provenance}: {source}")]
pub struct PathwayError {
    pub provenance: String,
    #[source]
    pub source: GatewayError,
}

#[derive(Debug, Error)]
#[error("majority vote over answers for different items: {0:?}")]
pub struct MixedKeyError(pub Vec<(String, String)>);

/// One role's answer to one (note, question).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleAnswer {
    pub note_id: String,
    pub question_id: String,
    pub role: Role,
    pub answer: ParsedAnswer,
    pub elapsed_ms: u64,
}

pub fn role_prompt(question: &QuestionSpec, note: &AdmissionNote, profile: &RoleProfile) -> ChatRequest {
    let note_text = canonical_text(note);
    let body = profile
        .template
        .render(&[("question", &question.text), ("note", &note_text)])
        .expect("role templates are validated to carry question and note");
    ChatRequest::answering(&body, role_tag(&note.note_id, &question.question_id, profile.role))
}

/// Asks one role; exactly one gateway call.
pub async fn answer_with_role(
    question: &QuestionSpec,
    note: &AdmissionNote,
    profile: &RoleProfile,
    gateway: &Gateway,
) -> Result<RoleAnswer, PathwayError> {
    let req = role_prompt(question, note, profile);
    let started = Instant::now();
    let text = gateway
        .complete(&req)
        .await
        .map_err(|source| PathwayError { provenance: req.tag.clone(), source })?;
    Ok(RoleAnswer {
        note_id: note.note_id.clone(),
        question_id: question.question_id.clone(),
        role: profile.role,
        answer: parse_answer(&text, &req.tag),
        elapsed_ms: started.elapsed().as_millis() as u64,
    })
}

/// Combines three role answers. Two or three equal values win; three
/// distinct values give UNKNOWN.
pub fn majority_vote(a: &RoleAnswer, b: &RoleAnswer, c: &RoleAnswer) -> Result<ParsedAnswer, MixedKeyError> {
    let keys: BTreeSet<(String, String)> =
        [a, b, c].iter().map(|r| (r.note_id.clone(), r.question_id.clone())).collect();
    if keys.len() != 1 {
        return Err(MixedKeyError(keys.into_iter().collect()));
    }

    let mut votes = [a, b, c];
    votes.sort_by_key(|r| (r.role, r.answer.value));
    let count = |v: Verdict| votes.iter().filter(|r| r.answer.value == v).count();
    let value = Verdict::ALL.into_iter().find(|&v| count(v) >= 2).unwrap_or(Verdict::Unknown);

    let winners: Vec<&RoleAnswer> = votes.iter().copied().filter(|r| r.answer.value == value).collect();
    let mut evidence: Vec<String> = Vec::new();
    for quote in winners.iter().flat_map(|r| &r.answer.evidence) {
        if !evidence.contains(quote) {
            evidence.push(quote.clone());
        }
    }
    let rationale = votes.iter().map(|r| format!("{}: {}", r.role, r.answer.value)).collect::<Vec<_>>().join("; ");
    Ok(ParsedAnswer {
        value,
        rationale,
        evidence,
        provenance: VOTE_PROVENANCE.into(),
        parse_fallback: winners.iter().any(|r| r.answer.parse_fallback),
    })
}
