//! Preset-stance debate: proponent, opponent and judge, at most two rounds.
//!
//! ```text
//! round 1:  proponent ─┐
//!           opponent  ─┴─ equal verdicts? ── yes ──> consensus (2 calls)
//!                                 │ no
//!                           judge (round 1) ── verdict ──> outcome (3 calls)
//!                                 │ SECOND ROUND / no verdict
//! round 2:  proponent ─┐  (judge notes appended)
//!           opponent  ─┴─ final judge ──> outcome (6 calls)
//! ```
//!
//! Agreement is decided on parsed verdicts, never on raw text.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{canonical_text, AdmissionNote, QuestionSpec};
use crate::gateway::{parse_answer, ChatRequest, Gateway, ParsedAnswer};
use crate::pathway_a::PathwayError;
use crate::prompts::PromptSet;

/// Token a round-one judge uses to ask for a second round.
pub const SECOND_ROUND_TOKEN: &str = "SECOND ROUND";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stance {
    Positive,
    Negative,
}

impl Stance {
    fn agent(self) -> &'static str {
        match self {
            Stance::Positive => "proponent",
            Stance::Negative => "opponent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebateRound {
    pub proponent: ParsedAnswer,
    pub opponent: ParsedAnswer,
}

impl DebateRound {
    pub fn agree(&self) -> bool {
        self.proponent.value == self.opponent.value
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebateTranscript {
    pub round1: DebateRound,
    pub judge1: Option<ParsedAnswer>,
    /// Inconsistencies the round-one judge handed to round two.
    pub judge_notes: Option<String>,
    pub round2: Option<DebateRound>,
    pub judge_final: Option<ParsedAnswer>,
    pub outcome: ParsedAnswer,
    pub rounds_used: u8,
    pub calls_used: u8,
}

/// One line of the debate transcript JSONL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebateRecord {
    pub note_id: String,
    pub question_id: String,
    pub transcript: DebateTranscript,
}

/// A debate that stopped on a gateway error, with the steps that completed.
#[derive(Debug, Error)]
#[error("debate aborted after {} completed calls: {source}", completed.len())]
pub struct DebateError {
    #[source]
    pub source: PathwayError,
    pub completed: Vec<ParsedAnswer>,
}

fn tag(note_id: &str, question_id: &str, agent: &str, round: &str) -> String {
    format!("{note_id}|{question_id}|{agent}|{round}")
}

fn judge_notes_block(notes: Option<&str>) -> String {
    match notes {
        Some(n) => format!(
            "\nThe judge found these inconsistencies in the first round. Re-examine the note in more detail and address each of them:\n{}\n",
            n.trim()
        ),
        None => String::new(),
    }
}

/// Prompt for a stance agent. With `judge_notes` this is a round-two prompt.
pub fn stance_prompt(
    prompts: &PromptSet,
    question: &QuestionSpec,
    note: &AdmissionNote,
    stance: Stance,
    judge_notes: Option<&str>,
) -> ChatRequest {
    let template = match stance {
        Stance::Positive => &prompts.stance_pos,
        Stance::Negative => &prompts.stance_neg,
    };
    let note_text = canonical_text(note);
    let notes = judge_notes_block(judge_notes);
    let body = template
        .render(&[("question", &question.text), ("note", &note_text), ("judge_notes", &notes)])
        .expect("stance templates are validated");
    let round = if judge_notes.is_some() { "r2" } else { "r1" };
    ChatRequest::answering(&body, tag(&note.note_id, &question.question_id, stance.agent(), round))
}

fn judge_prompt(
    prompts: &PromptSet,
    question: &QuestionSpec,
    note: &AdmissionNote,
    round: &DebateRound,
    judge_notes: Option<&str>,
) -> ChatRequest {
    let note_text = canonical_text(note);
    let arg_pos = round.proponent.render();
    let arg_neg = round.opponent.render();
    let mut values = vec![
        ("question", question.text.as_str()),
        ("note", note_text.as_str()),
        ("arg_pos", arg_pos.as_str()),
        ("arg_neg", arg_neg.as_str()),
    ];
    let (template, round_label) = match judge_notes {
        Some(notes) => {
            values.push(("judge_notes", notes));
            (&prompts.judge_final, "final")
        }
        None => (&prompts.judge_r1, "r1"),
    };
    let body = template.render(&values).expect("judge templates are validated");
    ChatRequest::answering(&body, tag(&note.note_id, &question.question_id, "judge", round_label))
}

/// Text after a leading SECOND ROUND token, if the reply opens with one.
fn second_round_request(reply: &str) -> Option<String> {
    let trimmed = reply.trim_start();
    let head = trimmed.get(..SECOND_ROUND_TOKEN.len())?;
    if !head.eq_ignore_ascii_case(SECOND_ROUND_TOKEN) {
        return None;
    }
    Some(trimmed[SECOND_ROUND_TOKEN.len()..].trim_start_matches([':', '.', '-', ' ']).trim().to_string())
}

fn merged_evidence(a: &ParsedAnswer, b: &ParsedAnswer) -> Vec<String> {
    let mut out = a.evidence.clone();
    for e in &b.evidence {
        if !out.contains(e) {
            out.push(e.clone());
        }
    }
    out
}

struct Debate<'a> {
    prompts: &'a PromptSet,
    question: &'a QuestionSpec,
    note: &'a AdmissionNote,
    gateway: &'a Gateway,
    completed: Vec<ParsedAnswer>,
    calls: u8,
}

impl Debate<'_> {
    async fn call(&mut self, req: ChatRequest) -> Result<ParsedAnswer, DebateError> {
        self.calls += 1;
        match self.gateway.complete(&req).await {
            Ok(text) => {
                let parsed = parse_answer(&text, &req.tag);
                self.completed.push(parsed.clone());
                Ok(parsed)
            }
            Err(source) => Err(self.fail(PathwayError { provenance: req.tag, source })),
        }
    }

    fn fail(&mut self, source: PathwayError) -> DebateError {
        DebateError { source, completed: std::mem::take(&mut self.completed) }
    }

    /// Both stance agents, concurrently.
    async fn round(&mut self, judge_notes: Option<&str>) -> Result<DebateRound, DebateError> {
        let pos = stance_prompt(self.prompts, self.question, self.note, Stance::Positive, judge_notes);
        let neg = stance_prompt(self.prompts, self.question, self.note, Stance::Negative, judge_notes);
        self.calls += 2;
        let (p, n) = tokio::join!(self.gateway.complete(&pos), self.gateway.complete(&neg));
        let p = p.map(|t| parse_answer(&t, &pos.tag));
        let n = n.map(|t| parse_answer(&t, &neg.tag));
        for parsed in [&p, &n].into_iter().flatten() {
            self.completed.push(parsed.clone());
        }
        match (p, n) {
            (Ok(proponent), Ok(opponent)) => Ok(DebateRound { proponent, opponent }),
            (Err(source), _) => Err(self.fail(PathwayError { provenance: pos.tag, source })),
            (_, Err(source)) => Err(self.fail(PathwayError { provenance: neg.tag, source })),
        }
    }
}

/// Debate outcome plus elapsed wall time.
#[derive(Debug, Clone)]
pub struct DebateResult {
    pub outcome: ParsedAnswer,
    pub transcript: DebateTranscript,
    pub elapsed_ms: u64,
}

/// Runs the debate for one (note, question).
pub async fn run_debate(
    prompts: &PromptSet,
    question: &QuestionSpec,
    note: &AdmissionNote,
    gateway: &Gateway,
) -> Result<DebateResult, DebateError> {
    let started = Instant::now();
    let mut debate = Debate { prompts, question, note, gateway, completed: Vec::new(), calls: 0 };
    let round1 = debate.round(None).await?;

    if round1.agree() {
        let value = round1.proponent.value;
        let outcome = ParsedAnswer {
            value,
            rationale: format!("Proponent and opponent both concluded {value}."),
            evidence: merged_evidence(&round1.proponent, &round1.opponent),
            provenance: tag(&note.note_id, &question.question_id, "consensus", "r1"),
            parse_fallback: round1.proponent.parse_fallback || round1.opponent.parse_fallback,
        };
        let transcript = DebateTranscript {
            round1,
            judge1: None,
            judge_notes: None,
            round2: None,
            judge_final: None,
            outcome: outcome.clone(),
            rounds_used: 1,
            calls_used: debate.calls,
        };
        return Ok(DebateResult { outcome, transcript, elapsed_ms: started.elapsed().as_millis() as u64 });
    }

    let judge_req = judge_prompt(prompts, question, note, &round1, None);
    let judge_tag = judge_req.tag.clone();
    let raw = match gateway.complete(&judge_req).await {
        Ok(raw) => raw,
        Err(source) => {
            debate.calls += 1;
            return Err(debate.fail(PathwayError { provenance: judge_tag, source }));
        }
    };
    debate.calls += 1;
    let judge1 = parse_answer(&raw, &judge_tag);
    debate.completed.push(judge1.clone());

    let notes = match second_round_request(&raw) {
        Some(notes) => notes,
        None if !judge1.parse_fallback => {
            let transcript = DebateTranscript {
                round1,
                judge1: Some(judge1.clone()),
                judge_notes: None,
                round2: None,
                judge_final: None,
                outcome: judge1.clone(),
                rounds_used: 1,
                calls_used: debate.calls,
            };
            return Ok(DebateResult { outcome: judge1, transcript, elapsed_ms: started.elapsed().as_millis() as u64 });
        }
        // No verdict token and no explicit request: the judge did not close.
        None => raw.trim().to_string(),
    };
    let notes = if notes.is_empty() { "The two conclusions disagree.".to_string() } else { notes };

    let round2 = debate.round(Some(&notes)).await?;
    let final_req = judge_prompt(prompts, question, note, &round2, Some(&notes));
    let judge_final = debate.call(final_req).await?;
    let transcript = DebateTranscript {
        round1,
        judge1: Some(judge1),
        judge_notes: Some(notes),
        round2: Some(round2),
        judge_final: Some(judge_final.clone()),
        outcome: judge_final.clone(),
        rounds_used: 2,
        calls_used: debate.calls,
    };
    Ok(DebateResult { outcome: judge_final, transcript, elapsed_ms: started.elapsed().as_millis() as u64 })
}
