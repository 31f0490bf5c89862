//! Reply parsing for the verdict/evidence answer format.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::verdict::Verdict;

/// Format instructions appended to every answering prompt.
pub const ANSWER_CONTRACT: &str = "\
Answer format:
1. Begin your reply with exactly one quoted verdict: \"Yes\", \"No\", or \"Unable to determine\" \
(use \"Unable to determine\" when the note does not provide the information).
2. Follow with your reasoning in a few sentences.
3. Finish with the passages of the admission note that support your answer, copied verbatim, \
one per line, between two lines that contain only EVIDENCE:
EVIDENCE:
<verbatim quote from the note>
EVIDENCE:";

const EVIDENCE_MARKER: &str = "EVIDENCE:";

/// A reply reduced to its verdict, reasoning and quoted evidence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub value: Verdict,
    pub rationale: String,
    pub evidence: Vec<String>,
    pub provenance: String,
    /// Set when the verdict was not the leading quoted token and had to be
    /// recovered from the first sentence, or defaulted to UNKNOWN.
    #[serde(default)]
    pub parse_fallback: bool,
}

impl ParsedAnswer {
    pub fn new(value: Verdict, rationale: impl Into<String>, provenance: impl Into<String>) -> Self {
        Self { value, rationale: rationale.into(), evidence: Vec::new(), provenance: provenance.into(), parse_fallback: false }
    }

    /// Renders the answer back into the reply format [`parse_answer`] reads.
    pub fn render(&self) -> String {
        let mut out = format!("\"{}\".", self.value.reply_token());
        if !self.rationale.is_empty() {
            out.push(' ');
            out.push_str(&self.rationale);
        }
        if !self.evidence.is_empty() {
            out.push('\n');
            out.push_str(EVIDENCE_MARKER);
            for quote in &self.evidence {
                out.push('\n');
                out.push_str(quote);
            }
            out.push('\n');
            out.push_str(EVIDENCE_MARKER);
        }
        out
    }
}

fn map_phrase(phrase: &str) -> Option<Verdict> {
    let normalized: String = phrase
        .trim_matches(|c: char| c.is_whitespace() || c.is_ascii_punctuation())
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    match normalized.as_str() {
        "yes" => Some(Verdict::Yes),
        "no" => Some(Verdict::No),
        "unable to determine" | "information not provided" | "unknown" => Some(Verdict::Unknown),
        _ => None,
    }
}

static PHRASE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(yes|no|unable\s+to\s+determine|information\s+not\s+provided|unknown)\b").expect("valid regex")
});

const OPEN_QUOTES: [char; 5] = ['"', '\u{201C}', '\'', '\u{2018}', '\u{00AB}'];
const CLOSE_QUOTES: [char; 6] = ['"', '\u{201D}', '\'', '\u{2019}', '\u{00BB}', '\u{201C}'];

/// Leading quoted token and the text after it.
fn leading_token(text: &str) -> Option<(&str, &str)> {
    let mut chars = text.char_indices();
    let (_, first) = chars.next()?;
    if !OPEN_QUOTES.contains(&first) {
        return None;
    }
    let start = first.len_utf8();
    let close = text[start..].find(|c: char| CLOSE_QUOTES.contains(&c))? + start;
    let close_len = text[close..].chars().next().map_or(1, char::len_utf8);
    Some((&text[start..close], &text[close + close_len..]))
}

fn strip_quote_layer(s: &str) -> &str {
    let s = s.trim();
    let s = s.strip_prefix("- ").unwrap_or(s).trim();
    let mut chars = s.chars();
    match (chars.next(), chars.next_back()) {
        (Some(a), Some(b)) if OPEN_QUOTES.contains(&a) && CLOSE_QUOTES.contains(&b) && s.chars().count() >= 2 => {
            s[a.len_utf8()..s.len() - b.len_utf8()].trim()
        }
        _ => s,
    }
}

/// Splits text into non-evidence lines and evidence quotes.
fn split_evidence(text: &str) -> (String, Vec<String>) {
    let mut body = Vec::new();
    let mut evidence = Vec::new();
    let mut inside = false;
    for line in text.lines() {
        let trimmed = line.trim();
        let marker_rest = trimmed
            .get(..EVIDENCE_MARKER.len())
            .filter(|head| head.eq_ignore_ascii_case(EVIDENCE_MARKER))
            .map(|_| trimmed[EVIDENCE_MARKER.len()..].trim());
        match marker_rest {
            Some("") => inside = !inside,
            Some(inline) => {
                let quote = strip_quote_layer(inline);
                if !quote.is_empty() {
                    evidence.push(quote.to_string());
                }
            }
            None if inside => {
                let quote = strip_quote_layer(trimmed);
                if !quote.is_empty() {
                    evidence.push(quote.to_string());
                }
            }
            None => body.push(line),
        }
    }
    (body.join("\n"), evidence)
}

fn first_sentence(text: &str) -> &str {
    let end = text.find(['.', '!', '?', '\n']).unwrap_or(text.len());
    &text[..end]
}

/// Parses a reply into a [`ParsedAnswer`]. Total: anything unparsable
/// becomes UNKNOWN with `parse_fallback` set.
pub fn parse_answer(text: &str, provenance: &str) -> ParsedAnswer {
    let trimmed = text.trim();
    if let Some((token, rest)) = leading_token(trimmed) {
        if let Some(value) = map_phrase(token) {
            let (body, evidence) = split_evidence(rest);
            let rationale = body
                .trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '.' | ',' | ':' | ';' | '-' | '!'))
                .trim_end()
                .to_string();
            return ParsedAnswer { value, rationale, evidence, provenance: provenance.into(), parse_fallback: false };
        }
    }

    let (body, evidence) = split_evidence(trimmed);
    let body = body.trim();
    let mut hits = PHRASE.find_iter(first_sentence(body));
    let value = match (hits.next(), hits.next()) {
        (Some(m), None) => map_phrase(m.as_str()).unwrap_or(Verdict::Unknown),
        _ => Verdict::Unknown,
    };
    ParsedAnswer { value, rationale: body.to_string(), evidence, provenance: provenance.into(), parse_fallback: true }
}
