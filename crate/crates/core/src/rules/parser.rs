//! Recursive-descent parser for the aggregation rule language.
//!
//! ```text
//! expr  := or
//! or    := and ("OR" and)*
//! and   := unary ("AND" unary)*
//! unary := "NOT" unary | "(" expr ")" | atom
//! atom  := QID ("IS" | "IS NOT") VALUE
//!        | ("ANY" | "ALL") "(" QID ("," QID)* ")" "IS" VALUE
//! ```
//!
//! Keywords are case-insensitive. `ANY`/`ALL` are desugared while parsing,
//! so `ANY(Q2,Q3) IS YES` yields the same tree as `(Q2 IS YES OR Q3 IS YES)`.

use std::fmt;

use thiserror::Error;

use super::RuleExpr;
use crate::verdict::Verdict;

const KEYWORDS: [&str; 9] = ["AND", "OR", "NOT", "IS", "ANY", "ALL", "YES", "NO", "UNKNOWN"];

/// Rule text could not be parsed.
///
/// `position` is a 1-based character offset. When input ends early it points
/// one separator past the last token, where the missing token would start.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("rule parse error at position {position}: expected {expected}, found {found}")]
pub struct RuleParseError {
    pub position: usize,
    pub expected: String,
    pub found: String,
}

/// Whether `id` is usable as a question identifier inside rules.
pub fn is_valid_question_id(id: &str) -> bool {
    let mut chars = id.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(is_id_char) && !is_keyword(id)
}

fn is_id_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-')
}

fn is_keyword(word: &str) -> bool {
    KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(word))
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum TokenKind {
    Word(String),
    LParen,
    RParen,
    Comma,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Word(w) => write!(f, "{w:?}"),
            TokenKind::LParen => f.write_str("'('"),
            TokenKind::RParen => f.write_str("')'"),
            TokenKind::Comma => f.write_str("','"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    /// 1-based position of the first character.
    start: usize,
    /// 1-based position of the last character.
    end: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>, RuleParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let pos = i + 1;
        match c {
            c if c.is_whitespace() => i += 1,
            '(' | ')' | ',' => {
                let kind = match c {
                    '(' => TokenKind::LParen,
                    ')' => TokenKind::RParen,
                    _ => TokenKind::Comma,
                };
                tokens.push(Token { kind, start: pos, end: pos });
                i += 1;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let begin = i;
                while i < chars.len() && is_id_char(chars[i]) {
                    i += 1;
                }
                tokens.push(Token {
                    kind: TokenKind::Word(chars[begin..i].iter().collect()),
                    start: begin + 1,
                    end: i,
                });
            }
            other => {
                return Err(RuleParseError {
                    position: pos,
                    expected: "question id, keyword or parenthesis".into(),
                    found: format!("{other:?}"),
                })
            }
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_keyword(&self, keyword: &str) -> bool {
        matches!(self.peek(), Some(Token { kind: TokenKind::Word(w), .. }) if w.eq_ignore_ascii_case(keyword))
    }

    fn error(&self, expected: &str) -> RuleParseError {
        match self.peek() {
            Some(tok) => RuleParseError {
                position: tok.start,
                expected: expected.into(),
                found: tok.kind.to_string(),
            },
            None => RuleParseError {
                position: self.tokens.last().map_or(1, |t| t.end + 2),
                expected: expected.into(),
                found: "end of input".into(),
            },
        }
    }

    fn expect_keyword(&mut self, keyword: &str) -> Result<(), RuleParseError> {
        if self.peek_keyword(keyword) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(keyword))
        }
    }

    fn expect(&mut self, kind: TokenKind, hint: &str) -> Result<(), RuleParseError> {
        if self.peek().map(|t| &t.kind) == Some(&kind) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(hint))
        }
    }

    fn expr(&mut self) -> Result<RuleExpr, RuleParseError> {
        let mut terms = vec![self.and()?];
        while self.peek_keyword("OR") {
            self.pos += 1;
            terms.push(self.and()?);
        }
        Ok(collapse(terms, RuleExpr::Or))
    }

    fn and(&mut self) -> Result<RuleExpr, RuleParseError> {
        let mut terms = vec![self.unary()?];
        while self.peek_keyword("AND") {
            self.pos += 1;
            terms.push(self.unary()?);
        }
        Ok(collapse(terms, RuleExpr::And))
    }

    fn unary(&mut self) -> Result<RuleExpr, RuleParseError> {
        if self.peek_keyword("NOT") {
            self.pos += 1;
            return Ok(RuleExpr::Not(Box::new(self.unary()?)));
        }
        if matches!(self.peek(), Some(Token { kind: TokenKind::LParen, .. })) {
            self.pos += 1;
            let inner = self.expr()?;
            self.expect(TokenKind::RParen, "')'")?;
            return Ok(inner);
        }
        if self.peek_keyword("ANY") || self.peek_keyword("ALL") {
            return self.quantified();
        }
        self.atom()
    }

    fn question_id(&mut self) -> Result<String, RuleParseError> {
        match self.peek() {
            Some(Token { kind: TokenKind::Word(w), .. }) if is_valid_question_id(w) => {
                let id = w.clone();
                self.pos += 1;
                Ok(id)
            }
            _ => Err(self.error("question id")),
        }
    }

    fn value(&mut self) -> Result<Verdict, RuleParseError> {
        let parsed = match self.peek() {
            Some(Token { kind: TokenKind::Word(w), .. }) => w.parse::<Verdict>().ok(),
            _ => None,
        };
        match parsed {
            Some(v) => {
                self.pos += 1;
                Ok(v)
            }
            None => Err(self.error("VALUE (YES, NO or UNKNOWN)")),
        }
    }

    fn atom(&mut self) -> Result<RuleExpr, RuleParseError> {
        let question = self.question_id()?;
        self.expect_keyword("IS")?;
        let negated = if self.peek_keyword("NOT") {
            self.pos += 1;
            true
        } else {
            false
        };
        let value = self.value()?;
        Ok(RuleExpr::Atom { question, negated, value })
    }

    fn quantified(&mut self) -> Result<RuleExpr, RuleParseError> {
        let any = self.peek_keyword("ANY");
        self.pos += 1;
        self.expect(TokenKind::LParen, "'('")?;
        let mut ids = vec![self.question_id()?];
        while matches!(self.peek(), Some(Token { kind: TokenKind::Comma, .. })) {
            self.pos += 1;
            ids.push(self.question_id()?);
        }
        self.expect(TokenKind::RParen, "',' or ')'")?;
        self.expect_keyword("IS")?;
        let value = self.value()?;
        Ok(if any {
            RuleExpr::any(ids, value)
        } else {
            RuleExpr::all(ids, value)
        })
    }
}

fn collapse(mut terms: Vec<RuleExpr>, build: fn(Vec<RuleExpr>) -> RuleExpr) -> RuleExpr {
    if terms.len() == 1 {
        terms.pop().expect("one term")
    } else {
        build(terms)
    }
}

/// Parses rule text into an expression tree.
pub fn parse_rule(text: &str) -> Result<RuleExpr, RuleParseError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser { tokens, pos: 0 };
    let expr = parser.expr()?;
    if parser.peek().is_some() {
        return Err(parser.error("end of input"));
    }
    Ok(expr)
}
