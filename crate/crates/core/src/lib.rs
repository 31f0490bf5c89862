//! Clinical trial eligibility pre-screening over admission notes.
//!
//! Eligibility criteria are decomposed into simple YES/NO/UNKNOWN questions
//! ([`conversion`]). Each question is answered against a note either by three
//! role-conditioned prompts combined by majority vote ([`pathway_a`]) or by a
//! proponent/opponent/judge debate capped at two rounds ([`pathway_b`]).
//! Answers roll up into criterion and trial verdicts through a small rule
//! language ([`rules`]) and are scored against expert labels ([`eval`]).
//! [`runner`] ties the stages together behind the `eligo` CLI.

pub mod conversion;
pub mod corpus;
pub mod eval;
pub mod gateway;
pub mod pathway_a;
pub mod pathway_b;
pub mod prompts;
pub mod rules;
pub mod runner;
pub mod verdict;

pub use verdict::{CriterionLabel, Verdict};
