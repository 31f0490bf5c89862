//! Tri-valued answer domain shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Answer to a single screening question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Yes,
    No,
    Unknown,
}

impl Verdict {
    pub const ALL: [Verdict; 3] = [Verdict::Yes, Verdict::No, Verdict::Unknown];

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Yes => "YES",
            Verdict::No => "NO",
            Verdict::Unknown => "UNKNOWN",
        }
    }

    /// Verdict token in the quoted form replies are asked to open with.
    pub fn reply_token(self) -> &'static str {
        match self {
            Verdict::Yes => "Yes",
            Verdict::No => "No",
            Verdict::Unknown => "Unable to determine",
        }
    }

    pub(crate) fn index(self) -> usize {
        match self {
            Verdict::Yes => 0,
            Verdict::No => 1,
            Verdict::Unknown => 2,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "YES" => Ok(Verdict::Yes),
            "NO" => Ok(Verdict::No),
            "UNKNOWN" => Ok(Verdict::Unknown),
            other => Err(format!("invalid verdict {other:?}")),
        }
    }
}

/// Gold or predicted outcome of a whole criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CriterionLabel {
    Met,
    NotMet,
}

impl CriterionLabel {
    pub fn from_met(met: bool) -> Self {
        if met {
            CriterionLabel::Met
        } else {
            CriterionLabel::NotMet
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CriterionLabel::Met => "MET",
            CriterionLabel::NotMet => "NOT_MET",
        }
    }
}

impl fmt::Display for CriterionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
