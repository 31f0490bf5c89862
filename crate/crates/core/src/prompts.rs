//! Prompt templates with `{{placeholder}}` substitution.
//!
//! Built-in templates ship with the crate; a prompts directory may override
//! any of them by file name (`role_crc.txt`, `stance_pos.txt`, ...).

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template {template}: no value for placeholder {{{{{name}}}}}")]
    MissingValue { template: String, name: String },
    #[error("template {template}: missing required placeholder {{{{{name}}}}}")]
    MissingPlaceholder { template: String, name: String },
    #[error("template {template}: {source}")]
    Io {
        template: String,
        #[source]
        source: std::io::Error,
    },
}

static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}").expect("valid regex"));

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    name: String,
    text: String,
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        Self { name: name.into(), text: text.into() }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Placeholder names used by the template.
    pub fn placeholders(&self) -> BTreeSet<String> {
        PLACEHOLDER.captures_iter(&self.text).map(|c| c[1].to_string()).collect()
    }

    fn require(&self, names: &[&str]) -> Result<(), PromptError> {
        let present = self.placeholders();
        match names.iter().find(|n| !present.contains(**n)) {
            Some(name) => Err(PromptError::MissingPlaceholder { template: self.name.clone(), name: name.to_string() }),
            None => Ok(()),
        }
    }

    /// Substitutes every placeholder. Values are inserted verbatim and never
    /// re-scanned, so a note containing `{{...}}` is left alone.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, PromptError> {
        let mut out = String::with_capacity(self.text.len());
        let mut last = 0;
        for caps in PLACEHOLDER.captures_iter(&self.text) {
            let whole = caps.get(0).expect("match");
            let name = &caps[1];
            let value = values.iter().find(|(k, _)| *k == name).map(|(_, v)| *v).ok_or_else(|| {
                PromptError::MissingValue { template: self.name.clone(), name: name.to_string() }
            })?;
            out.push_str(&self.text[last..whole.start()]);
            out.push_str(value);
            last = whole.end();
        }
        out.push_str(&self.text[last..]);
        Ok(out)
    }
}

/// Every template the pipeline uses.
#[derive(Debug, Clone)]
pub struct PromptSet {
    pub role_crc: PromptTemplate,
    pub role_jd: PromptTemplate,
    pub role_ie: PromptTemplate,
    pub stance_pos: PromptTemplate,
    pub stance_neg: PromptTemplate,
    pub judge_r1: PromptTemplate,
    pub judge_final: PromptTemplate,
    pub conversion: PromptTemplate,
    pub refine: PromptTemplate,
}

const BUILTIN: [(&str, &str, &[&str]); 9] = [
    ("role_crc.txt", include_str!("../prompts/role_crc.txt"), &["question", "note"]),
    ("role_jd.txt", include_str!("../prompts/role_jd.txt"), &["question", "note"]),
    ("role_ie.txt", include_str!("../prompts/role_ie.txt"), &["question", "note"]),
    ("stance_pos.txt", include_str!("../prompts/stance_pos.txt"), &["question", "note", "judge_notes"]),
    ("stance_neg.txt", include_str!("../prompts/stance_neg.txt"), &["question", "note", "judge_notes"]),
    ("judge_r1.txt", include_str!("../prompts/judge_r1.txt"), &["question", "note", "arg_pos", "arg_neg"]),
    (
        "judge_final.txt",
        include_str!("../prompts/judge_final.txt"),
        &["question", "note", "arg_pos", "arg_neg", "judge_notes"],
    ),
    ("conversion.txt", include_str!("../prompts/conversion.txt"), &["criterion"]),
    ("refine.txt", include_str!("../prompts/refine.txt"), &["criterion", "drafts"]),
];

impl Default for PromptSet {
    fn default() -> Self {
        Self::from_templates(BUILTIN.iter().map(|(name, text, _)| PromptTemplate::new(*name, *text)).collect())
    }
}

impl PromptSet {
    fn from_templates(mut t: Vec<PromptTemplate>) -> Self {
        let mut take = || t.remove(0);
        PromptSet {
            role_crc: take(),
            role_jd: take(),
            role_ie: take(),
            stance_pos: take(),
            stance_neg: take(),
            judge_r1: take(),
            judge_final: take(),
            conversion: take(),
            refine: take(),
        }
    }

    /// Built-in templates, overridden by any same-named file in `dir`.
    /// Overrides must keep the placeholders the pipeline fills in.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut templates = Vec::with_capacity(BUILTIN.len());
        for (name, builtin, required) in BUILTIN {
            let path = dir.join(name);
            let template = if path.exists() {
                let text = std::fs::read_to_string(&path)
                    .map_err(|source| PromptError::Io { template: name.to_string(), source })?;
                PromptTemplate::new(name, text)
            } else {
                PromptTemplate::new(name, builtin)
            };
            template.require(required)?;
            templates.push(template);
        }
        Ok(Self::from_templates(templates))
    }
}
