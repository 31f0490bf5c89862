use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::gateway::BackendConfig;
use crate::pathway_a::Role;

/// Pathway label of the majority vote.
pub const VOTE_LABEL: &str = "A:vote";
/// Pathway label of the debate.
pub const DEBATE_LABEL: &str = "B";

/// Pathway label of a single role's answers.
pub fn role_label(role: Role) -> String {
    format!("A:{}", role.code())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathwaySelection {
    A,
    B,
    #[serde(rename = "both")]
    Both,
}

impl PathwaySelection {
    pub fn includes_a(self) -> bool {
        matches!(self, PathwaySelection::A | PathwaySelection::Both)
    }

    pub fn includes_b(self) -> bool {
        matches!(self, PathwaySelection::B | PathwaySelection::Both)
    }
}

fn all_roles() -> Vec<Role> {
    Role::ALL.to_vec()
}

fn default_true() -> bool {
    true
}

fn default_concurrency() -> usize {
    8
}

/// `run.json`. Relative paths resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub backend: BackendConfig,
    pub pathway: PathwaySelection,
    #[serde(default = "all_roles")]
    pub roles: Vec<Role>,
    #[serde(default = "default_true")]
    pub vote: bool,
    pub notes: PathBuf,
    pub catalog: PathBuf,
    pub out: PathBuf,
    /// Gold labels; screening only validates them against the catalog.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<PathBuf>,
    /// Directory of prompt template overrides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompts: Option<PathBuf>,
    /// Seed label; selects mock fixtures through `{seed}` in their path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<String>,
    /// (note, question) units processed at once. The backend's
    /// `max_inflight` still bounds outstanding requests.
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
}

impl RunConfig {
    /// Reads and validates a config. Returns it with paths made absolute,
    /// plus the raw bytes (for the manifest digest).
    pub fn load(path: &Path) -> Result<(RunConfig, Vec<u8>), RunError> {
        let bytes = std::fs::read(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_slice(&bytes).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok((cfg, bytes))
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.notes, &mut self.catalog, &mut self.out] {
            *p = base.join(&*p);
        }
        for p in [&mut self.gold, &mut self.prompts].into_iter().flatten() {
            *p = base.join(&*p);
        }
        if let Some(f) = &mut self.backend.fixtures {
            *f = base.join(&*f);
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        self.backend.validate().map_err(|e| RunError::Config(e.to_string()))?;
        if self.concurrency == 0 {
            return Err(RunError::Config("concurrency must be >= 1".into()));
        }
        if self.pathway.includes_a() {
            let unique: BTreeSet<Role> = self.roles.iter().copied().collect();
            if unique.len() != self.roles.len() {
                return Err(RunError::Config("roles must not repeat".into()));
            }
            if self.roles.is_empty() {
                return Err(RunError::Config("pathway A needs at least one role".into()));
            }
            if self.vote && unique.len() != Role::ALL.len() {
                return Err(RunError::Config("majority vote requires all three roles (crc, jd, ie)".into()));
            }
        }
        Ok(())
    }

    /// Pathway labels this run produces, in report order.
    pub fn labels(&self) -> Vec<String> {
        let mut labels = Vec::new();
        if self.pathway.includes_a() {
            labels.extend(Role::ALL.into_iter().filter(|r| self.roles.contains(r)).map(role_label));
            if self.vote {
                labels.push(VOTE_LABEL.to_string());
            }
        }
        if self.pathway.includes_b() {
            labels.push(DEBATE_LABEL.to_string());
        }
        labels
    }
}
