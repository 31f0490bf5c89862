//! `eligo convert`: criteria in, catalog out.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tracing::info;

use super::{io_failure, RunError};
use crate::conversion::{convert_criteria, ConversionError, ConversionReport, NamedBackend};
use crate::corpus::{CatalogCounts, CriteriaFile};
use crate::gateway::{BackendConfig, Gateway, GatewayError};
use crate::prompts::PromptSet;

pub const CONVERSION_REPORT_FILE: &str = "conversion_report.md";

/// `backends.json`: the drafting backends and the refiner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsFile {
    pub backends: Vec<BackendConfig>,
    pub refiner: BackendConfig,
}

#[derive(Debug, Clone)]
pub struct ConvertArgs {
    pub criteria: PathBuf,
    pub backends: PathBuf,
    pub out: PathBuf,
    pub prompts: Option<PathBuf>,
}

fn gateway(cfg: &BackendConfig, base: &Path) -> Result<Gateway, RunError> {
    Gateway::from_config(cfg, base, None).map_err(|e| match e {
        GatewayError::Fixtures { .. } => RunError::Input(e.to_string()),
        other => RunError::Config(other.to_string()),
    })
}

fn load_backends(path: &Path) -> Result<(Vec<NamedBackend>, NamedBackend), RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
    let file: BackendsFile =
        serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
    if file.backends.is_empty() {
        return Err(RunError::Config(format!("{}: at least one backend is required", path.display())));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut labels = BTreeSet::new();
    let mut backends = Vec::new();
    for (i, cfg) in file.backends.iter().enumerate() {
        let label = cfg.label.clone().unwrap_or_else(|| format!("backend{}", i + 1));
        if !labels.insert(label.clone()) {
            return Err(RunError::Config(format!("duplicate backend label {label:?}")));
        }
        backends.push(NamedBackend::new(label, gateway(cfg, base)?));
    }
    let refiner_label = file.refiner.label.clone().unwrap_or_else(|| "refiner".into());
    Ok((backends, NamedBackend::new(refiner_label, gateway(&file.refiner, base)?)))
}

pub async fn cmd_convert(args: &ConvertArgs) -> Result<(CatalogCounts, ConversionReport), RunError> {
    let (backends, refiner) = load_backends(&args.backends)?;
    let prompts = match &args.prompts {
        Some(dir) => PromptSet::load_dir(dir).map_err(|e| RunError::Config(e.to_string()))?,
        None => PromptSet::default(),
    };
    let text = std::fs::read_to_string(&args.criteria)
        .map_err(|e| RunError::Input(format!("{}: {e}", args.criteria.display())))?;
    let criteria: CriteriaFile =
        serde_json::from_str(&text).map_err(|e| RunError::Input(format!("{}: {e}", args.criteria.display())))?;
    let mut seen = BTreeSet::new();
    for c in &criteria.criteria {
        if !seen.insert(c.criterion_id.as_str()) {
            return Err(RunError::Input(format!("duplicate criterion id {:?}", c.criterion_id)));
        }
    }

    let (catalog, report) =
        convert_criteria(&prompts, &criteria.criteria, &backends, &refiner).await.map_err(|e| match e {
            ConversionError::EmptyCriterion { .. } | ConversionError::Catalog(_) => RunError::Input(e.to_string()),
            other => RunError::Runtime(other.to_string()),
        })?;
    catalog.write_dir(&args.out).map_err(|e| RunError::Runtime(e.to_string()))?;
    let report_path = args.out.join(CONVERSION_REPORT_FILE);
    std::fs::write(&report_path, report.to_markdown()).map_err(|e| io_failure("write", &report_path, e))?;
    info!(
        questions = catalog.counts().questions,
        needs_human_rule = ?report.needs_human_rule(),
        "catalog written to {}",
        args.out.display()
    );
    Ok((catalog.counts(), report))
}
