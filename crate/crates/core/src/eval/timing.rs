//! Per-label latency summaries with nearest-rank percentiles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimingStats {
    pub count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p50: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p90: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

/// Nearest-rank percentile of sorted samples: the value at rank ⌈p·n⌉.
fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl TimingStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        TimingStats {
            count: sorted.len() as u64,
            mean: Some(sorted.iter().sum::<f64>() / sorted.len() as f64),
            p50: Some(nearest_rank(&sorted, 0.5)),
            p90: Some(nearest_rank(&sorted, 0.9)),
            max: sorted.last().copied(),
        }
    }
}

/// Groups `(label, seconds)` records by label.
pub fn timing_stats<'a>(records: impl IntoIterator<Item = (&'a str, f64)>) -> BTreeMap<String, TimingStats> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (label, secs) in records {
        groups.entry(label.to_string()).or_default().push(secs);
    }
    groups.into_iter().map(|(label, samples)| (label, TimingStats::from_samples(&samples))).collect()
}
