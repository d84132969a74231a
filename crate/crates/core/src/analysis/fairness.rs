use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agent::AgentId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub counts: BTreeMap<AgentId, u64>,
    pub total: u64,
    /// Pearson statistic against a uniform split.
    pub chi_square: f64,
    /// `chi_square` divided by its degrees of freedom.
    pub normalized: f64,
}

/// Priority counts per robot from a list of winners; robots that never won count as zero.
pub fn fairness_report(robots: &[AgentId], winners: &[AgentId]) -> FairnessReport {
    let mut counts: BTreeMap<AgentId, u64> = robots.iter().map(|r| (*r, 0)).collect();
    for w in winners {
        *counts.entry(*w).or_insert(0) += 1;
    }
    let total: u64 = counts.values().sum();
    let k = counts.len();
    let chi_square = if total == 0 || k == 0 {
        0.0
    } else {
        let e = total as f64 / k as f64;
        counts.values().map(|&o| (o as f64 - e).powi(2) / e).sum()
    };
    let normalized = if k > 1 { chi_square / (k - 1) as f64 } else { 0.0 };
    FairnessReport { counts, total, chi_square, normalized }
}
