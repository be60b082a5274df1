use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterPurity {
    pub cluster: String,
    pub size: u64,
    pub majority: String,
    pub purity: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PurityReport {
    pub clusters: Vec<ClusterPurity>,
    pub total: u64,
    /// `None` when no labelled detection was assigned.
    pub weighted: Option<f64>,
}

/// Weighted cluster purity of `(cluster, label)` pairs. Each cluster is
/// scored by its most frequent label; equal counts go to the smallest label.
pub fn weighted_purity<C, L, I>(pairs: I) -> PurityReport
where
    C: Ord + ToString,
    L: Ord + ToString,
    I: IntoIterator<Item = (C, L)>,
{
    let mut hist: BTreeMap<C, BTreeMap<L, u64>> = BTreeMap::new();
    for (c, l) in pairs {
        *hist.entry(c).or_default().entry(l).or_default() += 1;
    }
    let mut clusters = Vec::with_capacity(hist.len());
    let mut total = 0u64;
    let mut weighted_sum = 0.0;
    for (cluster, labels) in hist {
        let size: u64 = labels.values().sum();
        let mut best: Option<(&L, u64)> = None;
        for (l, &n) in &labels {
            if best.is_none_or(|(_, b)| n > b) {
                best = Some((l, n));
            }
        }
        let (majority, count) = best.expect("non-empty cluster");
        let purity = count as f64 / size as f64;
        total += size;
        weighted_sum += size as f64 * purity;
        clusters.push(ClusterPurity {
            cluster: cluster.to_string(),
            size,
            majority: majority.to_string(),
            purity,
        });
    }
    PurityReport {
        weighted: (total > 0).then(|| weighted_sum / total as f64),
        clusters,
        total,
    }
}
