//! Cluster descriptive statistics.

use crate::features::{UserFeatureVector, FEATURE_COUNT};
#[cfg(test)]
use crate::features::FEATURE_SCHEMA;
use crate::ingest::CallType;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Per-feature summary over a cluster's members (unscaled features).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterProfile {
    pub cluster_id: i64,
    pub size: usize,
    /// One entry per [`FEATURE_SCHEMA`] column.
    pub stats: Vec<FeatureStats>,
    /// Median Borrow count below 10.
    pub is_new_users: bool,
    /// Any member with a liquidation on record.
    pub has_liquidations: bool,
    /// Fraction of members with at least one liquidation.
    pub liquidation_rate: f64,
    /// Mean of members' averaged volatile borrow/deposit exposure.
    pub volatile_exposure_mean: f64,
    /// Mean of members' mean inter-event gaps (days); sporadic users score
    /// high here.
    pub sporadicity: f64,
    /// Mean total interaction count across the five calls.
    pub interaction_mean: f64,
}

const BORROW_THRESHOLD_NEW: f64 = 10.0;

/// Describe every cluster by its observed statistics and rule flags.
/// `labels[i]` is the cluster of `features[i]`; noise ids are profiled too
/// if present.
pub fn profile_clusters(features: &[UserFeatureVector], labels: &[i64]) -> Vec<ClusterProfile> {
    assert_eq!(features.len(), labels.len(), "labels cover all users");
    let mut members: BTreeMap<i64, Vec<&UserFeatureVector>> = BTreeMap::new();
    for (vector, &label) in features.iter().zip(labels) {
        members.entry(label).or_default().push(vector);
    }

    members
        .into_iter()
        .map(|(cluster_id, rows)| {
            let n = rows.len() as f64;
            let matrix: Vec<[f64; FEATURE_COUNT]> = rows.iter().map(|v| v.to_row()).collect();
            let stats = (0..FEATURE_COUNT)
                .map(|j| {
                    let column: Vec<f64> = matrix.iter().map(|r| r[j]).collect();
                    let mean = column.iter().sum::<f64>() / n;
                    let var = column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    FeatureStats {
                        mean,
                        std: var.sqrt(),
                        min: column.iter().copied().fold(f64::INFINITY, f64::min),
                        max: column.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    }
                })
                .collect();

            let mut borrows: Vec<u64> = rows
                .iter()
                .map(|v| v.interaction_counts[CallType::Borrow.index()])
                .collect();
            borrows.sort_unstable();
            let median_borrows = median_u64(&borrows);
            let liquidated = rows.iter().filter(|v| v.liquidation_count > 0).count();

            ClusterProfile {
                cluster_id,
                size: rows.len(),
                stats,
                is_new_users: median_borrows < BORROW_THRESHOLD_NEW,
                has_liquidations: liquidated > 0,
                liquidation_rate: liquidated as f64 / n,
                volatile_exposure_mean: rows
                    .iter()
                    .map(|v| (v.volatile_borrow_fraction + v.volatile_deposit_fraction) / 2.0)
                    .sum::<f64>()
                    / n,
                sporadicity: rows.iter().map(|v| v.mean_inter_event_gap_days).sum::<f64>() / n,
                interaction_mean: rows
                    .iter()
                    .map(|v| v.interaction_counts.iter().sum::<u64>() as f64)
                    .sum::<f64>()
                    / n,
            }
        })
        .collect()
}

fn median_u64(sorted: &[u64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    }
}

/// Column index lookup by schema name; panics on unknown names (the schema
/// is a compile-time constant).
#[cfg(test)]
pub(crate) fn column_index(name: &str) -> usize {
    FEATURE_SCHEMA
        .iter()
        .position(|c| c.name == name)
        .unwrap_or_else(|| panic!("unknown feature column `{name}`"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::tests::vector;

    #[test]
    fn singleton_cluster_stats_collapse_to_the_member() {
        let features = vec![vector("0xa", 4, 0)];
        let profiles = profile_clusters(&features, &[0]);
        assert_eq!(profiles.len(), 1);
        let row = features[0].to_row();
        for (j, stat) in profiles[0].stats.iter().enumerate() {
            assert_eq!(stat.mean, row[j]);
            assert_eq!(stat.min, row[j]);
            assert_eq!(stat.max, row[j]);
            assert_eq!(stat.std, 0.0);
        }
    }

    #[test]
    fn liquidation_flag_set_when_all_members_liquidated() {
        let features = vec![vector("0xa", 4, 1), vector("0xb", 2, 2)];
        let profiles = profile_clusters(&features, &[0, 0]);
        assert!(profiles[0].has_liquidations);
        assert_eq!(profiles[0].liquidation_rate, 1.0);
    }

    #[test]
    fn stats_match_independent_recomputation() {
        let features: Vec<_> = (0..30)
            .map(|i| vector(&format!("0x{i}"), i % 9, u64::from(i % 5 == 0)))
            .collect();
        let labels: Vec<i64> = (0..30).map(|i| (i % 2) as i64).collect();
        let profiles = profile_clusters(&features, &labels);

        // Brute-force pass over one column per cluster.
        let j = column_index("borrow_count");
        for profile in &profiles {
            let members: Vec<f64> = features
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == profile.cluster_id)
                .map(|(v, _)| v.to_row()[j])
                .collect();
            let mean = members.iter().sum::<f64>() / members.len() as f64;
            assert!((profile.stats[j].mean - mean).abs() < 1e-12);
            let max = members.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(profile.stats[j].max, max);
            assert!(profile.stats[j].min <= profile.stats[j].mean);
            assert!(profile.stats[j].mean <= profile.stats[j].max);
        }
    }

    #[test]
    fn median_borrow_rule_marks_new_user_clusters() {
        let newbies: Vec<_> = (0..5).map(|i| vector(&format!("0x{i}"), 3, 0)).collect();
        let veterans: Vec<_> = (0..5).map(|i| vector(&format!("0y{i}"), 40, 0)).collect();
        let all: Vec<_> = newbies.into_iter().chain(veterans).collect();
        let labels = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let profiles = profile_clusters(&all, &labels);
        assert!(profiles[0].is_new_users);
        assert!(!profiles[1].is_new_users);
    }
}
