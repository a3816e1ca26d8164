//! Partial labeling: map clusters to score intervals inside [1, 900].
//!
//! Clusters are ranked by a composite risk key and slotted top-down from
//! the score ceiling, subject to the rule caps (liquidated clusters capped
//! at 400, new-user clusters confined to their range, new + liquidated
//! capped below 150). Intervals are pairwise disjoint within a cohort so a
//! score implies its cluster.

mod intervals;
mod profile;

pub use intervals::{apply_overrides, assign_intervals, read_override_csv, validate_intervals, RulePolicy};
pub use profile::{profile_clusters, ClusterProfile, FeatureStats};

use crate::features::{ScaledMatrix, UserFeatureVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Score floor and ceiling for every user.
pub const SCORE_MIN: u16 = 1;
pub const SCORE_MAX: u16 = 900;

/// Entry score pinned onto wallets with zero protocol interactions.
pub const ENTRY_SCORE: u16 = 100;

/// A cluster's zScore interval, `lower < upper`, both within [1, 900].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreInterval {
    pub cluster_id: i64,
    pub lower: u16,
    pub upper: u16,
}

impl ScoreInterval {
    pub fn width(&self) -> u16 {
        self.upper - self.lower
    }

    pub fn contains(&self, score: u16) -> bool {
        (self.lower..=self.upper).contains(&score)
    }
}

/// One user joined with its cluster and interval. Zero-interaction wallets
/// carry `pinned = true` and score exactly [`ENTRY_SCORE`], bypassing the
/// network.
#[derive(Debug, Clone)]
pub struct LabeledRow {
    pub features: UserFeatureVector,
    /// The user's row of the scaled matrix the clusters were mined on.
    pub scaled: Vec<f64>,
    pub cluster_id: i64,
    pub interval: ScoreInterval,
    pub pinned: bool,
}

#[derive(Debug, Clone, Default)]
pub struct LabeledDataset {
    pub rows: Vec<LabeledRow>,
}

impl LabeledDataset {
    pub fn n_clusters(&self) -> usize {
        let mut ids: Vec<i64> = self.rows.iter().map(|r| r.cluster_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    pub fn intervals_by_cluster(&self) -> BTreeMap<i64, ScoreInterval> {
        self.rows
            .iter()
            .map(|r| (r.cluster_id, r.interval))
            .collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LabelError {
    #[error("no profiles to assign intervals to")]
    NoProfiles,
    #[error(
        "infeasible slotting: {clusters} clusters cannot fit disjoint intervals \
         under the rule caps (stuck at cluster {at})"
    )]
    InfeasibleSlotting { clusters: usize, at: i64 },
    #[error("no interval assigned for cluster {0}")]
    MissingInterval(i64),
    #[error("labels ({labels}) and features ({features}) differ in length")]
    LengthMismatch { labels: usize, features: usize },
    #[error("manual override violates interval rules: {0}")]
    BadOverride(String),
    #[error("malformed override file: {0}")]
    MalformedOverride(String),
}

/// Join features, labels, and intervals into the training dataset. Every
/// user carries its cluster's interval; zero-interaction wallets are pinned
/// to the entry score no matter which cluster they fell in.
pub fn label_users(
    features: &[UserFeatureVector],
    scaled: &ScaledMatrix,
    labels: &[i64],
    intervals: &[ScoreInterval],
) -> Result<LabeledDataset, LabelError> {
    if features.len() != labels.len() {
        return Err(LabelError::LengthMismatch {
            labels: labels.len(),
            features: features.len(),
        });
    }
    let by_cluster: BTreeMap<i64, ScoreInterval> =
        intervals.iter().map(|iv| (iv.cluster_id, *iv)).collect();

    let rows = features
        .iter()
        .zip(&scaled.rows)
        .zip(labels)
        .map(|((vector, scaled_row), &cluster_id)| {
            let interval = by_cluster
                .get(&cluster_id)
                .copied()
                .ok_or(LabelError::MissingInterval(cluster_id))?;
            Ok(LabeledRow {
                features: vector.clone(),
                scaled: scaled_row.clone(),
                cluster_id,
                interval,
                pinned: vector.is_zero_interaction(),
            })
        })
        .collect::<Result<Vec<_>, LabelError>>()?;

    Ok(LabeledDataset { rows })
}
