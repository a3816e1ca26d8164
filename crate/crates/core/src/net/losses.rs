//! The three training losses, unweighted reference forms.
//!
//! These operate on continuous pre-rounding scores. Training applies the
//! configured weights on top; these functions are also the oracle side the
//! gradient code is checked against.

use super::ClusterImportance;
use crate::label::ScoreInterval;
use std::collections::BTreeMap;

/// Mean normalized overshoot outside the interval:
/// `(max(0, lower − z) + max(0, z − upper)) / (upper − lower)` per row.
/// Zero when every score sits inside its interval — which the bounded
/// score head guarantees structurally; the loss still reports violations
/// for any unconstrained score fed through it.
pub fn boundary_loss(scores: &[f64], intervals: &[ScoreInterval]) -> f64 {
    assert_eq!(scores.len(), intervals.len());
    if scores.is_empty() {
        return 0.0;
    }
    let total: f64 = scores
        .iter()
        .zip(intervals)
        .map(|(&z, iv)| {
            let lower = f64::from(iv.lower);
            let upper = f64::from(iv.upper);
            ((lower - z).max(0.0) + (z - upper).max(0.0)) / (upper - lower)
        })
        .sum();
    total / scores.len() as f64
}

/// Squared hinge on per-cluster spread: a cluster whose scores span less
/// than `target_spread` of its interval contributes
/// `(target_spread − achieved)²`; clusters of size 1 are skipped.
pub fn distribution_loss(
    scores_by_cluster: &BTreeMap<i64, Vec<f64>>,
    intervals: &BTreeMap<i64, ScoreInterval>,
    target_spread: f64,
) -> f64 {
    let mut total = 0.0;
    let mut counted = 0usize;
    for (cluster, scores) in scores_by_cluster {
        if scores.len() < 2 {
            continue;
        }
        let interval = intervals[cluster];
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let achieved = (max - min) / f64::from(interval.width());
        total += (target_spread - achieved).max(0.0).powi(2);
        counted += 1;
    }
    if counted == 0 {
        0.0
    } else {
        total / counted as f64
    }
}

/// Mean squared difference between each row's feature-weight vector and
/// its cluster's observed importance vector (mean over features, then over
/// rows).
pub fn coherence_loss(
    feature_weights: &[Vec<f64>],
    cluster_ids: &[i64],
    importance: &ClusterImportance,
) -> f64 {
    assert_eq!(feature_weights.len(), cluster_ids.len());
    if feature_weights.is_empty() {
        return 0.0;
    }
    let total: f64 = feature_weights
        .iter()
        .zip(cluster_ids)
        .map(|(weights, cluster)| {
            let target = importance.vector_for(*cluster);
            weights
                .iter()
                .zip(target)
                .map(|(w, t)| (w - t).powi(2))
                .sum::<f64>()
                / weights.len() as f64
        })
        .sum();
    total / feature_weights.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval(cluster_id: i64, lower: u16, upper: u16) -> ScoreInterval {
        ScoreInterval { cluster_id, lower, upper }
    }

    #[test]
    fn in_bounds_scores_cost_nothing() {
        let ivs = vec![interval(0, 100, 200); 4];
        assert_eq!(boundary_loss(&[100.0, 150.0, 199.9, 200.0], &ivs), 0.0);
    }

    #[test]
    fn overshoot_by_half_the_range_costs_half() {
        let ivs = vec![interval(0, 100, 200)];
        assert!((boundary_loss(&[250.0], &ivs) - 0.5).abs() < 1e-12);
        assert!((boundary_loss(&[50.0], &ivs) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mixed_batch_averages_per_row_terms() {
        let ivs = vec![interval(0, 100, 200), interval(0, 100, 200), interval(0, 300, 400)];
        let scores = [250.0, 150.0, 420.0];
        // Hand sum: 0.5 + 0 + 0.2 over 3 rows.
        let expected = (0.5 + 0.0 + 0.2) / 3.0;
        assert!((boundary_loss(&scores, &ivs) - expected).abs() < 1e-12);
    }

    #[test]
    fn spread_at_target_is_free() {
        let mut by_cluster = BTreeMap::new();
        by_cluster.insert(0i64, vec![100.0, 180.0]); // spread 0.8 of width 100
        let mut ivs = BTreeMap::new();
        ivs.insert(0i64, interval(0, 100, 200));
        assert_eq!(distribution_loss(&by_cluster, &ivs, 0.8), 0.0);
    }

    #[test]
    fn squared_shortfall_is_charged() {
        let mut by_cluster = BTreeMap::new();
        by_cluster.insert(0i64, vec![100.0, 140.0]); // achieved 0.4
        let mut ivs = BTreeMap::new();
        ivs.insert(0i64, interval(0, 100, 200));
        let loss = distribution_loss(&by_cluster, &ivs, 0.8);
        assert!((loss - 0.16).abs() < 1e-12, "got {loss}");
    }

    #[test]
    fn collapsed_cluster_pays_the_full_target() {
        let mut by_cluster = BTreeMap::new();
        by_cluster.insert(0i64, vec![150.0, 150.0, 150.0]);
        let mut ivs = BTreeMap::new();
        ivs.insert(0i64, interval(0, 100, 200));
        let loss = distribution_loss(&by_cluster, &ivs, 0.8);
        assert!((loss - 0.64).abs() < 1e-12);
    }

    #[test]
    fn singleton_clusters_are_skipped() {
        let mut by_cluster = BTreeMap::new();
        by_cluster.insert(0i64, vec![150.0]);
        let mut ivs = BTreeMap::new();
        ivs.insert(0i64, interval(0, 100, 200));
        assert_eq!(distribution_loss(&by_cluster, &ivs, 0.8), 0.0);
    }

    #[test]
    fn matching_weights_cost_nothing() {
        let importance = ClusterImportance::from_map(
            [(0i64, vec![0.5, 0.25, 0.25])].into_iter().collect(),
        );
        let loss = coherence_loss(&[vec![0.5, 0.25, 0.25]], &[0], &importance);
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn uniform_versus_one_hot_matches_closed_form() {
        let k = 4usize;
        let one_hot: Vec<f64> = (0..k).map(|j| if j == 0 { 1.0 } else { 0.0 }).collect();
        let importance = ClusterImportance::from_map([(0i64, one_hot)].into_iter().collect());
        let uniform = vec![1.0 / k as f64; k];
        let loss = coherence_loss(&[uniform], &[0], &importance);
        let kf = k as f64;
        let expected = ((kf - 1.0) / (kf * kf) + (1.0 - 1.0 / kf).powi(2)) / kf;
        assert!((loss - expected).abs() < 1e-12, "{loss} vs {expected}");
    }

    #[test]
    fn random_batch_matches_naive_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let k = 6usize;
        let importance = ClusterImportance::from_map(
            (0..3i64)
                .map(|c| {
                    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
                    let sum: f64 = raw.iter().sum();
                    (c, raw.iter().map(|v| v / sum).collect())
                })
                .collect(),
        );
        let weights: Vec<Vec<f64>> = (0..20)
            .map(|_| {
                let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
                let sum: f64 = raw.iter().sum();
                raw.iter().map(|v| v / sum).collect()
            })
            .collect();
        let clusters: Vec<i64> = (0..20).map(|i| i % 3).collect();

        let fast = coherence_loss(&weights, &clusters, &importance);
        let mut naive = 0.0;
        for (row, &c) in weights.iter().zip(&clusters) {
            let target = importance.vector_for(c);
            let mut row_sum = 0.0;
            for j in 0..k {
                row_sum += (row[j] - target[j]) * (row[j] - target[j]);
            }
            naive += row_sum / k as f64;
        }
        naive /= 20.0;
        assert!((fast - naive).abs() < 1e-9);
    }
}
