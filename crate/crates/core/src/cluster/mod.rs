//! Behavior mining: clustering algorithms, silhouette scoring, and the
//! particle-swarm search over the clustering objective.
//!
//! The objective favors separable clusterings while rewarding the number of
//! mined behaviors: `objective = 10 · silhouette + n_clusters`, maximized
//! by the search.

mod agglomerative;
mod dbscan;
mod kmeans;
mod metrics;
mod pso;
mod silhouette;
mod split;

pub use agglomerative::{agglomerative, ward_merge_sequence, WardMerge};
pub use dbscan::dbscan;
pub use kmeans::{kmeans, kmeans_fit, KMeansFit};
pub use metrics::adjusted_rand_index;
pub use pso::{minimize, pso_search, PsoConfig, PsoError, PsoRun, SearchOutcome, SearchSpace};
pub use silhouette::{pairwise_distances, silhouette_score, silhouette_with_distances};
pub use split::{split_dominant, SplitOutcome, SubSplitReport};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Cluster id for DBSCAN noise points.
pub const NOISE: i64 = -1;

/// Silhouette gate the search applies; results at or below it come back as
/// below-gate reports. Overridable per search via [`SearchSpace::gate`].
pub const DEFAULT_SILHOUETTE_GATE: f64 = 0.51;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClusterAlgorithm {
    KMeans,
    Agglomerative,
    Dbscan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm")]
pub enum AlgorithmParams {
    KMeans { k: usize },
    Agglomerative { k: usize },
    Dbscan { eps: f64, min_samples: usize },
}

/// One clustering run. `objective` is exactly `10 · silhouette + n_clusters`
/// except for degenerate runs (all noise, or a single cluster), which carry
/// the −1 silhouette sentinel and −∞ objective so the search discards them.
#[derive(Debug, Clone, Serialize)]
pub struct ClusteringResult {
    pub algorithm: ClusterAlgorithm,
    pub params: AlgorithmParams,
    /// One id per row; DBSCAN noise is [`NOISE`].
    pub labels: Vec<i64>,
    pub silhouette: f64,
    pub objective: f64,
    pub n_clusters: usize,
}

impl ClusteringResult {
    /// Assemble a result, computing silhouette and the exact objective.
    pub(crate) fn assemble(
        algorithm: ClusterAlgorithm,
        params: AlgorithmParams,
        labels: Vec<i64>,
        data: &[Vec<f64>],
    ) -> Self {
        let n_clusters = count_clusters(&labels);
        let (silhouette, objective) = match silhouette_score(data, &labels) {
            Ok(s) => (s, objective(s, n_clusters)),
            Err(_) => (-1.0, f64::NEG_INFINITY),
        };
        ClusteringResult {
            algorithm,
            params,
            labels,
            silhouette,
            objective,
            n_clusters,
        }
    }

    /// Members per cluster id, noise excluded.
    pub fn cluster_sizes(&self) -> BTreeMap<i64, usize> {
        let mut sizes = BTreeMap::new();
        for &label in &self.labels {
            if label != NOISE {
                *sizes.entry(label).or_insert(0) += 1;
            }
        }
        sizes
    }
}

/// Distinct non-noise labels.
pub fn count_clusters(labels: &[i64]) -> usize {
    let mut seen: Vec<i64> = labels.iter().copied().filter(|&l| l != NOISE).collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// The clustering objective: silhouette weighted ten-fold plus the cluster
/// count. Fused multiply-add keeps the sum correctly rounded, so reported
/// reference values like (0.59, 10) → 15.9 hold exactly in f64.
pub fn objective(silhouette: f64, n_clusters: usize) -> f64 {
    silhouette.mul_add(10.0, n_clusters as f64)
}

#[derive(Debug, thiserror::Error)]
pub enum ClusterError {
    #[error("k = {k} exceeds the {rows} available rows")]
    KTooLarge { k: usize, rows: usize },
    #[error("k must be at least 1")]
    KZero,
    #[error("silhouette needs at least 2 clusters with members")]
    SingleCluster,
    #[error("eps must be positive, got {0}")]
    BadEps(f64),
    #[error("min_samples must be at least 1")]
    BadMinSamples,
    #[error("empty dataset")]
    EmptyData,
    #[error("search space does not match the chosen algorithm")]
    SpaceMismatch,
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_euclidean(a, b).sqrt()
}

pub(crate) fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
