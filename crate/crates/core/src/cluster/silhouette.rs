//! Silhouette scoring.

use super::{euclidean, ClusterError, NOISE};
use std::collections::BTreeMap;

/// Full pairwise distance matrix (row-major, n×n). The search precomputes
/// this once per dataset so repeated silhouette evaluations only pay for
/// the label pass.
pub fn pairwise_distances(data: &[Vec<f64>]) -> Vec<f64> {
    let n = data.len();
    let mut dists = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = euclidean(&data[i], &data[j]);
            dists[i * n + j] = d;
            dists[j * n + i] = d;
        }
    }
    dists
}

/// Mean silhouette over non-noise points: per point, (b − a) / max(a, b)
/// where a is the mean distance to its own cluster and b the smallest mean
/// distance to another cluster. Points in singleton clusters contribute 0,
/// as do points with a = b = 0.
pub fn silhouette_score(data: &[Vec<f64>], labels: &[i64]) -> Result<f64, ClusterError> {
    let dists = pairwise_distances(data);
    silhouette_with_distances(&dists, labels)
}

/// Silhouette from a precomputed distance matrix (see
/// [`pairwise_distances`]).
pub fn silhouette_with_distances(dists: &[f64], labels: &[i64]) -> Result<f64, ClusterError> {
    let n = labels.len();
    assert_eq!(dists.len(), n * n, "distance matrix shape");

    let mut sizes: BTreeMap<i64, usize> = BTreeMap::new();
    for &label in labels {
        if label != NOISE {
            *sizes.entry(label).or_insert(0) += 1;
        }
    }
    if sizes.len() < 2 {
        return Err(ClusterError::SingleCluster);
    }

    let cluster_ids: Vec<i64> = sizes.keys().copied().collect();
    let index_of: BTreeMap<i64, usize> =
        cluster_ids.iter().enumerate().map(|(i, &c)| (c, i)).collect();

    let mut total = 0.0;
    let mut counted = 0usize;
    let mut sums = vec![0.0; cluster_ids.len()];

    for i in 0..n {
        if labels[i] == NOISE {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if j == i || labels[j] == NOISE {
                continue;
            }
            sums[index_of[&labels[j]]] += dists[i * n + j];
        }

        let own = index_of[&labels[i]];
        let own_size = sizes[&labels[i]];
        counted += 1;
        if own_size <= 1 {
            continue; // singleton contributes 0
        }
        let a = sums[own] / (own_size - 1) as f64;
        let b = cluster_ids
            .iter()
            .enumerate()
            .filter(|(idx, _)| *idx != own)
            .map(|(idx, c)| sums[idx] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);

        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }

    Ok(total / counted as f64)
}
