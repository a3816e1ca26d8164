//! Observed per-cluster feature importance.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const EPSILON: f64 = 1e-8;

/// One normalized importance vector per cluster: entries ≥ 0, summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterImportance {
    map: BTreeMap<i64, Vec<f64>>,
    n_features: usize,
}

impl ClusterImportance {
    pub fn from_map(map: BTreeMap<i64, Vec<f64>>) -> Self {
        let n_features = map.values().next().map_or(0, Vec::len);
        ClusterImportance { map, n_features }
    }

    /// Importance vector for a cluster; unknown ids fall back to uniform.
    pub fn vector_for(&self, cluster_id: i64) -> &[f64] {
        static EMPTY: [f64; 0] = [];
        self.map
            .get(&cluster_id)
            .map(Vec::as_slice)
            .unwrap_or(&EMPTY)
    }

    pub fn clusters(&self) -> impl Iterator<Item = (&i64, &Vec<f64>)> {
        self.map.iter()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }
}

/// Per cluster c and feature j: `|mean_c(j) − mean(j)| / (std(j) + ε)`,
/// normalized per cluster to sum 1. A cluster that deviates nowhere gets
/// the uniform vector.
pub fn observed_importance(rows: &[Vec<f64>], labels: &[i64]) -> ClusterImportance {
    assert_eq!(rows.len(), labels.len());
    let n = rows.len();
    let n_features = rows.first().map_or(0, Vec::len);
    if n == 0 || n_features == 0 {
        return ClusterImportance::from_map(BTreeMap::new());
    }

    let mut global_mean = vec![0.0; n_features];
    for row in rows {
        for (g, v) in global_mean.iter_mut().zip(row) {
            *g += v;
        }
    }
    for g in &mut global_mean {
        *g /= n as f64;
    }
    let mut global_std = vec![0.0; n_features];
    for row in rows {
        for (s, (v, m)) in global_std.iter_mut().zip(row.iter().zip(&global_mean)) {
            *s += (v - m) * (v - m);
        }
    }
    for s in &mut global_std {
        *s = (*s / n as f64).sqrt();
    }

    let mut members: BTreeMap<i64, Vec<&Vec<f64>>> = BTreeMap::new();
    for (row, &label) in rows.iter().zip(labels) {
        members.entry(label).or_default().push(row);
    }

    let map = members
        .into_iter()
        .map(|(cluster, rows)| {
            let m = rows.len() as f64;
            let mut raw = vec![0.0; n_features];
            for j in 0..n_features {
                let cluster_mean: f64 = rows.iter().map(|r| r[j]).sum::<f64>() / m;
                raw[j] = (cluster_mean - global_mean[j]).abs() / (global_std[j] + EPSILON);
            }
            let total: f64 = raw.iter().sum();
            let normalized = if total < 1e-12 {
                vec![1.0 / n_features as f64; n_features]
            } else {
                raw.iter().map(|v| v / total).collect()
            };
            (cluster, normalized)
        })
        .collect();

    ClusterImportance::from_map(map)
}
