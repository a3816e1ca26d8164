//! Dominant-cluster splitting.

use super::{
    pso_search, ClusterError, ClusteringResult, PsoConfig, SearchOutcome,
    SearchSpace, NOISE,
};
use serde::Serialize;

/// How the sub-clustering of a dominant cluster went.
#[derive(Debug, Clone, Serialize)]
pub struct SubSplitReport {
    pub parent_cluster: i64,
    pub parent_share: f64,
    pub silhouette: f64,
    pub n_clusters: usize,
    pub objective: f64,
    pub gate_passed: bool,
}

#[derive(Debug, Clone)]
pub struct SplitOutcome {
    /// Final labeling over all rows, rescored on the full dataset;
    /// unchanged input when no cluster crossed the dominance threshold.
    pub result: ClusteringResult,
    pub sub: Option<SubSplitReport>,
}

/// If one cluster holds more than `dominance_threshold` of the rows, re-run
/// the search on that cluster's rows alone and splice the sub-labels in as
/// fresh ids. Splits at most once; ids come out contiguous from 0.
pub fn split_dominant(
    data: &[Vec<f64>],
    result: &ClusteringResult,
    dominance_threshold: f64,
    space: &SearchSpace,
    pso: &PsoConfig,
    gate: Option<f64>,
) -> Result<SplitOutcome, ClusterError> {
    let sizes = result.cluster_sizes();
    let total: usize = sizes.values().sum();
    let dominant = sizes
        .iter()
        .find(|(_, &size)| size as f64 > dominance_threshold * total as f64)
        .map(|(&id, &size)| (id, size));

    let Some((dominant_id, dominant_size)) = dominant else {
        return Ok(SplitOutcome {
            result: result.clone(),
            sub: None,
        });
    };

    let member_rows: Vec<usize> = result
        .labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == dominant_id)
        .map(|(i, _)| i)
        .collect();
    let sub_data: Vec<Vec<f64>> = member_rows.iter().map(|&i| data[i].clone()).collect();

    // Clamp the k range to what the subset can hold.
    let sub_space = match space {
        SearchSpace::KRange { lower, upper } => SearchSpace::KRange {
            lower: (*lower).min(sub_data.len()),
            upper: (*upper).min(sub_data.len()),
        },
        other => other.clone(),
    };
    let SearchOutcome {
        best: sub_result,
        gate_passed,
        ..
    } = pso_search(&sub_data, result.algorithm, &sub_space, pso, gate)?;

    // Splice: sub-cluster j of parent id takes a fresh id above the
    // existing range, then the whole labeling compacts to 0..m.
    let offset = result.labels.iter().copied().max().unwrap_or(0) + 1;
    let mut labels = result.labels.clone();
    for (&row, &sub_label) in member_rows.iter().zip(&sub_result.labels) {
        labels[row] = if sub_label == NOISE {
            NOISE
        } else {
            offset + sub_label
        };
    }
    compact_labels(&mut labels);

    let rescored = ClusteringResult::assemble(
        result.algorithm,
        result.params,
        labels,
        data,
    );
    Ok(SplitOutcome {
        result: rescored,
        sub: Some(SubSplitReport {
            parent_cluster: dominant_id,
            parent_share: dominant_size as f64 / total as f64,
            silhouette: sub_result.silhouette,
            n_clusters: sub_result.n_clusters,
            objective: sub_result.objective,
            gate_passed,
        }),
    })
}

/// Renumber non-noise labels to 0..m preserving ascending id order.
fn compact_labels(labels: &mut [i64]) {
    let mut ids: Vec<i64> = labels.iter().copied().filter(|&l| l != NOISE).collect();
    ids.sort_unstable();
    ids.dedup();
    for label in labels.iter_mut() {
        if *label != NOISE {
            *label = ids.binary_search(label).expect("id present") as i64;
        }
    }
}
