//! Ward-linkage agglomerative clustering.

use super::{
    squared_euclidean, AlgorithmParams, ClusterAlgorithm, ClusterError, ClusteringResult,
};

/// One merge step: the two active clusters joined and the Ward cost
/// (increase in total within-cluster sum of squares).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WardMerge {
    pub first: usize,
    pub second: usize,
    pub cost: f64,
}

/// Cut the Ward dendrogram at k clusters. Deterministic: cost ties break
/// toward the lexicographically smallest active-cluster pair.
pub fn agglomerative(data: &[Vec<f64>], k: usize) -> Result<ClusteringResult, ClusterError> {
    if data.is_empty() {
        return Err(ClusterError::EmptyData);
    }
    if k == 0 {
        return Err(ClusterError::KZero);
    }
    if k > data.len() {
        return Err(ClusterError::KTooLarge { k, rows: data.len() });
    }
    let merges = ward_merge_sequence(data);
    let labels = cut_tree(data.len(), &merges, k);
    Ok(ClusteringResult::assemble(
        ClusterAlgorithm::Agglomerative,
        AlgorithmParams::Agglomerative { k },
        labels,
        data,
    ))
}

/// Full merge sequence via Lance-Williams updates on the Ward distance
/// `n_a·n_b/(n_a+n_b)·‖μ_a − μ_b‖²`, with a cached nearest neighbor per
/// active cluster. Building once lets the search cut at any k for free.
pub fn ward_merge_sequence(data: &[Vec<f64>]) -> Vec<WardMerge> {
    let n = data.len();
    if n < 2 {
        return Vec::new();
    }

    // Condensed distance store: dist[i][j - i - 1] for j > i over original
    // slot indices; merged clusters reuse the smaller slot.
    let mut dist = vec![vec![0.0f64; 0]; n];
    for i in 0..n {
        dist[i] = ((i + 1)..n)
            .map(|j| 0.5 * squared_euclidean(&data[i], &data[j]))
            .collect();
    }
    let at = |dist: &Vec<Vec<f64>>, a: usize, b: usize| -> f64 {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        dist[lo][hi - lo - 1]
    };

    let mut active: Vec<bool> = vec![true; n];
    let mut sizes: Vec<usize> = vec![1; n];
    let mut merges = Vec::with_capacity(n - 1);

    // Nearest active neighbor (and cost) per active slot, rebuilt lazily.
    let mut nearest: Vec<Option<(usize, f64)>> = vec![None; n];
    let rebuild = |dist: &Vec<Vec<f64>>, active: &[bool], slot: usize| -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        #[allow(clippy::needless_range_loop)]
        for other in 0..active.len() {
            if other == slot || !active[other] {
                continue;
            }
            let d = at(dist, slot, other);
            best = match best {
                Some((_, cost)) if cost <= d => best,
                _ => Some((other, d)),
            };
        }
        best
    };
    #[allow(clippy::needless_range_loop)]
    for slot in 0..n {
        nearest[slot] = rebuild(&dist, &active, slot);
    }

    for _ in 0..(n - 1) {
        // Global minimum over cached neighbors; ties to the smallest pair.
        let mut pick: Option<(usize, usize, f64)> = None;
        for slot in 0..n {
            if !active[slot] {
                continue;
            }
            if let Some((other, cost)) = nearest[slot] {
                let (lo, hi) = if slot < other { (slot, other) } else { (other, slot) };
                pick = match pick {
                    Some((plo, phi, pcost))
                        if pcost < cost || (pcost == cost && (plo, phi) <= (lo, hi)) =>
                    {
                        Some((plo, phi, pcost))
                    }
                    _ => Some((lo, hi, cost)),
                };
            }
        }
        let (a, b, cost) = pick.expect("at least two active clusters");
        merges.push(WardMerge { first: a, second: b, cost });

        // Lance-Williams Ward update into slot a.
        let (na, nb) = (sizes[a] as f64, sizes[b] as f64);
        for other in 0..n {
            if !active[other] || other == a || other == b {
                continue;
            }
            let nk = sizes[other] as f64;
            let updated = ((na + nk) * at(&dist, a, other) + (nb + nk) * at(&dist, b, other)
                - nk * cost)
                / (na + nb + nk);
            let (lo, hi) = if a < other { (a, other) } else { (other, a) };
            dist[lo][hi - lo - 1] = updated;
        }
        active[b] = false;
        sizes[a] += sizes[b];
        nearest[b] = None;

        // Refresh caches that referenced either merged slot, plus slot a.
        for slot in 0..n {
            if !active[slot] {
                continue;
            }
            let stale = slot == a
                || matches!(nearest[slot], Some((other, _)) if other == a || other == b);
            if stale {
                nearest[slot] = rebuild(&dist, &active, slot);
            } else if let Some((_, cached)) = nearest[slot] {
                // Distance to the merged cluster may have shrunk below the
                // cached nearest.
                let d = at(&dist, slot, a);
                if d < cached || (d == cached && a < nearest[slot].unwrap().0) {
                    nearest[slot] = Some((a, d));
                }
            }
        }
    }
    merges
}

/// Apply the first n−k merges and label by cluster, ordered by smallest
/// member index.
fn cut_tree(n: usize, merges: &[WardMerge], k: usize) -> Vec<i64> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for merge in merges.iter().take(n - k) {
        let (ra, rb) = (find(&mut parent, merge.first), find(&mut parent, merge.second));
        let (keep, drop) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[drop] = keep;
    }

    // Roots in ascending order become cluster ids 0..k.
    let mut roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    let mut ordered = roots.clone();
    ordered.sort_unstable();
    ordered.dedup();
    roots
        .iter_mut()
        .map(|r| ordered.binary_search(r).expect("root present") as i64)
        .collect()
}
