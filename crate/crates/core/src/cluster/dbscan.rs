//! Density-based clustering.

use super::{
    euclidean, AlgorithmParams, ClusterAlgorithm, ClusterError, ClusteringResult, NOISE,
};

/// DBSCAN with deterministic labeling. Conventions, shared with the test
/// oracle so label equality is well-defined:
///
/// - a point is core when its eps-neighborhood (itself included) holds at
///   least `min_samples` points;
/// - clusters are the density-connected components of the core points;
/// - a non-core point within eps of a core point joins the cluster of its
///   minimum-index core neighbor; everything else is noise (label −1);
/// - components are numbered 0.. by their smallest core index.
///
/// An all-noise outcome carries the −1 silhouette sentinel and −∞
/// objective so searches rank it last.
pub fn dbscan(
    data: &[Vec<f64>],
    eps: f64,
    min_samples: usize,
) -> Result<ClusteringResult, ClusterError> {
    if data.is_empty() {
        return Err(ClusterError::EmptyData);
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(ClusterError::BadEps(eps));
    }
    if min_samples == 0 {
        return Err(ClusterError::BadMinSamples);
    }

    let n = data.len();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| euclidean(&data[i], &data[j]) <= eps)
                .collect()
        })
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|ns| ns.len() >= min_samples).collect();

    // Union core points within eps of each other.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        if !core[i] {
            continue;
        }
        for &j in &neighbors[i] {
            if core[j] {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                let (keep, drop) = if ri < rj { (ri, rj) } else { (rj, ri) };
                parent[drop] = keep;
            }
        }
    }

    // Number components by smallest core index.
    let mut roots: Vec<usize> = (0..n)
        .filter(|&i| core[i])
        .map(|i| find(&mut parent, i))
        .collect();
    roots.sort_unstable();
    roots.dedup();

    let mut labels = vec![NOISE; n];
    for i in 0..n {
        if core[i] {
            let root = find(&mut parent, i);
            labels[i] = roots.binary_search(&root).expect("core root") as i64;
        }
    }
    for i in 0..n {
        if core[i] || labels[i] != NOISE {
            continue;
        }
        if let Some(&anchor) = neighbors[i].iter().find(|&&j| core[j]) {
            labels[i] = labels[anchor];
        }
    }

    Ok(ClusteringResult::assemble(
        ClusterAlgorithm::Dbscan,
        AlgorithmParams::Dbscan { eps, min_samples },
        labels,
        data,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute-force oracle: repeated sweeps propagate density-reachability
    /// from each unvisited core point, in ascending index order, using the
    /// same border and numbering conventions as the implementation.
    fn dbscan_naive(data: &[Vec<f64>], eps: f64, min_samples: usize) -> Vec<i64> {
        let n = data.len();
        let within = |i: usize, j: usize| euclidean(&data[i], &data[j]) <= eps;
        let core: Vec<bool> = (0..n)
            .map(|i| (0..n).filter(|&j| within(i, j)).count() >= min_samples)
            .collect();

        let mut labels = vec![NOISE; n];
        let mut next = 0i64;
        for seed in 0..n {
            if !core[seed] || labels[seed] != NOISE {
                continue;
            }
            // Flood fill over core-to-core reachability.
            let mut stack = vec![seed];
            labels[seed] = next;
            while let Some(p) = stack.pop() {
                for q in 0..n {
                    if core[q] && labels[q] == NOISE && within(p, q) {
                        labels[q] = next;
                        stack.push(q);
                    }
                }
            }
            next += 1;
        }
        for i in 0..n {
            if core[i] || labels[i] != NOISE {
                continue;
            }
            if let Some(anchor) = (0..n).find(|&j| core[j] && within(i, j)) {
                labels[i] = labels[anchor];
            }
        }
        labels
    }

    #[test]
    fn two_dense_blobs_no_noise() {
        let mut data = Vec::new();
        for i in 0..12 {
            data.push(vec![(i % 4) as f64 * 0.1, (i / 4) as f64 * 0.1]);
            data.push(vec![8.0 + (i % 4) as f64 * 0.1, (i / 4) as f64 * 0.1]);
        }
        let result = dbscan(&data, 0.5, 3).unwrap();
        assert_eq!(result.n_clusters, 2);
        assert!(result.labels.iter().all(|&l| l != NOISE));
    }

    #[test]
    fn sparse_scatter_with_tiny_eps_is_all_noise() {
        let data: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 10.0]).collect();
        let result = dbscan(&data, 1e-3, 2).unwrap();
        assert!(result.labels.iter().all(|&l| l == NOISE));
        assert_eq!(result.n_clusters, 0);
        assert_eq!(result.silhouette, -1.0);
        assert_eq!(result.objective, f64::NEG_INFINITY);
    }

    #[test]
    fn matches_naive_oracle_on_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for case in 0..8 {
            let n = 50 + case * 20;
            let data: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)])
                .collect();
            let eps = rng.random_range(0.4..1.5);
            let min_samples = rng.random_range(2..6);
            let fast = dbscan(&data, eps, min_samples).unwrap();
            let naive = dbscan_naive(&data, eps, min_samples);
            assert_eq!(fast.labels, naive, "case {case} eps {eps} min {min_samples}");
        }
    }

    #[test]
    fn parameter_validation() {
        let data = vec![vec![0.0]];
        assert!(matches!(dbscan(&data, 0.0, 1), Err(ClusterError::BadEps(_))));
        assert!(matches!(dbscan(&data, 1.0, 0), Err(ClusterError::BadMinSamples)));
    }
}
