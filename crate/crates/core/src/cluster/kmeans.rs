//! Lloyd's algorithm with k-means++ seeding.

use super::{
    squared_euclidean, AlgorithmParams, ClusterAlgorithm, ClusterError, ClusteringResult,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MAX_ITERATIONS: usize = 300;
const SHIFT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub labels: Vec<i64>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
}

/// Cluster into k groups and score the run.
pub fn kmeans(data: &[Vec<f64>], k: usize, seed: u64) -> Result<ClusteringResult, ClusterError> {
    let fit = kmeans_fit(data, k, seed)?;
    Ok(ClusteringResult::assemble(
        ClusterAlgorithm::KMeans,
        AlgorithmParams::KMeans { k },
        fit.labels,
        data,
    ))
}

/// The raw fit: k-means++ initialization, Lloyd iterations until the total
/// centroid shift drops below 1e-6 or 300 iterations pass. Deterministic
/// given the seed.
pub fn kmeans_fit(data: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansFit, ClusterError> {
    if data.is_empty() {
        return Err(ClusterError::EmptyData);
    }
    if k == 0 {
        return Err(ClusterError::KZero);
    }
    if k > data.len() {
        return Err(ClusterError::KTooLarge { k, rows: data.len() });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(data, k, &mut rng);
    let mut labels = vec![0i64; data.len()];
    let mut iterations = 0;

    for iter in 0..MAX_ITERATIONS {
        iterations = iter + 1;
        assign(data, &centroids, &mut labels);
        let next = update_centroids(data, &labels, &centroids);
        let shift: f64 = centroids
            .iter()
            .zip(&next)
            .map(|(old, new)| squared_euclidean(old, new).sqrt())
            .sum();
        centroids = next;
        if shift < SHIFT_TOLERANCE {
            break;
        }
    }
    assign(data, &centroids, &mut labels);

    let inertia = data
        .iter()
        .zip(&labels)
        .map(|(row, &label)| squared_euclidean(row, &centroids[label as usize]))
        .sum();

    Ok(KMeansFit {
        labels,
        centroids,
        inertia,
        iterations,
    })
}

fn plus_plus_init(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(data[rng.random_range(0..n)].clone());

    let mut min_sq = vec![f64::INFINITY; n];
    while centroids.len() < k {
        let newest = centroids.last().expect("nonempty");
        for (i, row) in data.iter().enumerate() {
            min_sq[i] = min_sq[i].min(squared_euclidean(row, newest));
        }
        let total: f64 = min_sq.iter().sum();
        let choice = if total > 0.0 {
            // Sample proportional to squared distance from chosen centroids.
            let mut target = rng.random::<f64>() * total;
            let mut picked = n - 1;
            for (i, &d) in min_sq.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    picked = i;
                    break;
                }
            }
            picked
        } else {
            // All remaining points coincide with a centroid; take the first
            // index not yet used so k distinct slots still fill up.
            (0..n)
                .find(|&i| !centroids.iter().any(|c| c == &data[i]))
                .unwrap_or(rng.random_range(0..n))
        };
        centroids.push(data[choice].clone());
    }
    centroids
}

fn assign(data: &[Vec<f64>], centroids: &[Vec<f64>], labels: &mut [i64]) {
    for (i, row) in data.iter().enumerate() {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (c, centroid) in centroids.iter().enumerate() {
            let d = squared_euclidean(row, centroid);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        labels[i] = best as i64;
    }
}

fn update_centroids(data: &[Vec<f64>], labels: &[i64], previous: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = previous.len();
    let dim = data[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (row, &label) in data.iter().zip(labels) {
        counts[label as usize] += 1;
        for (s, v) in sums[label as usize].iter_mut().zip(row) {
            *s += v;
        }
    }
    sums.iter_mut()
        .zip(&counts)
        .enumerate()
        .map(|(c, (sum, &count))| {
            if count == 0 {
                // Empty cluster: keep its previous centroid.
                previous[c].clone()
            } else {
                sum.iter().map(|v| v / count as f64).collect()
            }
        })
        .collect()
}
