//! Shared benchmark fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zscore_core::attest::ZScoreRecord;

/// Gaussian-ish blobs: `n` rows around `k` well-separated centers.
pub fn blob_matrix(n: usize, k: usize, dims: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..dims).map(|_| rng.random_range(-8.0..8.0)).collect())
        .collect();
    (0..n)
        .map(|i| {
            centers[i % k]
                .iter()
                .map(|&c| c + rng.random_range(-0.4..0.4))
                .collect()
        })
        .collect()
}

pub fn score_records(n: usize) -> Vec<ZScoreRecord> {
    (0..n)
        .map(|i| ZScoreRecord {
            wallet: format!("0x{i:06x}"),
            zscore: 1 + (i % 900) as u16,
            epoch: 1,
            cluster_id: (i % 9) as u32,
        })
        .collect()
}
