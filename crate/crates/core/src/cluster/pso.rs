//! Particle-swarm optimization and the clustering hyperparameter search.

use super::{
    agglomerative, dbscan, kmeans, ClusterAlgorithm, ClusterError, ClusteringResult,
    DEFAULT_SILHOUETTE_GATE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Global-best PSO configuration. Coefficient defaults are the standard
/// constriction values; velocities are clamped to the bound width and
/// positions clipped to the bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoConfig {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Per-dimension [lower, upper].
    pub bounds: Vec<[f64; 2]>,
    pub seed: u64,
}

impl PsoConfig {
    pub fn new(bounds: Vec<[f64; 2]>, particles: usize, seed: u64) -> Self {
        PsoConfig {
            particles,
            iterations: 60,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            bounds,
            seed,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PsoError {
    #[error("need at least 2 particles, got {0}")]
    TooFewParticles(usize),
    #[error("dimension {dim} has lower bound {lower} >= upper bound {upper}")]
    InvalidBounds { dim: usize, lower: f64, upper: f64 },
}

#[derive(Debug, Clone)]
pub struct PsoRun {
    pub best_position: Vec<f64>,
    pub best_value: f64,
    pub evaluations: usize,
    /// Global best value after each iteration.
    pub history: Vec<f64>,
}

/// Minimize `f` over the configured box. Deterministic given the seed.
pub fn minimize<F: FnMut(&[f64]) -> f64>(mut f: F, config: &PsoConfig) -> Result<PsoRun, PsoError> {
    if config.particles < 2 {
        return Err(PsoError::TooFewParticles(config.particles));
    }
    for (dim, b) in config.bounds.iter().enumerate() {
        if b[0].is_nan() || b[1].is_nan() || b[0] >= b[1] {
            return Err(PsoError::InvalidBounds {
                dim,
                lower: b[0],
                upper: b[1],
            });
        }
    }

    let dims = config.bounds.len();
    let widths: Vec<f64> = config.bounds.iter().map(|b| b[1] - b[0]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut positions: Vec<Vec<f64>> = (0..config.particles)
        .map(|_| {
            (0..dims)
                .map(|d| config.bounds[d][0] + rng.random::<f64>() * widths[d])
                .collect()
        })
        .collect();
    let mut velocities: Vec<Vec<f64>> = (0..config.particles)
        .map(|_| {
            (0..dims)
                .map(|d| (rng.random::<f64>() * 2.0 - 1.0) * widths[d] * 0.1)
                .collect()
        })
        .collect();

    let mut evaluations = 0;
    let mut personal_best = positions.clone();
    let mut personal_value: Vec<f64> = positions
        .iter()
        .map(|p| {
            evaluations += 1;
            f(p)
        })
        .collect();

    let mut best_index = argmin(&personal_value);
    let mut best_position = personal_best[best_index].clone();
    let mut best_value = personal_value[best_index];
    let mut history = Vec::with_capacity(config.iterations);

    for _ in 0..config.iterations {
        for i in 0..config.particles {
            for d in 0..dims {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let v = config.inertia * velocities[i][d]
                    + config.cognitive * r1 * (personal_best[i][d] - positions[i][d])
                    + config.social * r2 * (best_position[d] - positions[i][d]);
                velocities[i][d] = v.clamp(-widths[d], widths[d]);
                positions[i][d] = (positions[i][d] + velocities[i][d])
                    .clamp(config.bounds[d][0], config.bounds[d][1]);
            }
            evaluations += 1;
            let value = f(&positions[i]);
            if value < personal_value[i] {
                personal_value[i] = value;
                personal_best[i] = positions[i].clone();
            }
        }
        best_index = argmin(&personal_value);
        if personal_value[best_index] < best_value {
            best_value = personal_value[best_index];
            best_position = personal_best[best_index].clone();
        }
        history.push(best_value);
    }

    Ok(PsoRun {
        best_position,
        best_value,
        evaluations,
        history,
    })
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// What the clustering search explores: the k range for the partitional
/// algorithms, or the (eps, min_samples) box for DBSCAN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SearchSpace {
    KRange { lower: usize, upper: usize },
    DbscanBox {
        eps: [f64; 2],
        min_samples: [usize; 2],
    },
}

/// Search outcome: the best gated run when one cleared the silhouette gate,
/// otherwise the best found with `gate_passed = false` so callers can see
/// what the search had to settle for.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: ClusteringResult,
    pub gate: f64,
    pub gate_passed: bool,
    pub evaluations: usize,
}

/// PSO over clustering hyperparameters, maximizing the objective by
/// minimizing its negative. Integer dimensions stay continuous in the
/// particle dynamics and round at evaluation time; evaluations are
/// memoized on the rounded parameters.
pub fn pso_search(
    data: &[Vec<f64>],
    algorithm: ClusterAlgorithm,
    space: &SearchSpace,
    pso: &PsoConfig,
    gate: Option<f64>,
) -> Result<SearchOutcome, ClusterError> {
    let gate = gate.unwrap_or(DEFAULT_SILHOUETTE_GATE);
    if data.is_empty() {
        return Err(ClusterError::EmptyData);
    }
    let wants_box = algorithm == ClusterAlgorithm::Dbscan;
    if wants_box != matches!(space, SearchSpace::DbscanBox { .. }) {
        return Err(ClusterError::SpaceMismatch);
    }
    let bounds = match space {
        SearchSpace::KRange { lower, upper } => {
            if *lower > data.len() {
                return Err(ClusterError::KTooLarge {
                    k: *lower,
                    rows: data.len(),
                });
            }
            // Half-open padding keeps rounding inside the range.
            vec![[*lower as f64 - 0.49, *upper as f64 + 0.49]]
        }
        SearchSpace::DbscanBox { eps, min_samples } => vec![
            [eps[0], eps[1]],
            [min_samples[0] as f64 - 0.49, min_samples[1] as f64 + 0.49],
        ],
    };
    let config = PsoConfig {
        bounds,
        ..pso.clone()
    };

    // Memoized evaluations, keyed by rounded parameters (f64 bits for eps).
    let mut cache: BTreeMap<(u64, u64), ClusteringResult> = BTreeMap::new();
    let run = {
        let cache = &mut cache;
        let evaluate = |position: &[f64]| -> f64 {
            let key = match space {
                SearchSpace::KRange { lower, upper } => {
                    let hi = (*upper).min(data.len());
                    let lo = (*lower).max(1).min(hi);
                    ((position[0].round() as usize).clamp(lo, hi) as u64, u64::MAX)
                }
                SearchSpace::DbscanBox { min_samples, .. } => {
                    let samples = (position[1].round() as usize)
                        .clamp(min_samples[0].max(1), min_samples[1].max(1));
                    (position[0].to_bits(), samples as u64)
                }
            };
            let result = cache.entry(key).or_insert_with(|| match space {
                SearchSpace::KRange { .. } => {
                    let k = key.0 as usize;
                    match algorithm {
                        ClusterAlgorithm::KMeans => kmeans(data, k, pso.seed),
                        _ => agglomerative(data, k),
                    }
                    .expect("parameters clamped to valid ranges")
                }
                SearchSpace::DbscanBox { .. } => dbscan(data, position[0], key.1 as usize)
                    .expect("parameters clamped to valid ranges"),
            });
            -result.objective
        };
        minimize(evaluate, &config).map_err(|e| match e {
            // Bounds derive from the search space; surface as cluster errors.
            PsoError::TooFewParticles(_) | PsoError::InvalidBounds { .. } => {
                ClusterError::EmptyData
            }
        })?
    };

    let mut best_any: Option<ClusteringResult> = None;
    let mut best_gated: Option<ClusteringResult> = None;
    for result in cache.into_values() {
        if best_any.as_ref().is_none_or(|b| result.objective > b.objective) {
            best_any = Some(result.clone());
        }
        if result.silhouette > gate
            && best_gated.as_ref().is_none_or(|b| result.objective > b.objective)
        {
            best_gated = Some(result);
        }
    }

    let (best, gate_passed) = match (best_gated, best_any) {
        (Some(g), _) => (g, true),
        (None, Some(a)) => (a, false),
        (None, None) => return Err(ClusterError::EmptyData),
    };
    Ok(SearchOutcome {
        best,
        gate,
        gate_passed,
        evaluations: run.evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn sphere_minimum_is_found() {
        let config = PsoConfig {
            iterations: 200,
            ..PsoConfig::new(vec![[-5.0, 5.0]; 4], 30, 42)
        };
        let run = minimize(|x| x.iter().map(|v| v * v).sum(), &config).unwrap();
        assert!(run.best_value < 1e-3, "best {}", run.best_value);
        assert!(run.history.len() <= 200);
    }

    #[test]
    fn shifted_sphere_converges_to_its_center() {
        let config = PsoConfig {
            iterations: 200,
            ..PsoConfig::new(vec![[-10.0, 10.0]; 3], 30, 7)
        };
        let run = minimize(
            |x| x.iter().map(|v| (v - 2.5) * (v - 2.5)).sum(),
            &config,
        )
        .unwrap();
        for v in &run.best_position {
            assert!((v - 2.5).abs() < 0.05, "position {v}");
        }
    }

    #[test]
    fn evaluated_positions_respect_bounds() {
        let config = PsoConfig::new(vec![[10.0, 50.0]], 30, 3);
        let mut violations = 0usize;
        minimize(
            |x| {
                if !(10.0..=50.0).contains(&x[0]) {
                    violations += 1;
                }
                (x[0] - 31.0).powi(2)
            },
            &config,
        )
        .unwrap();
        assert_eq!(violations, 0);
    }

    #[test]
    fn same_seed_same_run() {
        let config = PsoConfig::new(vec![[-1.0, 1.0]; 2], 12, 9);
        let f = |x: &[f64]| x[0].powi(2) + (x[1] - 0.3).powi(2);
        let a = minimize(f, &config).unwrap();
        let b = minimize(f, &config).unwrap();
        assert_eq!(a.best_position, b.best_position);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn invalid_config_is_rejected() {
        assert!(matches!(
            minimize(|_| 0.0, &PsoConfig::new(vec![[0.0, 1.0]], 1, 0)),
            Err(PsoError::TooFewParticles(1))
        ));
        assert!(matches!(
            minimize(|_| 0.0, &PsoConfig::new(vec![[2.0, 2.0]], 4, 0)),
            Err(PsoError::InvalidBounds { dim: 0, .. })
        ));
    }

    fn three_blobs(seed: u64) -> (Vec<Vec<f64>>, Vec<i64>) {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]];
        let mut data = Vec::new();
        let mut truth = Vec::new();
        for i in 0..240 {
            let c = i % 3;
            truth.push(c as i64);
            data.push(vec![
                centers[c][0] + rng.random_range(-0.2..0.2),
                centers[c][1] + rng.random_range(-0.2..0.2),
            ]);
        }
        (data, truth)
    }

    #[test]
    fn search_finds_the_true_k() {
        let (data, truth) = three_blobs(4);
        let outcome = pso_search(
            &data,
            ClusterAlgorithm::KMeans,
            &SearchSpace::KRange { lower: 2, upper: 8 },
            &PsoConfig::new(vec![], 10, 11),
            None,
        )
        .unwrap();
        assert!(outcome.gate_passed);
        assert_eq!(outcome.best.n_clusters, 3);
        let ari = super::super::adjusted_rand_index(&outcome.best.labels, &truth);
        assert!(ari > 0.99, "ari {ari}");
    }

    #[test]
    fn below_gate_report_still_carries_best_found() {
        // Structureless uniform data cannot clear the gate.
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data: Vec<Vec<f64>> = (0..150)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let outcome = pso_search(
            &data,
            ClusterAlgorithm::KMeans,
            &SearchSpace::KRange { lower: 2, upper: 6 },
            &PsoConfig::new(vec![], 8, 5),
            None,
        )
        .unwrap();
        assert!(!outcome.gate_passed);
        assert!(outcome.best.silhouette <= outcome.gate);
        assert!(outcome.best.objective.is_finite());
    }
}
