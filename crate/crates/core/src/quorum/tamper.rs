//! Monte-Carlo quantification of the sampling scheme's tamper detection.

use super::{quorum_threshold, ValidatorBehavior, ValidatorSpec};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct TamperReport {
    pub n_records: usize,
    pub tampered_fraction: f64,
    pub trials: usize,
    /// Trials in which at least one record was actually corrupted; rates
    /// below are conditioned on these.
    pub effective_trials: usize,
    /// Fraction of (trial, honest validator) pairs where the sample hit a
    /// corrupted record.
    pub per_validator_detection: f64,
    /// Fraction of trials where at least a quorum of validators detected.
    pub quorum_detection: f64,
    /// Closed-form per-validator bound 1 − (1 − p)^sample_size, using the
    /// honest validators' common sample size.
    pub analytic_per_validator: f64,
    pub sample_size: usize,
    pub quorum: usize,
}

/// Estimate detection probabilities when each record is independently
/// corrupted with probability `tampered_fraction` and honest validators
/// sample without replacement.
///
/// Per-record independence makes the closed-form bound exact for a sample
/// of s distinct records: P(hit) = 1 − (1 − p)^s. Trials where corruption
/// happened to touch nothing are skipped on both sides of the ratio, so a
/// full-sampling validator reports detection 1 for any realized tampering.
pub fn detect_tamper(
    n_records: usize,
    validators: &[ValidatorSpec],
    tampered_fraction: f64,
    trials: usize,
    seed: u64,
) -> TamperReport {
    let honest: Vec<&ValidatorSpec> = validators
        .iter()
        .filter(|v| v.behavior == ValidatorBehavior::Honest)
        .collect();
    let sample_size = honest
        .first()
        .map(|v| ((v.sample_fraction * n_records as f64).ceil() as usize).clamp(1, n_records))
        .unwrap_or(0);
    let quorum = quorum_threshold(validators.len());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut effective_trials = 0usize;
    let mut validator_hits = 0usize;
    let mut quorum_hits = 0usize;

    for _ in 0..trials {
        let tampered: Vec<bool> = (0..n_records)
            .map(|_| rng.random::<f64>() < tampered_fraction)
            .collect();
        if !tampered.iter().any(|&t| t) {
            continue;
        }
        effective_trials += 1;

        let mut detectors = 0usize;
        for validator in &honest {
            let count = ((validator.sample_fraction * n_records as f64).ceil() as usize)
                .clamp(1, n_records);
            let mut indices: Vec<usize> = (0..n_records).collect();
            indices.shuffle(&mut rng);
            let hit = indices[..count].iter().any(|&i| tampered[i]);
            if hit {
                validator_hits += 1;
                detectors += 1;
            }
        }
        if detectors >= quorum {
            quorum_hits += 1;
        }
    }

    let per_validator_detection = if effective_trials == 0 || honest.is_empty() {
        0.0
    } else {
        validator_hits as f64 / (effective_trials * honest.len()) as f64
    };
    let quorum_detection = if effective_trials == 0 {
        0.0
    } else {
        quorum_hits as f64 / effective_trials as f64
    };

    TamperReport {
        n_records,
        tampered_fraction,
        trials,
        effective_trials,
        per_validator_detection,
        quorum_detection,
        analytic_per_validator: 1.0 - (1.0 - tampered_fraction).powi(sample_size as i32),
        sample_size,
        quorum,
    }
}
