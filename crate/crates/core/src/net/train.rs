//! Training, the batch-size sweep, and batch scoring.

use super::model::{backward, forward_traced, scale_score, scale_score_continuous, UserGrad};
use super::{
    boundary_loss, coherence_loss, distribution_loss, observed_importance, ClusterImportance,
    NetConfig, NetDims, NetError, NetParams, SWEEP_SIZES,
};
use crate::label::{LabeledDataset, LabeledRow, ScoreInterval, ENTRY_SCORE};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const VALIDATION_FRACTION: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct LossBreakdown {
    /// Unweighted components.
    pub bound: f64,
    pub dist: f64,
    pub coh: f64,
    pub recon: f64,
    /// The weighted objective actually minimized.
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: LossBreakdown,
    pub val: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch with the best validation total.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub batch_size: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
}

impl TrainingReport {
    pub fn best_val_total(&self) -> f64 {
        self.epochs[self.best_epoch - 1].val.total
    }

    pub fn final_val(&self) -> LossBreakdown {
        self.epochs[self.best_epoch - 1].val
    }
}

/// Train on the non-pinned rows with a stratified 70/30 split, early
/// stopping on validation loss, and seeded determinism. Returns the
/// parameters from the best validation epoch.
pub fn train(
    labeled: &LabeledDataset,
    config: &NetConfig,
) -> Result<(NetParams, TrainingReport), NetError> {
    config.validate()?;
    let rows: Vec<&LabeledRow> = labeled.rows.iter().filter(|r| !r.pinned).collect();
    if rows.is_empty() {
        return Err(NetError::NoTrainableRows);
    }
    for row in &rows {
        if row.cluster_id < 0 {
            return Err(NetError::UnknownCluster {
                id: row.cluster_id,
                n_clusters: 0,
            });
        }
        if row.scaled.len() != config.input_dim {
            return Err(NetError::BadConfig(format!(
                "scaled row has {} features, config says {}",
                row.scaled.len(),
                config.input_dim
            )));
        }
    }
    let n_clusters = rows.iter().map(|r| r.cluster_id).max().unwrap_or(0) as usize + 1;
    let dims = NetDims::from_config(config, n_clusters);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Stratified split: every cluster keeps ≥ 1 training row.
    let mut by_cluster: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        by_cluster.entry(row.cluster_id).or_default().push(i);
    }
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    for indices in by_cluster.values_mut() {
        indices.shuffle(&mut rng);
        let n_val = ((indices.len() as f64) * VALIDATION_FRACTION).floor() as usize;
        let n_val = n_val.min(indices.len().saturating_sub(1));
        val_idx.extend_from_slice(&indices[..n_val]);
        train_idx.extend_from_slice(&indices[n_val..]);
    }
    train_idx.sort_unstable();
    val_idx.sort_unstable();

    let train_rows: Vec<&LabeledRow> = train_idx.iter().map(|&i| rows[i]).collect();
    let val_rows: Vec<&LabeledRow> = val_idx.iter().map(|&i| rows[i]).collect();

    let importance = {
        let scaled: Vec<Vec<f64>> = train_rows.iter().map(|r| r.scaled.clone()).collect();
        let clusters: Vec<i64> = train_rows.iter().map(|r| r.cluster_id).collect();
        observed_importance(&scaled, &clusters)
    };

    let mut params = NetParams::init(dims, config.seed);
    let mut adam_m = params.zeros_like();
    let mut adam_v = params.zeros_like();
    let mut step = 0usize;

    let mut report = TrainingReport {
        epochs: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
        batch_size: config.batch_size,
        seed: config.seed,
        n_train: train_rows.len(),
        n_val: val_rows.len(),
    };
    let mut best_params = params.clone();
    let mut best_val = f64::INFINITY;
    let mut epochs_without_improvement = 0usize;

    let mut order: Vec<usize> = (0..train_rows.len()).collect();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut batch_sums = LossBreakdown::default();
        let mut batches = 0usize;

        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&LabeledRow> = chunk.iter().map(|&i| train_rows[i]).collect();
            let mut grads = params.zeros_like();
            let losses = process_batch(&params, &batch, &importance, config, Some(&mut grads))?;

            step += 1;
            let correction1 = 1.0 - ADAM_BETA1.powi(step as i32);
            let correction2 = 1.0 - ADAM_BETA2.powi(step as i32);
            for i in 0..params.values.len() {
                let g = grads[i];
                adam_m[i] = ADAM_BETA1 * adam_m[i] + (1.0 - ADAM_BETA1) * g;
                adam_v[i] = ADAM_BETA2 * adam_v[i] + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = adam_m[i] / correction1;
                let v_hat = adam_v[i] / correction2;
                params.values[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }

            batch_sums.bound += losses.bound;
            batch_sums.dist += losses.dist;
            batch_sums.coh += losses.coh;
            batch_sums.recon += losses.recon;
            batch_sums.total += losses.total;
            batches += 1;
        }

        let train_losses = LossBreakdown {
            bound: batch_sums.bound / batches as f64,
            dist: batch_sums.dist / batches as f64,
            coh: batch_sums.coh / batches as f64,
            recon: batch_sums.recon / batches as f64,
            total: batch_sums.total / batches as f64,
        };
        let val_losses = if val_rows.is_empty() {
            train_losses
        } else {
            process_batch(&params, &val_rows, &importance, config, None)?
        };
        if !val_losses.total.is_finite() || !train_losses.total.is_finite() {
            return Err(NetError::Diverged { epoch });
        }
        report.epochs.push(EpochRecord {
            epoch,
            train: train_losses,
            val: val_losses,
        });

        if val_losses.total < best_val {
            best_val = val_losses.total;
            best_params = params.clone();
            report.best_epoch = epoch;
            epochs_without_improvement = 0;
        } else {
            epochs_without_improvement += 1;
            if epochs_without_improvement >= config.patience {
                report.stopped_early = true;
                break;
            }
        }
    }

    Ok((best_params, report))
}

/// Forward a batch, compute the weighted objective, and (optionally)
/// accumulate parameter gradients.
fn process_batch(
    params: &NetParams,
    batch: &[&LabeledRow],
    importance: &ClusterImportance,
    config: &NetConfig,
    mut grads: Option<&mut [f64]>,
) -> Result<LossBreakdown, NetError> {
    let n = batch.len() as f64;
    let n_features = config.input_dim as f64;

    let mut traces = Vec::with_capacity(batch.len());
    for row in batch {
        traces.push(forward_traced(params, &row.scaled, row.cluster_id, &row.interval)?);
    }

    let scores: Vec<f64> = traces
        .iter()
        .zip(batch)
        .map(|(t, row)| scale_score_continuous(t.output.raw_score, &row.interval))
        .collect();
    let intervals: Vec<ScoreInterval> = batch.iter().map(|r| r.interval).collect();

    let mut scores_by_cluster: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    let mut intervals_by_cluster: BTreeMap<i64, ScoreInterval> = BTreeMap::new();
    for (row, &z) in batch.iter().zip(&scores) {
        scores_by_cluster.entry(row.cluster_id).or_default().push(z);
        intervals_by_cluster.insert(row.cluster_id, row.interval);
    }

    // Unweighted reference components.
    let bound = boundary_loss(&scores, &intervals);
    let dist = distribution_loss(&scores_by_cluster, &intervals_by_cluster, config.target_spread);
    let weight_rows: Vec<Vec<f64>> = traces
        .iter()
        .map(|t| t.output.feature_weights.clone())
        .collect();
    let cluster_ids: Vec<i64> = batch.iter().map(|r| r.cluster_id).collect();
    let coh = coherence_loss(&weight_rows, &cluster_ids, importance);
    let recon: f64 = traces
        .iter()
        .zip(batch)
        .map(|(t, row)| {
            t.reconstruction
                .iter()
                .zip(&row.scaled)
                .map(|(r, x)| (r - x) * (r - x))
                .sum::<f64>()
                / n_features
        })
        .sum::<f64>()
        / n;

    // Weighted objective with per-cluster overrides.
    let mut total = config.recon_weight * recon;
    for (row, &z) in batch.iter().zip(&scores) {
        let w = config.weights_for(row.cluster_id);
        let lower = f64::from(row.interval.lower);
        let upper = f64::from(row.interval.upper);
        let width = f64::from(row.interval.width());
        total += w.bound * ((lower - z).max(0.0) + (z - upper).max(0.0)) / width / n;
    }
    for (trace, row) in traces.iter().zip(batch) {
        let w = config.weights_for(row.cluster_id);
        let target = importance.vector_for(row.cluster_id);
        let mse: f64 = trace
            .output
            .feature_weights
            .iter()
            .zip(target)
            .map(|(a, t)| (a - t) * (a - t))
            .sum::<f64>()
            / n_features;
        total += w.coh * mse / n;
    }
    // Distribution term: first index attaining max/min takes the
    // subgradient.
    let mut dist_pulls: BTreeMap<i64, (usize, usize, f64)> = BTreeMap::new();
    {
        let counted: Vec<i64> = scores_by_cluster
            .iter()
            .filter(|(_, zs)| zs.len() >= 2)
            .map(|(&c, _)| c)
            .collect();
        let n_counted = counted.len() as f64;
        for &cluster in &counted {
            let member_indices: Vec<usize> = batch
                .iter()
                .enumerate()
                .filter(|(_, r)| r.cluster_id == cluster)
                .map(|(i, _)| i)
                .collect();
            let mut arg_max = member_indices[0];
            let mut arg_min = member_indices[0];
            for &i in &member_indices {
                if scores[i] > scores[arg_max] {
                    arg_max = i;
                }
                if scores[i] < scores[arg_min] {
                    arg_min = i;
                }
            }
            let width = f64::from(intervals_by_cluster[&cluster].width());
            let achieved = (scores[arg_max] - scores[arg_min]) / width;
            let hinge = (config.target_spread - achieved).max(0.0);
            let w = config.weights_for(cluster);
            total += w.dist * hinge * hinge / n_counted;
            if hinge > 0.0 {
                // d total / d achieved, for the gradient pass below.
                dist_pulls.insert(cluster, (arg_max, arg_min, -2.0 * w.dist * hinge / n_counted));
            }
        }
    }

    if let Some(grads) = grads.take() {
        for (i, (trace, row)) in traces.iter().zip(batch).enumerate() {
            let w = config.weights_for(row.cluster_id);
            let z = scores[i];
            let lower = f64::from(row.interval.lower);
            let upper = f64::from(row.interval.upper);

            // Boundary: d/ds = w_b · sign / (2n); zero strictly inside.
            let mut d_raw_score = if z < lower {
                -w.bound / (2.0 * n)
            } else if z > upper {
                w.bound / (2.0 * n)
            } else {
                0.0
            };

            // Distribution: the batch extremes of each counted cluster.
            if let Some(&(arg_max, arg_min, d_achieved)) = dist_pulls.get(&row.cluster_id) {
                // dz/ds = width/2 and d achieved/dz = ±1/width.
                if i == arg_max {
                    d_raw_score += d_achieved / 2.0;
                }
                if i == arg_min {
                    d_raw_score -= d_achieved / 2.0;
                }
            }

            let target = importance.vector_for(row.cluster_id);
            let d_weights: Vec<f64> = trace
                .output
                .feature_weights
                .iter()
                .zip(target)
                .map(|(a, t)| 2.0 * w.coh * (a - t) / (n * n_features))
                .collect();

            let d_reconstruction: Vec<f64> = if config.recon_weight > 0.0 {
                trace
                    .reconstruction
                    .iter()
                    .zip(&row.scaled)
                    .map(|(r, x)| 2.0 * config.recon_weight * (r - x) / (n * n_features))
                    .collect()
            } else {
                Vec::new()
            };

            let upstream = UserGrad {
                d_raw_score,
                d_weights,
                d_reconstruction,
            };
            backward(params, &row.scaled, trace, &upstream, grads);
        }
    }

    Ok(LossBreakdown {
        bound,
        dist,
        coh,
        recon,
        total,
    })
}

/// Public wrapper so oracles can evaluate the exact training objective
/// (and its gradient) on a fixed batch.
pub fn batch_objective(
    params: &NetParams,
    labeled: &LabeledDataset,
    config: &NetConfig,
    grads: Option<&mut [f64]>,
) -> Result<LossBreakdown, NetError> {
    let rows: Vec<&LabeledRow> = labeled.rows.iter().filter(|r| !r.pinned).collect();
    let importance = {
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.scaled.clone()).collect();
        let clusters: Vec<i64> = rows.iter().map(|r| r.cluster_id).collect();
        observed_importance(&scaled, &clusters)
    };
    process_batch(params, &rows, &importance, config, grads)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub batch_size: usize,
    pub best_val_total: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    pub chosen: usize,
}

/// Train once per candidate batch size and keep the size with the lowest
/// best validation loss; exact ties go to the larger size (throughput).
pub fn batch_size_sweep(
    labeled: &LabeledDataset,
    config: &NetConfig,
    sizes: &[usize],
) -> Result<SweepReport, NetError> {
    let mut unique = Vec::new();
    for &size in sizes {
        if !SWEEP_SIZES.contains(&size) {
            return Err(NetError::BadSweepSize(size));
        }
        if !unique.contains(&size) {
            unique.push(size);
        }
    }
    if unique.is_empty() {
        return Err(NetError::BadConfig("empty sweep".into()));
    }

    let mut entries = Vec::with_capacity(unique.len());
    for &batch_size in &unique {
        let run_config = NetConfig {
            batch_size,
            ..config.clone()
        };
        let (_, report) = train(labeled, &run_config)?;
        entries.push(SweepEntry {
            batch_size,
            best_val_total: report.best_val_total(),
            best_epoch: report.best_epoch,
            epochs_run: report.epochs.len(),
        });
    }

    let mut chosen = entries[0].batch_size;
    let mut chosen_val = entries[0].best_val_total;
    for entry in &entries[1..] {
        let better = entry.best_val_total < chosen_val
            || (entry.best_val_total == chosen_val && entry.batch_size > chosen);
        if better {
            chosen = entry.batch_size;
            chosen_val = entry.best_val_total;
        }
    }
    Ok(SweepReport { entries, chosen })
}

/// One scored wallet, ready for attestation and reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredUser {
    pub wallet: String,
    pub cluster_id: i64,
    pub zscore: u16,
    /// Empty for pinned wallets (they bypass the network).
    pub feature_weights: Vec<f64>,
    /// Diagnostic closed form: interval lower bound × Σ aₙ·fₙ over scaled
    /// features. Reported, never emitted as the score — unlike the affine
    /// map it cannot respect the interval caps in general.
    pub closed_form_score: f64,
    pub pinned: bool,
}

/// Score every row: forward + interval scaling, pinned wallets bypassing
/// the network at the entry score. Output sorted by wallet.
pub fn score_all(params: &NetParams, labeled: &LabeledDataset) -> Result<Vec<ScoredUser>, NetError> {
    let mut out = Vec::with_capacity(labeled.rows.len());
    for row in &labeled.rows {
        if row.pinned {
            out.push(ScoredUser {
                wallet: row.features.wallet.clone(),
                cluster_id: row.cluster_id,
                zscore: ENTRY_SCORE,
                feature_weights: Vec::new(),
                closed_form_score: 0.0,
                pinned: true,
            });
            continue;
        }
        let trace = forward_traced(params, &row.scaled, row.cluster_id, &row.interval)?;
        let dot: f64 = trace
            .output
            .feature_weights
            .iter()
            .zip(&row.scaled)
            .map(|(a, f)| a * f)
            .sum();
        out.push(ScoredUser {
            wallet: row.features.wallet.clone(),
            cluster_id: row.cluster_id,
            zscore: scale_score(trace.output.raw_score, &row.interval),
            feature_weights: trace.output.feature_weights.clone(),
            closed_form_score: f64::from(row.interval.lower) * dot,
            pinned: false,
        });
    }
    out.sort_by(|a, b| a.wallet.cmp(&b.wallet));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::labeled_fixture;

    fn quick_config(input_dim: usize, seed: u64) -> NetConfig {
        NetConfig {
            input_dim,
            hidden_dim: 12,
            latent_dim: 8,
            embedding_dim: 8,
            head_width: 8,
            seed,
            max_epochs: 40,
            batch_size: 64,
            ..NetConfig::default()
        }
    }

    #[test]
    fn training_runs_and_reports() {
        let labeled = labeled_fixture(200, 4, 9);
        let config = quick_config(labeled.rows[0].scaled.len(), 3);
        let (params, report) = train(&labeled, &config).unwrap();
        assert!(report.best_epoch >= 1);
        assert!(!report.epochs.is_empty());
        assert_eq!(params.dims.n_clusters, 4);
        assert!(report.n_train > report.n_val);
        // Bound loss is structurally zero from the start.
        assert_eq!(report.epochs[0].val.bound, 0.0);
    }

    #[test]
    fn loss_sequences_are_bitwise_deterministic() {
        let labeled = labeled_fixture(150, 3, 4);
        let config = quick_config(labeled.rows[0].scaled.len(), 8);
        let (_, a) = train(&labeled, &config).unwrap();
        let (_, b) = train(&labeled, &config).unwrap();
        assert_eq!(a, b);
        let totals_a: Vec<u64> = a.epochs.iter().map(|e| e.val.total.to_bits()).collect();
        let totals_b: Vec<u64> = b.epochs.iter().map(|e| e.val.total.to_bits()).collect();
        assert_eq!(totals_a, totals_b);
    }

    #[test]
    fn rigged_plateau_triggers_patience_exactly() {
        let labeled = labeled_fixture(120, 3, 5);
        let config = NetConfig {
            learning_rate: 0.0, // nothing can improve
            max_epochs: 100,
            patience: 15,
            ..quick_config(labeled.rows[0].scaled.len(), 2)
        };
        let (_, report) = train(&labeled, &config).unwrap();
        assert!(report.stopped_early);
        assert_eq!(report.best_epoch, 1);
        assert_eq!(report.epochs.len(), 16); // 1 best + 15 non-improving
    }

    #[test]
    fn pinned_rows_are_excluded_from_training_and_scored_at_entry() {
        let mut labeled = labeled_fixture(80, 2, 6);
        labeled.rows[0].pinned = true;
        let config = NetConfig {
            max_epochs: 3,
            ..quick_config(labeled.rows[0].scaled.len(), 2)
        };
        let (params, report) = train(&labeled, &config).unwrap();
        assert_eq!(report.n_train + report.n_val, 79);
        let scored = score_all(&params, &labeled).unwrap();
        let pinned: Vec<&ScoredUser> = scored.iter().filter(|s| s.pinned).collect();
        assert_eq!(pinned.len(), 1);
        assert_eq!(pinned[0].zscore, ENTRY_SCORE);
        assert!(pinned[0].feature_weights.is_empty());
    }

    #[test]
    fn scores_stay_inside_their_intervals() {
        let labeled = labeled_fixture(150, 3, 7);
        let config = quick_config(labeled.rows[0].scaled.len(), 5);
        let (params, _) = train(&labeled, &config).unwrap();
        let scored = score_all(&params, &labeled).unwrap();
        let intervals = labeled.intervals_by_cluster();
        for user in scored.iter().filter(|s| !s.pinned) {
            let interval = intervals[&user.cluster_id];
            assert!(interval.contains(user.zscore), "{user:?}");
        }
        // Sorted by wallet for canonical serialization.
        let wallets: Vec<&String> = scored.iter().map(|s| &s.wallet).collect();
        let mut sorted = wallets.clone();
        sorted.sort();
        assert_eq!(wallets, sorted);
    }

    #[test]
    fn sweep_enumerates_each_size_once_and_breaks_ties_up() {
        let labeled = labeled_fixture(100, 2, 3);
        // Both sizes exceed n_train → identical full-batch runs → tie →
        // larger size wins.
        let config = NetConfig {
            max_epochs: 4,
            ..quick_config(labeled.rows[0].scaled.len(), 2)
        };
        let report = batch_size_sweep(&labeled, &config, &[4096, 8192]).unwrap();
        assert_eq!(report.entries.len(), 2);
        assert_eq!(
            report.entries[0].best_val_total,
            report.entries[1].best_val_total
        );
        assert_eq!(report.chosen, 8192);
    }

    #[test]
    fn sweep_prefers_more_steps_when_epochs_are_capped() {
        let labeled = labeled_fixture(600, 3, 11);
        // One epoch: batch 64 takes ~7 gradient steps, batch 8192 takes 1.
        let config = NetConfig {
            max_epochs: 1,
            learning_rate: 5e-3,
            ..quick_config(labeled.rows[0].scaled.len(), 4)
        };
        let report = batch_size_sweep(&labeled, &config, &[64, 8192]).unwrap();
        assert_eq!(report.chosen, 64, "{report:?}");
    }

    #[test]
    fn sweep_covers_the_whole_size_menu_exactly_once() {
        let labeled = labeled_fixture(90, 2, 8);
        let config = NetConfig {
            max_epochs: 2,
            ..quick_config(labeled.rows[0].scaled.len(), 6)
        };
        let report = batch_size_sweep(&labeled, &config, &SWEEP_SIZES).unwrap();
        let sizes: Vec<usize> = report.entries.iter().map(|e| e.batch_size).collect();
        assert_eq!(sizes, SWEEP_SIZES.to_vec());
        // Monotone-complete: one entry per size, no gaps, all runs trained.
        assert!(report.entries.iter().all(|e| e.epochs_run > 0));
        assert!(SWEEP_SIZES.contains(&report.chosen));
    }

    #[test]
    fn sweep_rejects_sizes_outside_the_set() {
        let labeled = labeled_fixture(40, 2, 1);
        let config = quick_config(labeled.rows[0].scaled.len(), 1);
        assert!(matches!(
            batch_size_sweep(&labeled, &config, &[100]),
            Err(NetError::BadSweepSize(100))
        ));
    }

    /// Analytic gradient of the full training objective vs central finite
    /// differences on a micro-network (5 users, 4 features, 2 clusters).
    #[test]
    fn training_objective_gradient_matches_finite_differences() {
        let labeled = crate::synth::labeled_fixture_dims(5, 2, 4, 13);
        let config = NetConfig {
            input_dim: 4,
            hidden_dim: 6,
            latent_dim: 4,
            embedding_dim: 4,
            attention_heads: 2,
            head_width: 5,
            recon_weight: 0.1,
            ..NetConfig::default()
        };
        let dims = NetDims::from_config(&config, 2);
        let params = NetParams::init(dims, 21);

        let mut grads = params.zeros_like();
        batch_objective(&params, &labeled, &config, Some(&mut grads)).unwrap();

        let h = 1e-5;
        let mut worst = 0.0f64;
        #[allow(clippy::needless_range_loop)]
        for i in 0..params.values.len() {
            let mut plus = params.clone();
            plus.values[i] += h;
            let mut minus = params.clone();
            minus.values[i] -= h;
            let f_plus = batch_objective(&plus, &labeled, &config, None).unwrap().total;
            let f_minus = batch_objective(&minus, &labeled, &config, None).unwrap().total;
            let fd = (f_plus - f_minus) / (2.0 * h);
            let rel = (grads[i] - fd).abs() / grads[i].abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }
}
