//! Multitask scoring network.
//!
//! Two shared components — a feature autoencoder and a learnable
//! per-cluster embedding — feed a small attention stage over the (latent,
//! embedding) token pair. Two heads read the attended representation: a
//! tanh-bounded score in [−1, 1] that an affine map scales into the
//! cluster's interval, and a softmax feature-weight vector trained to match
//! each cluster's observed feature importance.
//!
//! Training minimizes weighted boundary, distribution, and coherence
//! losses (plus a small auxiliary reconstruction term), with seeded
//! determinism end to end: same config and data, bitwise-identical loss
//! sequences.

mod importance;
mod losses;
mod model;
mod serialize;
mod train;

pub use importance::{observed_importance, ClusterImportance};
pub use losses::{boundary_loss, coherence_loss, distribution_loss};
pub use model::{forward, forward_traced, scale_score, ForwardTrace, NetDims, NetParams, ScoreOutput};
pub use serialize::{read_params, write_params};
pub use train::{
    batch_objective, batch_size_sweep, score_all, train, EpochRecord, LossBreakdown, ScoredUser,
    SweepEntry, SweepReport, TrainingReport,
};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Batch sizes the sweep may explore.
pub const SWEEP_SIZES: [usize; 8] = [64, 128, 256, 512, 1024, 2048, 4096, 8192];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub bound: f64,
    pub dist: f64,
    pub coh: f64,
}

/// Boundary violations cost the most by default; distribution and
/// coherence weigh equally.
impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            bound: 2.0,
            dist: 1.0,
            coh: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    /// Must equal `latent_dim`: the attention stage pairs the two tokens.
    pub embedding_dim: usize,
    pub attention_heads: usize,
    pub head_width: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub loss_weights: LossWeights,
    /// Per-cluster weight overrides for small or lopsided clusters.
    pub cluster_weight_overrides: BTreeMap<u32, LossWeights>,
    /// Auxiliary reconstruction stabilizer; 0 disables the decoder term.
    pub recon_weight: f64,
    /// Required per-cluster spread of emitted scores as a fraction of the
    /// interval width, in (0, 1].
    pub target_spread: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            input_dim: crate::features::FEATURE_COUNT,
            hidden_dim: 32,
            latent_dim: 16,
            embedding_dim: 16,
            attention_heads: 1,
            head_width: 16,
            seed: 7,
            learning_rate: 1e-3,
            max_epochs: 300,
            patience: 15,
            batch_size: 256,
            loss_weights: LossWeights::default(),
            cluster_weight_overrides: BTreeMap::new(),
            recon_weight: 0.1,
            target_spread: 0.8,
        }
    }
}

impl NetConfig {
    pub fn weights_for(&self, cluster_id: i64) -> LossWeights {
        u32::try_from(cluster_id)
            .ok()
            .and_then(|id| self.cluster_weight_overrides.get(&id).copied())
            .unwrap_or(self.loss_weights)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.embedding_dim != self.latent_dim {
            return Err(NetError::BadConfig(format!(
                "embedding_dim {} must equal latent_dim {}",
                self.embedding_dim, self.latent_dim
            )));
        }
        if !self.latent_dim.is_multiple_of(self.attention_heads.max(1)) {
            return Err(NetError::BadConfig(format!(
                "latent_dim {} not divisible by {} attention heads",
                self.latent_dim, self.attention_heads
            )));
        }
        if self.patience == 0 {
            return Err(NetError::BadConfig("patience must be at least 1".into()));
        }
        if !(0.0 < self.target_spread && self.target_spread <= 1.0) {
            return Err(NetError::BadConfig(format!(
                "target_spread {} outside (0, 1]",
                self.target_spread
            )));
        }
        let w = &self.loss_weights;
        if w.bound < 0.0 || w.dist < 0.0 || w.coh < 0.0 || (w.bound + w.dist + w.coh) == 0.0 {
            return Err(NetError::BadConfig(
                "loss weights must be non-negative and not all zero".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(NetError::BadConfig("batch_size must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self, NetError> {
        let config: NetConfig =
            serde_json::from_str(text).map_err(|e| NetError::BadConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("bad net config: {0}")]
    BadConfig(String),
    #[error("unknown cluster id {id} (embedding table holds {n_clusters})")]
    UnknownCluster { id: i64, n_clusters: usize },
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("no trainable rows (every row pinned or dataset empty)")]
    NoTrainableRows,
    #[error("batch size {0} is not in the allowed sweep set")]
    BadSweepSize(usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt parameter file: {0}")]
    CorruptParams(String),
}
