//! zScore pipeline: wallet-level reputation scores from lending-protocol
//! transaction logs.
//!
//! The pipeline runs in stages, each a module here:
//!
//! 1. [`ingest`] — parse raw protocol event logs, reconstruct borrowing
//!    positions, compute health factors, classify coin volatility.
//! 2. [`features`] — turn per-wallet histories into behavioral feature
//!    vectors and scale them.
//! 3. [`cluster`] — mine behavior groups (k-means, Ward, DBSCAN) with a
//!    particle-swarm search over the clustering objective.
//! 4. [`label`] — map clusters to score intervals inside [1, 900] via
//!    deterministic partial-labeling rules.
//! 5. [`net`] — multitask network (shared autoencoder + cluster embedding +
//!    attention, score and feature-weight heads) producing integer scores.
//! 6. [`attest`] — Merkle-committed score store with membership proofs.
//! 7. [`quorum`] — simulated validator round: sampled recomputation and a
//!    two-thirds publication quorum against a chain stub.
//! 8. [`synth`] — deterministic synthetic populations with ground truth,
//!    so every stage above is testable at desk scale.
//!
//! [`pipeline`] wires the stages over a working directory of artifact
//! files; the `zscore` CLI is a thin wrapper around it.

pub mod attest;
pub mod cluster;
pub mod features;
pub mod ingest;
pub mod label;
pub mod net;
pub mod pipeline;
pub mod quorum;
pub mod synth;

pub use attest::{MerkleProof, ZScoreRecord};
pub use features::{ScaledMatrix, UserFeatureVector};
pub use cluster::ClusteringResult;
pub use ingest::{CallType, TransactionEvent};
pub use label::{LabeledDataset, ScoreInterval};
