//! Merkle-committed score storage.
//!
//! Scores live in an epoch-versioned ordered store with a Merkle tree
//! overlaid per epoch: one published 32-byte root commits to every record,
//! and membership proofs let anyone check a single score against the root
//! without the full dataset.

mod merkle;
mod store;

pub use merkle::{
    build_tree, empty_root, from_hex, leaf_hash, to_hex, verify_proof, MerkleProof, MerkleTree,
    ProofStep, Root, Side,
};
pub use store::ScoreStore;

use serde::{Deserialize, Serialize};

/// A wallet's final integer score for one update round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZScoreRecord {
    pub wallet: String,
    /// Integer in [1, 900].
    pub zscore: u16,
    pub epoch: u64,
    /// Informational cluster tag (cohort-offset id); not part of the leaf.
    pub cluster_id: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("duplicate wallet `{0}` in one epoch batch")]
    DuplicateWallet(String),
    #[error("score {score} for `{wallet}` outside [1, 900]")]
    ScoreOutOfRange { wallet: String, score: u16 },
    #[error("wallet `{wallet}` not found at epoch {epoch}")]
    NotFound { wallet: String, epoch: u64 },
    #[error("no records stored for epoch {0}")]
    EpochNotFound(u64),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt store file: {0}")]
    Corrupt(String),
}
