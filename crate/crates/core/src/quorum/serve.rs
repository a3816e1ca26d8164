//! Score-query API: fetch a record with its proof and verify it against
//! the on-chain root.

use super::{ChainStub, QuorumError};
use crate::attest::{to_hex, verify_proof, MerkleProof, ScoreStore};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRequest {
    pub wallet: String,
    pub epoch: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub wallet: String,
    pub epoch: u64,
    pub zscore: u16,
    pub proof: MerkleProof,
    /// The root published on chain, lowercase hex.
    pub root: String,
    /// Whether the served proof folds to the on-chain root.
    pub verified: bool,
}

/// Read-only: anyone can fetch a score plus the proof and check it against
/// the published root. `verified = false` means the store no longer matches
/// what the quorum attested.
pub fn serve_score(
    store: &mut ScoreStore,
    chain: &ChainStub,
    wallet: &str,
    epoch: u64,
) -> Result<QueryResponse, QuorumError> {
    let chain_root = chain
        .root_at(epoch)
        .ok_or(QuorumError::EpochNotPublished(epoch))?;
    let record = store.get_record(wallet, epoch)?;
    let proof = store.get_proof(wallet, epoch)?;
    let verified = verify_proof(&proof, &chain_root);
    Ok(QueryResponse {
        wallet: wallet.to_string(),
        epoch,
        zscore: record.zscore,
        proof,
        root: to_hex(&chain_root),
        verified,
    })
}
