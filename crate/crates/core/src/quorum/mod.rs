//! Simulated validation service.
//!
//! Validators sample stored records, recompute proofs against the proposed
//! root, and vote; the root reaches the chain stub only on a two-thirds
//! quorum of all registered validators. Validators run as independent
//! actors over immutable messages; the aggregator is the single mutation
//! point. No real networking — the registry/restaking layer this simulates
//! is out of scope.

mod epoch;
mod serve;
mod tamper;

pub use epoch::{run_epoch, run_epoch_proposing, ChainEntry, ChainStub, QuorumResult};
pub use serve::{serve_score, QueryRequest, QueryResponse};
pub use tamper::{detect_tamper, TamperReport};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValidatorBehavior {
    /// Samples records and approves iff every sampled proof verifies.
    Honest,
    /// Votes against every proposal.
    RejectAll,
    /// Claims a corrupted recomputation; never counts toward the proposal.
    CorruptRecompute,
    /// Emits no vote at all; counts as non-approval.
    Silent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatorSpec {
    pub id: u32,
    pub behavior: ValidatorBehavior,
    /// Fraction of stored records each round samples, in (0, 1].
    pub sample_fraction: f64,
    pub seed: u64,
}

impl ValidatorSpec {
    pub fn honest(id: u32, sample_fraction: f64, seed: u64) -> Self {
        ValidatorSpec {
            id,
            behavior: ValidatorBehavior::Honest,
            sample_fraction,
            seed,
        }
    }
}

/// One validator's signed opinion on an epoch's proposed root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatorVote {
    pub validator_id: u32,
    pub epoch: u64,
    /// Hex form of the root the validator claims to have checked.
    pub claimed_root: String,
    pub approve: bool,
}

/// Votes needed to publish: ⌈2n/3⌉ of all registered validators.
pub fn quorum_threshold(total_validators: usize) -> usize {
    (2 * total_validators).div_ceil(3)
}

#[derive(Debug, thiserror::Error)]
pub enum QuorumError {
    #[error("no validators registered")]
    NoValidators,
    #[error("epoch {0} is not published on chain")]
    EpochNotPublished(u64),
    #[error("epoch {epoch} already published with a different root")]
    ConflictingPublish { epoch: u64 },
    #[error(transparent)]
    Store(#[from] crate::attest::StoreError),
}

/// Validator roster file (TOML): a list of `[[validators]]` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatorRoster {
    pub validators: Vec<ValidatorSpec>,
}

impl ValidatorRoster {
    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("roster serializes")
    }
}
