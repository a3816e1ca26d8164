//! One validation round.

use super::{
    quorum_threshold, QuorumError, ValidatorBehavior, ValidatorSpec, ValidatorVote,
};
use crate::attest::{to_hex, verify_proof, Root, ScoreStore};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::mpsc;

/// Append-only published-root log. The publish timestamp is logical (the
/// log index at publication) so repeated runs stay byte-identical.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainStub {
    entries: Vec<ChainEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainEntry {
    pub epoch: u64,
    /// Lowercase hex, 64 chars.
    pub root: String,
    pub published_at: u64,
}

impl ChainStub {
    pub fn entries(&self) -> &[ChainEntry] {
        &self.entries
    }

    pub fn root_at(&self, epoch: u64) -> Option<Root> {
        self.entries
            .iter()
            .find(|e| e.epoch == epoch)
            .and_then(|e| crate::attest::from_hex(&e.root))
    }

    pub fn is_published(&self, epoch: u64) -> bool {
        self.entries.iter().any(|e| e.epoch == epoch)
    }

    fn publish(&mut self, epoch: u64, root: &Root) -> Result<(), QuorumError> {
        let hex = to_hex(root);
        if let Some(existing) = self.entries.iter().find(|e| e.epoch == epoch) {
            if existing.root == hex {
                return Ok(()); // idempotent re-publish
            }
            return Err(QuorumError::ConflictingPublish { epoch });
        }
        self.entries.push(ChainEntry {
            epoch,
            root: hex,
            published_at: self.entries.len() as u64,
        });
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("entry serializes") + "\n")
            .collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<ChainEntry>, _>>()?;
        Ok(ChainStub { entries })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QuorumResult {
    pub epoch: u64,
    pub proposed_root: String,
    pub approvals: usize,
    pub total_validators: usize,
    pub published: bool,
    /// Votes actually received, in validator-id order; silent validators
    /// appear nowhere here.
    pub votes: Vec<ValidatorVote>,
}

/// Run a round proposing the store's own sealed root.
pub fn run_epoch(
    store: &mut ScoreStore,
    validators: &[ValidatorSpec],
    chain: &mut ChainStub,
    epoch: u64,
) -> Result<QuorumResult, QuorumError> {
    let proposed = store.sealed_root(epoch)?;
    run_epoch_proposing(store, &proposed, validators, chain, epoch)
}

/// Run a round for an arbitrary proposed root (lets the drills feed a
/// corrupted proposal through the same machinery).
///
/// Each validator examines the store independently and mails back at most
/// one vote; mailbox delivery collapses to validator-id order before the
/// aggregator tallies, so rounds are deterministic.
pub fn run_epoch_proposing(
    store: &mut ScoreStore,
    proposed_root: &Root,
    validators: &[ValidatorSpec],
    chain: &mut ChainStub,
    epoch: u64,
) -> Result<QuorumResult, QuorumError> {
    if validators.is_empty() {
        return Err(QuorumError::NoValidators);
    }

    let records = store.records(epoch)?.to_vec();
    let wallets: Vec<String> = records.iter().map(|r| r.wallet.clone()).collect();

    // Proof generation needs &mut store (lazy cache), so precompute every
    // proof each validator will request; validators then run against
    // immutable data.
    let mut sampled_proofs = Vec::with_capacity(validators.len());
    for validator in validators {
        if validator.behavior != ValidatorBehavior::Honest {
            sampled_proofs.push(Vec::new());
            continue;
        }
        let sample = sample_wallets(&wallets, validator, epoch);
        let proofs = sample
            .iter()
            .map(|wallet| store.get_proof(wallet, epoch))
            .collect::<Result<Vec<_>, _>>()?;
        sampled_proofs.push(proofs);
    }

    let (tx, rx) = mpsc::channel::<ValidatorVote>();
    std::thread::scope(|scope| {
        for (validator, proofs) in validators.iter().zip(&sampled_proofs) {
            let tx = tx.clone();
            let proposed = *proposed_root;
            scope.spawn(move || {
                let vote = match validator.behavior {
                    ValidatorBehavior::Silent => None,
                    ValidatorBehavior::RejectAll => Some(ValidatorVote {
                        validator_id: validator.id,
                        epoch,
                        claimed_root: to_hex(&proposed),
                        approve: false,
                    }),
                    ValidatorBehavior::CorruptRecompute => {
                        let mut corrupt = proposed;
                        corrupt[31] ^= 0x01;
                        Some(ValidatorVote {
                            validator_id: validator.id,
                            epoch,
                            claimed_root: to_hex(&corrupt),
                            approve: true,
                        })
                    }
                    ValidatorBehavior::Honest => {
                        let all_good = proofs.iter().all(|p| verify_proof(p, &proposed));
                        Some(ValidatorVote {
                            validator_id: validator.id,
                            epoch,
                            claimed_root: to_hex(&proposed),
                            approve: all_good,
                        })
                    }
                };
                if let Some(vote) = vote {
                    let _ = tx.send(vote);
                }
            });
        }
    });
    drop(tx);

    let mut votes: Vec<ValidatorVote> = rx.into_iter().collect();
    votes.sort_by_key(|v| v.validator_id);

    let proposed_hex = to_hex(proposed_root);
    let approvals = votes
        .iter()
        .filter(|v| v.approve && v.claimed_root == proposed_hex)
        .count();
    let total = validators.len();
    let published = approvals >= quorum_threshold(total);
    if published {
        chain.publish(epoch, proposed_root)?;
    }

    Ok(QuorumResult {
        epoch,
        proposed_root: proposed_hex,
        approvals,
        total_validators: total,
        published,
        votes,
    })
}

/// ⌈fraction·n⌉ wallets without replacement, seeded per (validator, epoch).
pub(crate) fn sample_wallets(
    wallets: &[String],
    validator: &ValidatorSpec,
    epoch: u64,
) -> Vec<String> {
    let n = wallets.len();
    if n == 0 {
        return Vec::new();
    }
    let count = ((validator.sample_fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut rng =
        ChaCha8Rng::seed_from_u64(validator.seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    indices.truncate(count);
    indices.sort_unstable();
    indices.into_iter().map(|i| wallets[i].clone()).collect()
}
