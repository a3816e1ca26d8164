//! Binary Merkle tree over score records.
//!
//! Domain separation: leaves hash as `H(0x00 ‖ wallet ‖ zscore ‖ epoch)`
//! with the integers little-endian 64-bit, parents as `H(0x01 ‖ left ‖
//! right)`, and the empty tree's root is `H(0x02)`. An odd node at the end
//! of a level is promoted unchanged rather than paired with itself, so no
//! two distinct record sets share a root by duplication.

use super::ZScoreRecord;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub type Root = [u8; 32];

const LEAF_TAG: u8 = 0x00;
const NODE_TAG: u8 = 0x01;
const EMPTY_TAG: u8 = 0x02;

/// Which side a proof sibling sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofStep {
    #[serde(with = "hex32")]
    pub hash: Root,
    pub side: Side,
}

/// Membership proof: fold `leaf` along `path` to reproduce `root`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MerkleProof {
    pub wallet: String,
    #[serde(with = "hex32")]
    pub leaf: Root,
    pub path: Vec<ProofStep>,
    #[serde(with = "hex32")]
    pub root: Root,
    pub epoch: u64,
}

/// All levels of the tree, leaves first. Leaves must arrive in canonical
/// order (ascending wallet bytes); [`build_tree`] enforces that.
#[derive(Debug, Clone)]
pub struct MerkleTree {
    /// `levels[0]` are leaf hashes; the last level holds the root alone.
    levels: Vec<Vec<Root>>,
    wallets: Vec<String>,
}

pub fn leaf_hash(wallet: &str, zscore: u16, epoch: u64) -> Root {
    let mut hasher = Sha256::new();
    hasher.update([LEAF_TAG]);
    hasher.update(wallet.as_bytes());
    hasher.update(u64::from(zscore).to_le_bytes());
    hasher.update(epoch.to_le_bytes());
    hasher.finalize().into()
}

fn node_hash(left: &Root, right: &Root) -> Root {
    let mut hasher = Sha256::new();
    hasher.update([NODE_TAG]);
    hasher.update(left);
    hasher.update(right);
    hasher.finalize().into()
}

pub fn empty_root() -> Root {
    Sha256::digest([EMPTY_TAG]).into()
}

/// Build the tree over records; input order does not matter because the
/// tree sorts into canonical wallet order first.
pub fn build_tree(records: &[ZScoreRecord]) -> MerkleTree {
    let mut sorted: Vec<&ZScoreRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.wallet.as_bytes().cmp(b.wallet.as_bytes()));

    let wallets: Vec<String> = sorted.iter().map(|r| r.wallet.clone()).collect();
    let leaves: Vec<Root> = sorted
        .iter()
        .map(|r| leaf_hash(&r.wallet, r.zscore, r.epoch))
        .collect();

    let mut levels = vec![leaves];
    while levels.last().expect("nonempty").len() > 1 {
        let below = levels.last().expect("nonempty");
        let mut level = Vec::with_capacity(below.len().div_ceil(2));
        for pair in below.chunks(2) {
            match pair {
                [left, right] => level.push(node_hash(left, right)),
                [odd] => level.push(*odd), // promoted unchanged
                _ => unreachable!(),
            }
        }
        levels.push(level);
    }
    MerkleTree { levels, wallets }
}

impl MerkleTree {
    pub fn root(&self) -> Root {
        match self.levels.first() {
            Some(leaves) if !leaves.is_empty() => self.levels.last().expect("levels")[0],
            _ => empty_root(),
        }
    }

    pub fn len(&self) -> usize {
        self.levels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Proof for one wallet, or None when absent.
    pub fn prove(&self, wallet: &str, epoch: u64) -> Option<MerkleProof> {
        let mut index = self
            .wallets
            .binary_search_by(|w| w.as_bytes().cmp(wallet.as_bytes()))
            .ok()?;
        let leaf = self.levels[0][index];

        let mut path = Vec::new();
        for level in &self.levels[..self.levels.len().saturating_sub(1)] {
            let sibling = index ^ 1;
            if sibling < level.len() {
                path.push(ProofStep {
                    hash: level[sibling],
                    side: if sibling < index { Side::Left } else { Side::Right },
                });
            }
            // No sibling: the node was promoted; nothing enters the path.
            index /= 2;
        }

        Some(MerkleProof {
            wallet: wallet.to_string(),
            leaf,
            path,
            root: self.root(),
            epoch,
        })
    }
}

/// Fold the proof and compare against a trusted root. Pure; no store
/// access.
pub fn verify_proof(proof: &MerkleProof, trusted_root: &Root) -> bool {
    let mut hash = proof.leaf;
    for step in &proof.path {
        hash = match step.side {
            Side::Left => node_hash(&step.hash, &hash),
            Side::Right => node_hash(&hash, &step.hash),
        };
    }
    hash == *trusted_root
}

pub(crate) mod hex32 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::to_hex(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let text = String::deserialize(d)?;
        super::from_hex(&text).ok_or_else(|| serde::de::Error::custom("expected 64 hex chars"))
    }
}

/// Lowercase hex of a root (the published form).
pub fn to_hex(root: &Root) -> String {
    root.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn from_hex(text: &str) -> Option<Root> {
    if text.len() != 64 {
        return None;
    }
    let mut out = [0u8; 32];
    for (i, chunk) in text.as_bytes().chunks(2).enumerate() {
        let hi = (chunk[0] as char).to_digit(16)?;
        let lo = (chunk[1] as char).to_digit(16)?;
        out[i] = (hi * 16 + lo) as u8;
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(wallet: &str, zscore: u16) -> ZScoreRecord {
        ZScoreRecord {
            wallet: wallet.into(),
            zscore,
            epoch: 1,
            cluster_id: 0,
        }
    }

    #[test]
    fn empty_tree_has_the_empty_root() {
        let tree = build_tree(&[]);
        assert_eq!(tree.root(), empty_root());
        assert_eq!(empty_root(), <[u8; 32]>::from(Sha256::digest([0x02])));
    }

    #[test]
    fn single_record_root_is_its_leaf() {
        let tree = build_tree(&[record("0xa", 500)]);
        assert_eq!(tree.root(), leaf_hash("0xa", 500, 1));
        let proof = tree.prove("0xa", 1).unwrap();
        assert!(proof.path.is_empty());
        assert!(verify_proof(&proof, &tree.root()));
    }

    #[test]
    fn power_of_two_paths_have_log_length() {
        let records: Vec<ZScoreRecord> =
            (0..256).map(|i| record(&format!("0x{i:03}"), 100 + i as u16)).collect();
        let tree = build_tree(&records);
        for r in &records {
            let proof = tree.prove(&r.wallet, 1).unwrap();
            assert_eq!(proof.path.len(), 8);
            assert!(verify_proof(&proof, &tree.root()));
        }
    }

    #[test]
    fn every_wallet_in_a_257_record_tree_verifies() {
        let records: Vec<ZScoreRecord> =
            (0..257).map(|i| record(&format!("0x{i:03}"), 1 + (i % 900) as u16)).collect();
        let tree = build_tree(&records);
        for r in &records {
            let proof = tree.prove(&r.wallet, 1).unwrap();
            assert!(verify_proof(&proof, &tree.root()), "wallet {}", r.wallet);
        }
    }

    #[test]
    fn tampered_scores_fail_verification() {
        let records: Vec<ZScoreRecord> =
            (0..31).map(|i| record(&format!("0x{i:02}"), 100 + i as u16)).collect();
        let tree = build_tree(&records);
        let mut proof = tree.prove("0x07", 1).unwrap();
        // Re-derive the leaf from a score one bit off.
        proof.leaf = leaf_hash("0x07", 107 ^ 1, 1);
        assert!(!verify_proof(&proof, &tree.root()));
    }

    #[test]
    fn cross_epoch_roots_differ_when_scores_change() {
        let e1: Vec<ZScoreRecord> =
            (0..10).map(|i| record(&format!("0x{i}"), 100 + i as u16)).collect();
        let mut e2: Vec<ZScoreRecord> = e1
            .iter()
            .map(|r| ZScoreRecord { epoch: 2, ..r.clone() })
            .collect();
        e2[3].zscore = 555;
        let t1 = build_tree(&e1);
        let t2 = build_tree(&e2);
        let proof = t1.prove("0x3", 1).unwrap();
        assert!(!verify_proof(&proof, &t2.root()));
    }

    #[test]
    fn proof_json_wire_shape() {
        let records: Vec<ZScoreRecord> =
            (0..4).map(|i| record(&format!("0x{i}"), 10 + i as u16)).collect();
        let tree = build_tree(&records);
        let proof = tree.prove("0x2", 1).unwrap();
        let json: serde_json::Value = serde_json::from_str(&serde_json::to_string(&proof).unwrap()).unwrap();
        assert_eq!(json["wallet"], "0x2");
        assert_eq!(json["epoch"], 1);
        assert_eq!(json["leaf"].as_str().unwrap().len(), 64);
        assert_eq!(json["root"].as_str().unwrap().len(), 64);
        let step = &json["path"][0];
        assert_eq!(step["hash"].as_str().unwrap().len(), 64);
        assert!(matches!(step["side"].as_str().unwrap(), "Left" | "Right"));
        // And it deserializes back to the same proof.
        let back: MerkleProof = serde_json::from_value(json).unwrap();
        assert_eq!(back, proof);
    }

    #[test]
    fn hex_round_trips() {
        let root = leaf_hash("0xa", 1, 1);
        let text = to_hex(&root);
        assert_eq!(text.len(), 64);
        assert_eq!(from_hex(&text), Some(root));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn root_ignores_insertion_order(seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut records: Vec<ZScoreRecord> = (0..40)
                .map(|i| record(&format!("0x{i:02}"), 1 + i as u16))
                .collect();
            let forward = build_tree(&records).root();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            records.shuffle(&mut rng);
            prop_assert_eq!(build_tree(&records).root(), forward);
        }

        #[test]
        fn any_single_mutation_changes_the_root(victim in 0usize..20, delta in 1u16..800) {
            let records: Vec<ZScoreRecord> = (0..20)
                .map(|i| record(&format!("0x{i:02}"), 50 + i as u16))
                .collect();
            let before = build_tree(&records).root();
            let mut mutated = records.clone();
            mutated[victim].zscore = 1 + (mutated[victim].zscore + delta - 1) % 900;
            prop_assume!(mutated[victim].zscore != records[victim].zscore);
            prop_assert_ne!(build_tree(&mutated).root(), before);
        }
    }
}
