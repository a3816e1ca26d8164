//! Directory-backed, epoch-versioned score store.
//!
//! Layout under the store directory:
//!
//! ```text
//! store/
//!   epoch-<N>.jsonl   one record per line, canonical wallet order
//!   roots.json        epoch → published root (lowercase hex)
//! ```
//!
//! Prior epochs stay readable; each `put_scores` seals one epoch. Reads are
//! lock-free over immutable epoch files.

use super::merkle::{build_tree, empty_root, from_hex, to_hex, MerkleProof, Root};
use super::{StoreError, ZScoreRecord};
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub struct ScoreStore {
    dir: PathBuf,
    roots: BTreeMap<u64, Root>,
    /// Epoch records cached after first load; invalidated by tampering.
    cache: BTreeMap<u64, Vec<ZScoreRecord>>,
}

impl ScoreStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let roots_path = dir.join("roots.json");
        let roots = if roots_path.exists() {
            let text = fs::read_to_string(&roots_path)?;
            let raw: BTreeMap<String, String> =
                serde_json::from_str(&text).map_err(|e| StoreError::Corrupt(e.to_string()))?;
            raw.into_iter()
                .map(|(epoch, hex)| {
                    let epoch = epoch
                        .parse::<u64>()
                        .map_err(|_| StoreError::Corrupt(format!("bad epoch key `{epoch}`")))?;
                    let root = from_hex(&hex)
                        .ok_or_else(|| StoreError::Corrupt(format!("bad root hex `{hex}`")))?;
                    Ok((epoch, root))
                })
                .collect::<Result<_, StoreError>>()?
        } else {
            BTreeMap::new()
        };
        Ok(ScoreStore {
            dir,
            roots,
            cache: BTreeMap::new(),
        })
    }

    fn epoch_path(&self, epoch: u64) -> PathBuf {
        self.dir.join(format!("epoch-{epoch}.jsonl"))
    }

    /// Persist one epoch's records and return the sealed root. Overwriting
    /// an epoch with identical records is an idempotent no-op byte-wise.
    pub fn put_scores(
        &mut self,
        records: &[ZScoreRecord],
        epoch: u64,
    ) -> Result<Root, StoreError> {
        let mut seen = BTreeSet::new();
        for record in records {
            if !(1..=900).contains(&record.zscore) {
                return Err(StoreError::ScoreOutOfRange {
                    wallet: record.wallet.clone(),
                    score: record.zscore,
                });
            }
            if !seen.insert(record.wallet.as_str()) {
                return Err(StoreError::DuplicateWallet(record.wallet.clone()));
            }
        }

        let mut canonical: Vec<ZScoreRecord> = records
            .iter()
            .map(|r| ZScoreRecord { epoch, ..r.clone() })
            .collect();
        canonical.sort_by(|a, b| a.wallet.as_bytes().cmp(b.wallet.as_bytes()));

        let mut file = fs::File::create(self.epoch_path(epoch))?;
        for record in &canonical {
            writeln!(
                file,
                "{}",
                serde_json::to_string(record).expect("record serializes")
            )?;
        }

        let root = if canonical.is_empty() {
            empty_root()
        } else {
            build_tree(&canonical).root()
        };
        self.roots.insert(epoch, root);
        self.persist_roots()?;
        self.cache.insert(epoch, canonical);
        Ok(root)
    }

    fn persist_roots(&self) -> Result<(), StoreError> {
        let raw: BTreeMap<String, String> = self
            .roots
            .iter()
            .map(|(epoch, root)| (epoch.to_string(), to_hex(root)))
            .collect();
        let text = serde_json::to_string_pretty(&raw).expect("roots serialize");
        fs::write(self.dir.join("roots.json"), text)?;
        Ok(())
    }

    /// The root sealed at `put_scores` time for an epoch.
    pub fn sealed_root(&self, epoch: u64) -> Result<Root, StoreError> {
        self.roots
            .get(&epoch)
            .copied()
            .ok_or(StoreError::EpochNotFound(epoch))
    }

    pub fn epochs(&self) -> Vec<u64> {
        self.roots.keys().copied().collect()
    }

    /// All records of an epoch, canonical order.
    pub fn records(&mut self, epoch: u64) -> Result<&[ZScoreRecord], StoreError> {
        if !self.cache.contains_key(&epoch) {
            let path = self.epoch_path(epoch);
            if !path.exists() {
                return Err(StoreError::EpochNotFound(epoch));
            }
            let text = fs::read_to_string(path)?;
            let records = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|line| {
                    serde_json::from_str::<ZScoreRecord>(line)
                        .map_err(|e| StoreError::Corrupt(e.to_string()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            self.cache.insert(epoch, records);
        }
        Ok(&self.cache[&epoch])
    }

    pub fn get_record(&mut self, wallet: &str, epoch: u64) -> Result<ZScoreRecord, StoreError> {
        let records = self.records(epoch)?;
        records
            .binary_search_by(|r| r.wallet.as_bytes().cmp(wallet.as_bytes()))
            .map(|i| records[i].clone())
            .map_err(|_| StoreError::NotFound {
                wallet: wallet.to_string(),
                epoch,
            })
    }

    /// Membership proof from the records as currently stored. If the store
    /// was tampered with after sealing, the proof folds to a different root
    /// and fails verification against the sealed one — that mismatch is
    /// exactly what validators sample for.
    pub fn get_proof(&mut self, wallet: &str, epoch: u64) -> Result<MerkleProof, StoreError> {
        let records = self.records(epoch)?.to_vec();
        let tree = build_tree(&records);
        tree.prove(wallet, epoch).ok_or(StoreError::NotFound {
            wallet: wallet.to_string(),
            epoch,
        })
    }

    /// Fault-injection hook: silently overwrite one stored score without
    /// resealing the root, simulating post-publication corruption for the
    /// validator drills.
    pub fn tamper_score(
        &mut self,
        wallet: &str,
        epoch: u64,
        zscore: u16,
    ) -> Result<(), StoreError> {
        let records = self.records(epoch)?.to_vec();
        let mut found = false;
        let tampered: Vec<ZScoreRecord> = records
            .into_iter()
            .map(|mut r| {
                if r.wallet == wallet {
                    r.zscore = zscore;
                    found = true;
                }
                r
            })
            .collect();
        if !found {
            return Err(StoreError::NotFound {
                wallet: wallet.to_string(),
                epoch,
            });
        }
        let mut file = fs::File::create(self.epoch_path(epoch))?;
        for record in &tampered {
            writeln!(
                file,
                "{}",
                serde_json::to_string(record).expect("record serializes")
            )?;
        }
        self.cache.insert(epoch, tampered);
        Ok(())
    }
}
