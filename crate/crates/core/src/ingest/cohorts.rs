//! Per-wallet histories and the liquidation / non-liquidation split.

use super::{reconstruct_positions, CallType, Position, TransactionEvent};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Cohort {
    Liquidation,
    NonLiquidation,
}

impl Cohort {
    pub const BOTH: [Cohort; 2] = [Cohort::Liquidation, Cohort::NonLiquidation];

    pub fn as_str(&self) -> &'static str {
        match self {
            Cohort::Liquidation => "liquidation",
            Cohort::NonLiquidation => "non-liquidation",
        }
    }
}

impl fmt::Display for Cohort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Cohort {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "liquidation" => Ok(Cohort::Liquidation),
            "non-liquidation" => Ok(Cohort::NonLiquidation),
            other => Err(format!(
                "unknown cohort `{other}` (expected `liquidation` or `non-liquidation`)"
            )),
        }
    }
}

/// Everything the feature extractor needs about one wallet.
#[derive(Debug, Clone, Default)]
pub struct WalletHistory {
    pub wallet: String,
    /// This wallet's events, sorted by (timestamp, block_id).
    pub events: Vec<TransactionEvent>,
    pub positions: Vec<Position>,
}

impl WalletHistory {
    pub fn liquidation_count(&self) -> u64 {
        self.events
            .iter()
            .filter(|e| e.call == CallType::LiquidationCall)
            .count() as u64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DroppedUser {
    pub wallet: String,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct CohortSplit {
    pub liquidation: Vec<WalletHistory>,
    pub non_liquidation: Vec<WalletHistory>,
    pub dropped: Vec<DroppedUser>,
}

/// Group sorted events into per-wallet histories with reconstructed
/// positions. Roster wallets without events get empty histories, so
/// zero-interaction wallets flow through the pipeline and pick up their
/// pinned score.
pub fn build_histories(
    events: &[TransactionEvent],
    roster: Option<&[String]>,
) -> Vec<WalletHistory> {
    let mut by_wallet: BTreeMap<String, Vec<TransactionEvent>> = BTreeMap::new();
    if let Some(wallets) = roster {
        for wallet in wallets {
            by_wallet.entry(wallet.clone()).or_default();
        }
    }
    for event in events {
        by_wallet.entry(event.wallet.clone()).or_default().push(event.clone());
    }

    by_wallet
        .into_iter()
        .map(|(wallet, events)| {
            let positions = reconstruct_positions(&events).positions;
            WalletHistory {
                wallet,
                events,
                positions,
            }
        })
        .collect()
}

/// Wallets with at least one LiquidationCall form the liquidation cohort.
/// Wallets whose event sequence yields a negative inter-event gap are
/// dropped and reported instead of polluting the time features.
pub fn split_cohorts(histories: Vec<WalletHistory>) -> CohortSplit {
    let mut split = CohortSplit::default();
    for history in histories {
        if let Some(gap) = first_negative_gap(&history.events) {
            split.dropped.push(DroppedUser {
                wallet: history.wallet.clone(),
                reason: format!("negative inter-event gap of {gap} seconds"),
            });
            continue;
        }
        if history.liquidation_count() > 0 {
            split.liquidation.push(history);
        } else {
            split.non_liquidation.push(history);
        }
    }
    split
}

fn first_negative_gap(events: &[TransactionEvent]) -> Option<i64> {
    events
        .windows(2)
        .map(|w| w[1].timestamp as i64 - w[0].timestamp as i64)
        .find(|gap| *gap < 0)
}
