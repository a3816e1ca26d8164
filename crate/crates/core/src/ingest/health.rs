//! Health-factor bookkeeping.

use super::{CallType, CoinVolatilityTable, TransactionEvent, DEBT_EPSILON};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Liquidation threshold assumed for coins the table does not cover.
const UNKNOWN_COIN_THRESHOLD: f64 = 0.5;

/// Health factor of a wallet; `Healthy` is the zero-borrow sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HealthFactor {
    Healthy,
    Value(f64),
}

impl HealthFactor {
    pub fn is_at_risk(&self) -> bool {
        matches!(self, HealthFactor::Value(v) if *v < 1.0)
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            HealthFactor::Healthy => None,
            HealthFactor::Value(v) => Some(*v),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HealthSnapshot {
    pub wallet: String,
    pub timestamp: u64,
    pub total_collateral_value: f64,
    pub weighted_avg_liquidation_threshold: f64,
    pub total_borrow_value: f64,
    pub hf: HealthFactor,
}

/// collateral × weighted threshold ÷ borrow, with the zero-borrow sentinel.
pub fn health_factor(collateral: f64, weighted_lt: f64, borrow: f64) -> HealthFactor {
    if borrow <= DEBT_EPSILON {
        HealthFactor::Healthy
    } else {
        HealthFactor::Value(collateral * weighted_lt / borrow)
    }
}

/// One snapshot after every event of a single wallet (events sorted).
///
/// Collateral is cumulative Deposit + UsageAsCollateral value minus
/// liquidated value per coin; borrow value mirrors position debt
/// bookkeeping (Borrow adds, Repay subtracts, clamped at zero).
pub fn health_series(
    events: &[TransactionEvent],
    table: &CoinVolatilityTable,
) -> Vec<HealthSnapshot> {
    let mut collateral: BTreeMap<&str, f64> = BTreeMap::new();
    let mut debt: BTreeMap<&str, f64> = BTreeMap::new();
    let mut snapshots = Vec::with_capacity(events.len());

    for event in events {
        match event.call {
            CallType::Deposit | CallType::UsageAsCollateral => {
                *collateral.entry(&event.coin).or_insert(0.0) += event.amount;
            }
            CallType::LiquidationCall => {
                let slot = collateral.entry(&event.coin).or_insert(0.0);
                *slot = (*slot - event.amount).max(0.0);
            }
            CallType::Borrow => {
                *debt.entry(&event.coin).or_insert(0.0) += event.amount;
            }
            CallType::Repay => {
                let slot = debt.entry(&event.coin).or_insert(0.0);
                *slot = (*slot - event.amount).max(0.0);
            }
        }

        let total_collateral: f64 = collateral.values().sum();
        let weighted_lt = if total_collateral > 0.0 {
            collateral
                .iter()
                .map(|(coin, value)| {
                    value * table.avg_threshold_of(coin).unwrap_or(UNKNOWN_COIN_THRESHOLD)
                })
                .sum::<f64>()
                / total_collateral
        } else {
            0.0
        };
        let total_borrow: f64 = debt.values().sum();

        snapshots.push(HealthSnapshot {
            wallet: event.wallet.clone(),
            timestamp: event.timestamp,
            total_collateral_value: total_collateral,
            weighted_avg_liquidation_threshold: weighted_lt,
            total_borrow_value: total_borrow,
            hf: health_factor(total_collateral, weighted_lt, total_borrow),
        });
    }
    snapshots
}
