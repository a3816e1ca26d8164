//! Lending-protocol event ingestion.
//!
//! Parses raw wallet-level call logs (JSONL or CSV), reconstructs borrowing
//! positions per (wallet, coin), derives health-factor series, classifies
//! coin volatility from liquidation thresholds, and splits wallets into the
//! liquidation / non-liquidation cohorts.

mod cohorts;
mod health;
mod parse;
mod positions;
mod volatility;

pub use cohorts::{build_histories, split_cohorts, Cohort, CohortSplit, DroppedUser, WalletHistory};
pub use health::{health_factor, health_series, HealthFactor, HealthSnapshot};
pub use parse::{
    events_to_jsonl, parse_events, LogFormat, ParseOutcome, RejectReason, RejectedRow,
};
pub use positions::{
    reconstruct_positions, AnomalyKind, Position, PositionAnomaly, PositionStatus,
    ReconstructOutcome,
};
pub use volatility::{
    build_volatility_table, read_threshold_csv, CoinVolatilityTable, ThresholdRow,
    VolatilityClass, VolatilityEntry,
};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Outstanding debt below this is treated as zero when closing positions.
pub const DEBT_EPSILON: f64 = 1e-9;

/// The five wallet-level protocol calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CallType {
    Borrow,
    Repay,
    Deposit,
    UsageAsCollateral,
    LiquidationCall,
}

impl CallType {
    pub const ALL: [CallType; 5] = [
        CallType::Borrow,
        CallType::Repay,
        CallType::Deposit,
        CallType::UsageAsCollateral,
        CallType::LiquidationCall,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CallType::Borrow => "Borrow",
            CallType::Repay => "Repay",
            CallType::Deposit => "Deposit",
            CallType::UsageAsCollateral => "UsageAsCollateral",
            CallType::LiquidationCall => "LiquidationCall",
        }
    }

    /// Index into per-call count arrays; order matches [`CallType::ALL`].
    pub fn index(&self) -> usize {
        match self {
            CallType::Borrow => 0,
            CallType::Repay => 1,
            CallType::Deposit => 2,
            CallType::UsageAsCollateral => 3,
            CallType::LiquidationCall => 4,
        }
    }
}

impl fmt::Display for CallType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CallType {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Borrow" => Ok(CallType::Borrow),
            "Repay" => Ok(CallType::Repay),
            "Deposit" => Ok(CallType::Deposit),
            "UsageAsCollateral" => Ok(CallType::UsageAsCollateral),
            "LiquidationCall" => Ok(CallType::LiquidationCall),
            _ => Err(()),
        }
    }
}

/// One wallet-level protocol call.
///
/// Amounts are assumed pre-normalized to a common value unit at ingest;
/// no price-feed conversion happens here.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransactionEvent {
    pub chain: String,
    pub block_id: u64,
    pub wallet: String,
    pub call: CallType,
    #[serde(serialize_with = "serialize_amount")]
    pub amount: f64,
    pub coin: String,
    pub timestamp: u64,
}

fn serialize_amount<S: serde::Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{v}"))
}

impl TransactionEvent {
    /// Sort key: (timestamp, block_id) ascending.
    pub fn sort_key(&self) -> (u64, u64) {
        (self.timestamp, self.block_id)
    }
}

/// Fatal ingest failures. Row-level problems are never fatal; they land in
/// the rejects report instead.
#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv header is missing required column `{0}`")]
    MissingHeader(String),
    #[error("liquidation-threshold table is empty")]
    EmptyTable,
    #[error("threshold out of [0,1] for coin `{coin}` on chain `{chain}`: {value}")]
    ThresholdOutOfRange {
        coin: String,
        chain: String,
        value: f64,
    },
}
