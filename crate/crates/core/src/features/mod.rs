//! Behavioral feature extraction and scaling.
//!
//! Three feature categories per wallet: protocol interaction counts,
//! interaction timing, and volatility exposure, plus the liquidation count.
//! The concrete 13-column layout lives in [`FEATURE_SCHEMA`]; extend the
//! schema there if alternates need more columns.

mod extract;
mod io;
mod scaling;

pub use extract::extract_features;
pub use io::{read_feature_csv, read_scaling_json, write_feature_csv, write_scaling_json};
pub use scaling::{apply_scaling, fit_scaling, inverse_scaling, ColumnScaling, ScalingParams};

use crate::ingest::HealthFactor;
use serde::{Deserialize, Serialize};

pub const FEATURE_COUNT: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    /// Non-negative count; scaled with log1p.
    Count,
    /// Continuous value; standardized to mean 0 / std 1 on the fitting set.
    Continuous,
}

#[derive(Debug, Clone, Copy)]
pub struct FeatureColumn {
    pub name: &'static str,
    pub kind: FeatureKind,
}

/// The feature matrix layout, in column order.
pub const FEATURE_SCHEMA: [FeatureColumn; FEATURE_COUNT] = [
    FeatureColumn { name: "borrow_count", kind: FeatureKind::Count },
    FeatureColumn { name: "repay_count", kind: FeatureKind::Count },
    FeatureColumn { name: "deposit_count", kind: FeatureKind::Count },
    FeatureColumn { name: "usage_as_collateral_count", kind: FeatureKind::Count },
    FeatureColumn { name: "liquidation_call_count", kind: FeatureKind::Count },
    FeatureColumn { name: "position_count", kind: FeatureKind::Count },
    FeatureColumn { name: "account_age_days", kind: FeatureKind::Continuous },
    FeatureColumn { name: "mean_inter_event_gap_days", kind: FeatureKind::Continuous },
    FeatureColumn { name: "std_inter_event_gap_days", kind: FeatureKind::Continuous },
    FeatureColumn { name: "active_days", kind: FeatureKind::Count },
    FeatureColumn { name: "volatile_borrow_fraction", kind: FeatureKind::Continuous },
    FeatureColumn { name: "volatile_deposit_fraction", kind: FeatureKind::Continuous },
    FeatureColumn { name: "liquidation_count", kind: FeatureKind::Count },
];

/// Version tag written into the feature CSV header line.
pub const FEATURE_SCHEMA_VERSION: &str = "zscore.features.v1";

/// Per-wallet behavioral features (unscaled).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserFeatureVector {
    pub wallet: String,
    /// One count per call type, indexed by [`crate::ingest::CallType::index`].
    pub interaction_counts: [u64; 5],
    pub position_count: u64,
    pub account_age_days: f64,
    pub mean_inter_event_gap_days: f64,
    pub std_inter_event_gap_days: f64,
    pub active_days: u64,
    pub volatile_borrow_fraction: f64,
    pub volatile_deposit_fraction: f64,
    pub liquidation_count: u64,
    /// Lowest health factor seen across per-event snapshots; not part of
    /// the clustering matrix (the sentinel has no numeric encoding).
    pub min_health_factor: HealthFactor,
}

impl UserFeatureVector {
    /// Matrix row in [`FEATURE_SCHEMA`] column order.
    pub fn to_row(&self) -> [f64; FEATURE_COUNT] {
        [
            self.interaction_counts[0] as f64,
            self.interaction_counts[1] as f64,
            self.interaction_counts[2] as f64,
            self.interaction_counts[3] as f64,
            self.interaction_counts[4] as f64,
            self.position_count as f64,
            self.account_age_days,
            self.mean_inter_event_gap_days,
            self.std_inter_event_gap_days,
            self.active_days as f64,
            self.volatile_borrow_fraction,
            self.volatile_deposit_fraction,
            self.liquidation_count as f64,
        ]
    }

    /// A wallet that never touched the protocol. Such wallets are pinned
    /// to the entry score downstream.
    pub fn is_zero_interaction(&self) -> bool {
        self.interaction_counts.iter().all(|&c| c == 0)
    }
}

/// Feature matrix after scaling, with the parameters that produced it.
#[derive(Debug, Clone)]
pub struct ScaledMatrix {
    pub rows: Vec<Vec<f64>>,
    pub scaling_params: ScalingParams,
}

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("need at least 2 users to fit scaling, got {0}")]
    InsufficientData(usize),
    #[error("schema mismatch: expected {expected} columns, got {got}")]
    SchemaMismatch { expected: usize, got: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed feature file: {0}")]
    Malformed(String),
}
