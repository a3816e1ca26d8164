//! Feature extraction from one wallet's history.

use super::UserFeatureVector;
use crate::ingest::{
    health_series, CallType, CoinVolatilityTable, HealthFactor, VolatilityClass, WalletHistory,
};

const SECONDS_PER_DAY: f64 = 86_400.0;

/// Turn a wallet history into its feature vector. Deterministic: events are
/// re-sorted internally so input order cannot leak into the features. A
/// wallet with no events yields all-zero counts and durations.
pub fn extract_features(
    history: &WalletHistory,
    volatility: &CoinVolatilityTable,
) -> UserFeatureVector {
    let mut events = history.events.clone();
    events.sort_by_key(|e| e.sort_key());

    let mut interaction_counts = [0u64; 5];
    for event in &events {
        interaction_counts[event.call.index()] += 1;
    }

    let (mean_gap, std_gap) = gap_stats(&events);
    let account_age_days = match (events.first(), events.last()) {
        (Some(first), Some(last)) => (last.timestamp - first.timestamp) as f64 / SECONDS_PER_DAY,
        _ => 0.0,
    };
    let mut days: Vec<u64> = events
        .iter()
        .map(|e| e.timestamp / SECONDS_PER_DAY as u64)
        .collect();
    days.sort_unstable();
    days.dedup();

    let min_health_factor = health_series(&events, volatility)
        .iter()
        .filter_map(|s| s.hf.value())
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
        .map_or(HealthFactor::Healthy, HealthFactor::Value);

    UserFeatureVector {
        wallet: history.wallet.clone(),
        interaction_counts,
        position_count: history.positions.len() as u64,
        account_age_days,
        mean_inter_event_gap_days: mean_gap,
        std_inter_event_gap_days: std_gap,
        active_days: days.len() as u64,
        volatile_borrow_fraction: volatile_fraction(&events, CallType::Borrow, volatility),
        volatile_deposit_fraction: volatile_fraction(&events, CallType::Deposit, volatility),
        liquidation_count: interaction_counts[CallType::LiquidationCall.index()],
        min_health_factor,
    }
}

fn gap_stats(events: &[crate::ingest::TransactionEvent]) -> (f64, f64) {
    if events.len() < 2 {
        return (0.0, 0.0);
    }
    let gaps: Vec<f64> = events
        .windows(2)
        .map(|w| (w[1].timestamp - w[0].timestamp) as f64 / SECONDS_PER_DAY)
        .collect();
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / gaps.len() as f64;
    (mean, var.sqrt())
}

fn volatile_fraction(
    events: &[crate::ingest::TransactionEvent],
    call: CallType,
    volatility: &CoinVolatilityTable,
) -> f64 {
    let of_call: Vec<_> = events.iter().filter(|e| e.call == call).collect();
    if of_call.is_empty() {
        return 0.0;
    }
    let volatile = of_call
        .iter()
        .filter(|e| volatility.class_of(&e.coin) == VolatilityClass::Volatile)
        .count();
    volatile as f64 / of_call.len() as f64
}
