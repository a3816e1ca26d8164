//! Deterministic synthetic populations with ground truth.
//!
//! Five behavioral archetypes drive event generation; a configured share of
//! wallets is forced through a LiquidationCall and a share stays dormant
//! (zero events) to exercise the entry-score pin. Same spec, same bytes.

use crate::ingest::{events_to_jsonl, CallType, TransactionEvent};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Base timestamp for generated histories (strictly positive).
const GENESIS: u64 = 1_700_000_000;
const SECONDS_PER_DAY: u64 = 86_400;

/// Archetype behavior knobs. Parameters for the default population live in
/// `fixtures/default_population.toml` so tests can cite exact expectations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeSpec {
    pub name: String,
    /// Relative share of the non-forced population.
    pub weight: f64,
    /// Events per active day, roughly.
    pub events_per_day: f64,
    /// Days between first and last activity.
    pub horizon_days: u32,
    /// Probability a Borrow or Deposit touches a volatile coin.
    pub volatility_preference: f64,
    /// Probability an open borrow gets repaid promptly.
    pub repayment_discipline: f64,
    /// Typical order of magnitude for amounts.
    pub amount_scale: f64,
    /// Whether members count as "new" in the ground truth (few borrows).
    pub is_new: bool,
    /// Members are forced through a LiquidationCall.
    pub liquidation_prone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationSpec {
    pub n_users: usize,
    /// Fraction of wallets forced through at least one LiquidationCall.
    pub liquidated_fraction: f64,
    /// Fraction of wallets drawn from "new user" archetypes.
    pub new_user_fraction: f64,
    /// Fraction of wallets with zero events (entry-score pins).
    pub dormant_fraction: f64,
    pub archetypes: Vec<ArchetypeSpec>,
    pub seed: u64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        desk_spec(2_000, 42)
    }
}

impl PopulationSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("spec serializes")
    }
}

/// Desk-scale default: proportions model a large lending-protocol user
/// base (≈3.3% liquidated, ≈46% relatively new) with a small dormant
/// share.
pub fn desk_spec(n_users: usize, seed: u64) -> PopulationSpec {
    PopulationSpec {
        n_users,
        liquidated_fraction: 0.033,
        new_user_fraction: 0.46,
        dormant_fraction: 0.02,
        archetypes: default_archetypes(),
        seed,
    }
}

/// The five standard archetypes, well separated in feature space.
pub fn default_archetypes() -> Vec<ArchetypeSpec> {
    vec![
        ArchetypeSpec {
            name: "disciplined-whale".into(),
            weight: 0.5,
            events_per_day: 2.0,
            horizon_days: 400,
            volatility_preference: 0.05,
            repayment_discipline: 0.98,
            amount_scale: 50_000.0,
            is_new: false,
            liquidation_prone: false,
        },
        ArchetypeSpec {
            name: "sporadic-degen".into(),
            weight: 0.5,
            events_per_day: 0.05,
            horizon_days: 300,
            volatility_preference: 0.95,
            repayment_discipline: 0.55,
            amount_scale: 800.0,
            is_new: false,
            liquidation_prone: false,
        },
        ArchetypeSpec {
            name: "new-cautious".into(),
            weight: 0.55,
            events_per_day: 0.4,
            horizon_days: 12,
            volatility_preference: 0.05,
            repayment_discipline: 0.95,
            amount_scale: 300.0,
            is_new: true,
            liquidation_prone: false,
        },
        ArchetypeSpec {
            name: "new-reckless".into(),
            weight: 0.45,
            events_per_day: 3.5,
            horizon_days: 10,
            volatility_preference: 0.9,
            repayment_discipline: 0.3,
            amount_scale: 150.0,
            is_new: true,
            liquidation_prone: false,
        },
        ArchetypeSpec {
            name: "liquidation-prone".into(),
            weight: 1.0,
            events_per_day: 1.2,
            horizon_days: 120,
            volatility_preference: 0.8,
            repayment_discipline: 0.2,
            amount_scale: 5_000.0,
            is_new: false,
            liquidation_prone: true,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRow {
    pub wallet: String,
    pub archetype: String,
    pub liquidated: bool,
    pub is_new: bool,
}

#[derive(Debug, Clone)]
pub struct Population {
    /// Events across all wallets, sorted by (timestamp, block_id).
    pub events: Vec<TransactionEvent>,
    pub ground_truth: Vec<GroundTruthRow>,
    /// Liquidation thresholds for the coins the generator uses.
    pub thresholds: Vec<(String, String, f64)>,
}

impl Population {
    pub fn events_jsonl(&self) -> String {
        events_to_jsonl(&self.events)
    }

    pub fn ground_truth_csv(&self) -> String {
        let mut out = String::from("wallet,archetype,liquidated,is_new\n");
        for row in &self.ground_truth {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.wallet, row.archetype, row.liquidated, row.is_new
            ));
        }
        out
    }

    pub fn thresholds_csv(&self) -> String {
        let mut out = String::from("coin,chain,threshold\n");
        for (coin, chain, threshold) in &self.thresholds {
            out.push_str(&format!("{coin},{chain},{threshold}\n"));
        }
        out
    }

    pub fn wallets(&self) -> Vec<String> {
        self.ground_truth.iter().map(|r| r.wallet.clone()).collect()
    }
}

/// Stable coins sit at low thresholds, volatile ones high, so the median
/// split classifies them the way the archetypes expect.
fn coin_menu() -> (Vec<&'static str>, Vec<&'static str>) {
    (
        vec!["USDC", "DAI", "USDT"],       // stable: thresholds ≤ median
        vec!["WETH", "WBTC", "LINK", "UNI"], // volatile: above median
    )
}

pub fn threshold_rows() -> Vec<(String, String, f64)> {
    let (stable, volatile) = coin_menu();
    let mut rows = Vec::new();
    for (i, coin) in stable.iter().enumerate() {
        rows.push((coin.to_string(), "eth".to_string(), 0.20 + 0.02 * i as f64));
        rows.push((coin.to_string(), "arb".to_string(), 0.22 + 0.02 * i as f64));
    }
    for (i, coin) in volatile.iter().enumerate() {
        rows.push((coin.to_string(), "eth".to_string(), 0.70 + 0.04 * i as f64));
    }
    rows
}

/// Generate a population. Wallet count splits exactly: dormant and
/// liquidated counts are `round(fraction · n)`, new users fill their share
/// from the `is_new` archetypes, and everyone else draws from the veteran
/// archetypes by weight.
pub fn generate(spec: &PopulationSpec) -> Population {
    let n = spec.n_users;
    let n_dormant = (spec.dormant_fraction * n as f64).round() as usize;
    let n_liquidated = (spec.liquidated_fraction * n as f64).round() as usize;
    let n_new = ((spec.new_user_fraction * n as f64).round() as usize)
        .min(n.saturating_sub(n_dormant + n_liquidated));

    let liq_archetypes: Vec<&ArchetypeSpec> =
        spec.archetypes.iter().filter(|a| a.liquidation_prone).collect();
    let new_archetypes: Vec<&ArchetypeSpec> = spec
        .archetypes
        .iter()
        .filter(|a| a.is_new && !a.liquidation_prone)
        .collect();
    let veteran_archetypes: Vec<&ArchetypeSpec> = spec
        .archetypes
        .iter()
        .filter(|a| !a.is_new && !a.liquidation_prone)
        .collect();

    let mut events = Vec::new();
    let mut ground_truth = Vec::with_capacity(n);

    for index in 0..n {
        let wallet = format!("0x{index:06x}");
        let mut rng = wallet_rng(spec.seed, index as u64);

        let (archetype, forced_liquidation) = if index < n_dormant {
            (None, false)
        } else if index < n_dormant + n_liquidated {
            (pick_weighted(&liq_archetypes, &mut rng), true)
        } else if index < n_dormant + n_liquidated + n_new {
            (pick_weighted(&new_archetypes, &mut rng), false)
        } else {
            (pick_weighted(&veteran_archetypes, &mut rng), false)
        };

        match archetype {
            None => ground_truth.push(GroundTruthRow {
                wallet,
                archetype: "dormant".into(),
                liquidated: false,
                is_new: true,
            }),
            Some(archetype) => {
                let wallet_events =
                    generate_wallet(&wallet, archetype, forced_liquidation, &mut rng);
                let liquidated = wallet_events
                    .iter()
                    .any(|e| e.call == CallType::LiquidationCall);
                events.extend(wallet_events);
                ground_truth.push(GroundTruthRow {
                    wallet,
                    archetype: archetype.name.clone(),
                    liquidated,
                    is_new: archetype.is_new,
                });
            }
        }
    }

    events.sort_by_key(TransactionEvent::sort_key);
    Population {
        events,
        ground_truth,
        thresholds: threshold_rows(),
    }
}

fn wallet_rng(seed: u64, index: u64) -> ChaCha8Rng {
    // Per-wallet stream derived from the global seed and index.
    ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17))
}

fn pick_weighted<'a>(
    archetypes: &[&'a ArchetypeSpec],
    rng: &mut ChaCha8Rng,
) -> Option<&'a ArchetypeSpec> {
    if archetypes.is_empty() {
        return None;
    }
    let total: f64 = archetypes.iter().map(|a| a.weight).sum();
    let mut target = rng.random::<f64>() * total;
    for archetype in archetypes {
        target -= archetype.weight;
        if target <= 0.0 {
            return Some(archetype);
        }
    }
    archetypes.last().copied()
}

fn generate_wallet(
    wallet: &str,
    archetype: &ArchetypeSpec,
    forced_liquidation: bool,
    rng: &mut ChaCha8Rng,
) -> Vec<TransactionEvent> {
    let (stable, volatile) = coin_menu();
    let mut events = Vec::new();
    let start = GENESIS + rng.random_range(0..30) * SECONDS_PER_DAY;
    let horizon = u64::from(archetype.horizon_days.max(1));
    let total_events = ((archetype.events_per_day * horizon as f64).round() as usize).max(2);

    let mut block = rng.random_range(1_000_000..2_000_000u64);
    let mut timestamp = start;
    let gap = (horizon * SECONDS_PER_DAY) / total_events as u64;

    let pick_coin = |rng: &mut ChaCha8Rng| -> String {
        if rng.random::<f64>() < archetype.volatility_preference {
            volatile[rng.random_range(0..volatile.len())].to_string()
        } else {
            stable[rng.random_range(0..stable.len())].to_string()
        }
    };
    let mut push = |call: CallType, amount: f64, coin: String, ts: u64, block: u64| {
        events.push(TransactionEvent {
            chain: "eth".into(),
            block_id: block,
            wallet: wallet.into(),
            call,
            amount: (amount * 100.0).round() / 100.0,
            coin,
            timestamp: ts,
        });
    };

    // Seed collateral first so health factors stay meaningful.
    let deposit_coin = pick_coin(rng);
    push(
        CallType::Deposit,
        archetype.amount_scale * rng.random_range(1.5..3.0),
        deposit_coin.clone(),
        timestamp,
        block,
    );
    push(
        CallType::UsageAsCollateral,
        archetype.amount_scale * rng.random_range(0.2..0.6),
        deposit_coin,
        timestamp + 1,
        block + 1,
    );

    let mut open_borrows: Vec<(String, f64)> = Vec::new();
    for _ in 0..total_events {
        timestamp += gap.max(60) + rng.random_range(0..=gap.max(60) / 2);
        block += rng.random_range(1..50);
        let roll: f64 = rng.random();
        if roll < 0.45 {
            let coin = pick_coin(rng);
            let amount = archetype.amount_scale * rng.random_range(0.1..1.0);
            open_borrows.push((coin.clone(), amount));
            push(CallType::Borrow, amount, coin, timestamp, block);
        } else if roll < 0.45 + 0.35 {
            if let Some((coin, owed)) = open_borrows.pop() {
                let fully = rng.random::<f64>() < archetype.repayment_discipline;
                let amount = if fully { owed } else { owed * rng.random_range(0.2..0.8) };
                push(CallType::Repay, amount, coin, timestamp, block);
            } else {
                let coin = pick_coin(rng);
                push(
                    CallType::Deposit,
                    archetype.amount_scale * rng.random_range(0.1..0.5),
                    coin,
                    timestamp,
                    block,
                );
            }
        } else {
            let coin = pick_coin(rng);
            push(
                CallType::Deposit,
                archetype.amount_scale * rng.random_range(0.1..0.5),
                coin,
                timestamp,
                block,
            );
        }
    }

    if forced_liquidation {
        for _ in 0..rng.random_range(1..=2u32) {
            timestamp += gap.max(60);
            block += 1;
            let (coin, amount) = open_borrows
                .last()
                .cloned()
                .unwrap_or_else(|| (pick_coin(rng), archetype.amount_scale * 0.5));
            push(CallType::LiquidationCall, amount, coin, timestamp, block);
        }
    }

    events
}

/// Synthetic labeled dataset for exercising the scoring network directly:
/// per-cluster Gaussian feature blobs over the standard schema width, with
/// disjoint intervals already assigned. The unscaled vectors are nominal —
/// only the scaled rows, cluster ids, and intervals matter to the network.
pub fn labeled_fixture(
    n_users: usize,
    n_clusters: usize,
    seed: u64,
) -> crate::label::LabeledDataset {
    labeled_fixture_dims(n_users, n_clusters, crate::features::FEATURE_COUNT, seed)
}

/// [`labeled_fixture`] with a custom feature width (micro-network tests).
pub fn labeled_fixture_dims(
    n_users: usize,
    n_clusters: usize,
    n_features: usize,
    seed: u64,
) -> crate::label::LabeledDataset {
    use crate::features::UserFeatureVector;
    use crate::ingest::HealthFactor;
    use crate::label::{LabeledDataset, LabeledRow, ScoreInterval};

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..n_clusters)
        .map(|_| (0..n_features).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();

    let width = 80.min(850 / n_clusters.max(1)) as u16;
    let intervals: Vec<ScoreInterval> = (0..n_clusters)
        .map(|c| {
            let lower = 10 + (c as u16) * (width + 10);
            ScoreInterval {
                cluster_id: c as i64,
                lower,
                upper: lower + width,
            }
        })
        .collect();

    let rows = (0..n_users)
        .map(|i| {
            let cluster = i % n_clusters;
            let scaled: Vec<f64> = centers[cluster]
                .iter()
                .map(|&c| c + rng.random_range(-0.5..0.5))
                .collect();
            LabeledRow {
                features: UserFeatureVector {
                    wallet: format!("0x{i:06x}"),
                    interaction_counts: [1, 0, 0, 0, 0],
                    position_count: 1,
                    account_age_days: 1.0,
                    mean_inter_event_gap_days: 1.0,
                    std_inter_event_gap_days: 0.0,
                    active_days: 1,
                    volatile_borrow_fraction: 0.0,
                    volatile_deposit_fraction: 0.0,
                    liquidation_count: 0,
                    min_health_factor: HealthFactor::Healthy,
                },
                scaled,
                cluster_id: cluster as i64,
                interval: intervals[cluster],
                pinned: false,
            }
        })
        .collect();
    LabeledDataset { rows }
}
