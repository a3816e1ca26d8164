//! Coin volatility classification from liquidation thresholds.

use super::IngestError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::BufRead;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VolatilityClass {
    Volatile,
    NonVolatile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolatilityEntry {
    pub avg_threshold: f64,
    pub class: VolatilityClass,
}

/// One liquidation-threshold observation for a coin on one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRow {
    pub coin: String,
    pub chain: String,
    pub threshold: f64,
}

/// Per-coin average liquidation threshold and the volatility class from the
/// median split over those averages.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CoinVolatilityTable {
    pub entries: BTreeMap<String, VolatilityEntry>,
    /// When set, the median split is flipped: coins above the median are
    /// classed NonVolatile instead. Default keeps lower thresholds on the
    /// non-volatile side.
    pub inverted: bool,
}

impl CoinVolatilityTable {
    /// Coins absent from the table default to Volatile.
    pub fn class_of(&self, coin: &str) -> VolatilityClass {
        self.entries
            .get(coin)
            .map(|e| e.class)
            .unwrap_or(VolatilityClass::Volatile)
    }

    /// Average liquidation threshold for a coin, if known.
    pub fn avg_threshold_of(&self, coin: &str) -> Option<f64> {
        self.entries.get(coin).map(|e| e.avg_threshold)
    }
}

/// Build the volatility table: thresholds are averaged per coin across
/// chains, and coins at or below the median average are NonVolatile
/// (flipped when `inverted`).
pub fn build_volatility_table(
    rows: &[ThresholdRow],
    inverted: bool,
) -> Result<CoinVolatilityTable, IngestError> {
    if rows.is_empty() {
        return Err(IngestError::EmptyTable);
    }
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for row in rows {
        if !(0.0..=1.0).contains(&row.threshold) || !row.threshold.is_finite() {
            return Err(IngestError::ThresholdOutOfRange {
                coin: row.coin.clone(),
                chain: row.chain.clone(),
                value: row.threshold,
            });
        }
        let slot = sums.entry(&row.coin).or_insert((0.0, 0));
        slot.0 += row.threshold;
        slot.1 += 1;
    }

    let averages: BTreeMap<&str, f64> = sums
        .into_iter()
        .map(|(coin, (sum, n))| (coin, sum / n as f64))
        .collect();
    let median = median_of(averages.values().copied().collect());

    let entries = averages
        .into_iter()
        .map(|(coin, avg)| {
            let below = avg <= median;
            let class = match below != inverted {
                true => VolatilityClass::NonVolatile,
                false => VolatilityClass::Volatile,
            };
            (
                coin.to_string(),
                VolatilityEntry {
                    avg_threshold: avg,
                    class,
                },
            )
        })
        .collect();

    Ok(CoinVolatilityTable { entries, inverted })
}

fn median_of(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite thresholds"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Read a `coin,chain,threshold` CSV (header required).
pub fn read_threshold_csv<R: BufRead>(reader: R) -> Result<Vec<ThresholdRow>, IngestError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv_reader.headers()?.clone();
    let pos = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingHeader(name.to_string()))
    };
    let (coin_col, chain_col, threshold_col) = (pos("coin")?, pos("chain")?, pos("threshold")?);

    let mut rows = Vec::new();
    for record in csv_reader.records() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("").to_string();
        let threshold = field(threshold_col).parse::<f64>().unwrap_or(f64::NAN);
        rows.push(ThresholdRow {
            coin: field(coin_col),
            chain: field(chain_col),
            threshold,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(coin: &str, chain: &str, threshold: f64) -> ThresholdRow {
        ThresholdRow {
            coin: coin.into(),
            chain: chain.into(),
            threshold,
        }
    }

    #[test]
    fn multi_chain_thresholds_average() {
        let table =
            build_volatility_table(&[row("A", "eth", 0.4), row("A", "arb", 0.6)], false).unwrap();
        assert_eq!(table.avg_threshold_of("A"), Some(0.5));
    }

    #[test]
    fn median_split_assigns_classes() {
        let table =
            build_volatility_table(&[row("A", "eth", 0.5), row("B", "eth", 0.9)], false).unwrap();
        assert_eq!(table.class_of("A"), VolatilityClass::NonVolatile);
        assert_eq!(table.class_of("B"), VolatilityClass::Volatile);
    }

    #[test]
    fn single_coin_is_non_volatile() {
        let table = build_volatility_table(&[row("A", "eth", 0.8)], false).unwrap();
        assert_eq!(table.class_of("A"), VolatilityClass::NonVolatile);
    }

    #[test]
    fn unknown_coin_defaults_volatile() {
        let table = build_volatility_table(&[row("A", "eth", 0.8)], false).unwrap();
        assert_eq!(table.class_of("MYSTERY"), VolatilityClass::Volatile);
    }

    #[test]
    fn inverted_flag_flips_classes() {
        let table =
            build_volatility_table(&[row("A", "eth", 0.5), row("B", "eth", 0.9)], true).unwrap();
        assert_eq!(table.class_of("A"), VolatilityClass::Volatile);
        assert_eq!(table.class_of("B"), VolatilityClass::NonVolatile);
    }

    #[test]
    fn classes_are_scale_equivariant() {
        let base = [row("A", "e", 0.2), row("B", "e", 0.5), row("C", "e", 0.9)];
        let scaled: Vec<ThresholdRow> = base
            .iter()
            .map(|r| row(&r.coin, &r.chain, r.threshold * 0.5))
            .collect();
        let t1 = build_volatility_table(&base, false).unwrap();
        let t2 = build_volatility_table(&scaled, false).unwrap();
        for coin in ["A", "B", "C"] {
            assert_eq!(t1.class_of(coin), t2.class_of(coin));
        }
    }

    #[test]
    fn out_of_range_threshold_is_fatal() {
        let err = build_volatility_table(&[row("A", "eth", 1.2)], false).unwrap_err();
        assert!(matches!(err, IngestError::ThresholdOutOfRange { .. }));
        assert!(matches!(
            build_volatility_table(&[], false).unwrap_err(),
            IngestError::EmptyTable
        ));
    }

    #[test]
    fn threshold_csv_parses() {
        let rows = read_threshold_csv("coin,chain,threshold\nUSDC,eth,0.78\n".as_bytes()).unwrap();
        assert_eq!(rows, vec![row("USDC", "eth", 0.78)]);
    }
}
