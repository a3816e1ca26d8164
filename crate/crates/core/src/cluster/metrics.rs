//! External cluster-agreement metrics.

use std::collections::BTreeMap;

/// Adjusted Rand index between two labelings of the same rows. 1.0 means
/// identical partitions, ~0 means chance-level agreement.
pub fn adjusted_rand_index(a: &[i64], b: &[i64]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same rows");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }

    let mut contingency: BTreeMap<(i64, i64), u64> = BTreeMap::new();
    let mut rows: BTreeMap<i64, u64> = BTreeMap::new();
    let mut cols: BTreeMap<i64, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *contingency.entry((x, y)).or_insert(0) += 1;
        *rows.entry(x).or_insert(0) += 1;
        *cols.entry(y).or_insert(0) += 1;
    }

    let choose2 = |m: u64| (m * m.saturating_sub(1) / 2) as f64;
    let sum_cells: f64 = contingency.values().map(|&c| choose2(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(n as u64);

    let expected = sum_rows * sum_cols / total;
    let max_index = (sum_rows + sum_cols) / 2.0;
    if (max_index - expected).abs() < 1e-15 {
        return 1.0;
    }
    (sum_cells - expected) / (max_index - expected)
}
