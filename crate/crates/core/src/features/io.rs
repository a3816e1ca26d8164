//! Feature-matrix CSV and scaling-params JSON persistence.

use super::{
    FeatureError, ScalingParams, UserFeatureVector, FEATURE_COUNT, FEATURE_SCHEMA,
    FEATURE_SCHEMA_VERSION,
};
use crate::ingest::HealthFactor;
use std::io::{BufRead, Write};

/// Write the feature matrix: a schema-version line, a header row, then one
/// row per wallet. `min_health_factor` serializes to an empty field for the
/// healthy sentinel.
pub fn write_feature_csv<W: Write>(
    writer: &mut W,
    vectors: &[UserFeatureVector],
) -> Result<(), FeatureError> {
    writeln!(writer, "# schema: {FEATURE_SCHEMA_VERSION}")?;
    let names: Vec<&str> = FEATURE_SCHEMA.iter().map(|c| c.name).collect();
    writeln!(writer, "wallet,{},min_health_factor", names.join(","))?;
    for vector in vectors {
        let row = vector.to_row();
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        let hf = match vector.min_health_factor {
            HealthFactor::Healthy => String::new(),
            HealthFactor::Value(v) => format!("{v}"),
        };
        writeln!(writer, "{},{},{}", vector.wallet, cells.join(","), hf)?;
    }
    Ok(())
}

/// Read a feature matrix written by [`write_feature_csv`], validating the
/// schema version.
pub fn read_feature_csv<R: BufRead>(reader: R) -> Result<Vec<UserFeatureVector>, FeatureError> {
    let mut lines = reader.lines();
    let version = lines
        .next()
        .ok_or_else(|| FeatureError::Malformed("empty feature file".into()))??;
    let expected = format!("# schema: {FEATURE_SCHEMA_VERSION}");
    if version != expected {
        return Err(FeatureError::Malformed(format!(
            "unsupported schema line `{version}` (expected `{expected}`)"
        )));
    }
    let _header = lines
        .next()
        .ok_or_else(|| FeatureError::Malformed("missing header row".into()))??;

    let mut vectors = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != FEATURE_COUNT + 2 {
            return Err(FeatureError::Malformed(format!(
                "expected {} fields, got {}",
                FEATURE_COUNT + 2,
                cells.len()
            )));
        }
        let parse = |s: &str| -> Result<f64, FeatureError> {
            s.parse::<f64>()
                .map_err(|_| FeatureError::Malformed(format!("bad number `{s}`")))
        };
        let num: Vec<f64> = cells[1..=FEATURE_COUNT]
            .iter()
            .map(|s| parse(s))
            .collect::<Result<_, _>>()?;
        let min_health_factor = match cells[FEATURE_COUNT + 1] {
            "" => HealthFactor::Healthy,
            s => HealthFactor::Value(parse(s)?),
        };
        vectors.push(UserFeatureVector {
            wallet: cells[0].to_string(),
            interaction_counts: [
                num[0] as u64,
                num[1] as u64,
                num[2] as u64,
                num[3] as u64,
                num[4] as u64,
            ],
            position_count: num[5] as u64,
            account_age_days: num[6],
            mean_inter_event_gap_days: num[7],
            std_inter_event_gap_days: num[8],
            active_days: num[9] as u64,
            volatile_borrow_fraction: num[10],
            volatile_deposit_fraction: num[11],
            liquidation_count: num[12] as u64,
            min_health_factor,
        });
    }
    Ok(vectors)
}

pub fn write_scaling_json(params: &ScalingParams) -> String {
    serde_json::to_string_pretty(params).expect("scaling params serialize")
}

pub fn read_scaling_json(text: &str) -> Result<ScalingParams, FeatureError> {
    serde_json::from_str(text).map_err(|e| FeatureError::Malformed(e.to_string()))
}
