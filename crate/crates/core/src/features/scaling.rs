//! Count and continuous-feature scaling.

use super::{FeatureError, FeatureKind, ScaledMatrix, UserFeatureVector, FEATURE_COUNT, FEATURE_SCHEMA};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScalingMethod {
    /// x ↦ ln(1 + x); inverse is expm1.
    Log1p,
    /// x ↦ (x − mean) / std on the fitting set; zero-variance columns pass
    /// through centered at zero.
    Standardize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub method: ScalingMethod,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub columns: Vec<ColumnScaling>,
}

/// Fit scaling on a population: counts get log1p, continuous features get
/// standardization with fitting-set mean and std.
pub fn fit_scaling(vectors: &[UserFeatureVector]) -> Result<ScalingParams, FeatureError> {
    if vectors.len() < 2 {
        return Err(FeatureError::InsufficientData(vectors.len()));
    }
    let rows: Vec<[f64; FEATURE_COUNT]> = vectors.iter().map(UserFeatureVector::to_row).collect();
    let n = rows.len() as f64;

    let columns = FEATURE_SCHEMA
        .iter()
        .enumerate()
        .map(|(j, column)| match column.kind {
            FeatureKind::Count => ColumnScaling {
                method: ScalingMethod::Log1p,
                mean: 0.0,
                std: 1.0,
            },
            FeatureKind::Continuous => {
                let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
                let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
                ColumnScaling {
                    method: ScalingMethod::Standardize,
                    mean,
                    std: var.sqrt(),
                }
            }
        })
        .collect();

    Ok(ScalingParams { columns })
}

/// Apply fitted params; pure, usable on held-out vectors.
pub fn apply_scaling(
    vectors: &[UserFeatureVector],
    params: &ScalingParams,
) -> Result<ScaledMatrix, FeatureError> {
    if params.columns.len() != FEATURE_COUNT {
        return Err(FeatureError::SchemaMismatch {
            expected: FEATURE_COUNT,
            got: params.columns.len(),
        });
    }
    let rows = vectors
        .iter()
        .map(|v| {
            v.to_row()
                .iter()
                .zip(&params.columns)
                .map(|(&x, c)| scale_value(x, c))
                .collect()
        })
        .collect();
    Ok(ScaledMatrix {
        rows,
        scaling_params: params.clone(),
    })
}

fn scale_value(x: f64, column: &ColumnScaling) -> f64 {
    match column.method {
        ScalingMethod::Log1p => x.ln_1p(),
        ScalingMethod::Standardize => {
            if column.std > 0.0 {
                (x - column.mean) / column.std
            } else {
                x - column.mean
            }
        }
    }
}

/// Invert one scaled row back to raw feature space.
pub fn inverse_scaling(row: &[f64], params: &ScalingParams) -> Result<Vec<f64>, FeatureError> {
    if row.len() != params.columns.len() {
        return Err(FeatureError::SchemaMismatch {
            expected: params.columns.len(),
            got: row.len(),
        });
    }
    Ok(row
        .iter()
        .zip(&params.columns)
        .map(|(&v, c)| match c.method {
            ScalingMethod::Log1p => v.exp_m1(),
            ScalingMethod::Standardize => {
                if c.std > 0.0 {
                    v * c.std + c.mean
                } else {
                    v + c.mean
                }
            }
        })
        .collect())
}
