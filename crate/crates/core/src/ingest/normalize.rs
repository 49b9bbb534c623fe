//! Per-sample-column median normalization.
//!
//! A sample column is one `(condition, replicate, temperature)` triple across
//! all proteins — the TPP analogue of one TMT channel in one run. Each column
//! is rescaled so its median matches the reference median (the median of all
//! column medians), which removes per-channel loading differences while
//! preserving within-protein structure.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{Condition, RawMeasurement};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct ColumnNormalization {
    pub condition: Condition,
    pub replicate: u32,
    pub temperature: f64,
    /// Median of the column before scaling.
    pub median: f64,
    /// Factor the column was multiplied by.
    pub factor: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalizationReport {
    pub reference_median: f64,
    pub columns: Vec<ColumnNormalization>,
}

/// Median of a nonempty slice (mean of the middle two for even lengths).
pub(crate) fn median(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn column_name(condition: Condition, replicate: u32, temperature: f64) -> String {
    let c = match condition {
        Condition::Control => "control",
        Condition::Perturbation => "perturbation",
    };
    format!("({c}, replicate {replicate}, {temperature} C)")
}

/// Scale every sample column to the common reference median, in place.
/// Columns with no present abundances or a zero median are fatal errors.
pub fn median_normalize(measurements: &mut [RawMeasurement]) -> Result<NormalizationReport> {
    // Keyed by (condition, replicate, temperature bits); BTreeMap for a
    // deterministic column order.
    let mut columns: BTreeMap<(Condition, u32, u64), Vec<usize>> = BTreeMap::new();
    for (i, m) in measurements.iter().enumerate() {
        columns
            .entry((m.condition, m.replicate, m.temperature.to_bits()))
            .or_default()
            .push(i);
    }

    let mut medians = Vec::with_capacity(columns.len());
    for (&(condition, replicate, temp_bits), indices) in &columns {
        let temperature = f64::from_bits(temp_bits);
        let present: Vec<f64> = indices
            .iter()
            .filter_map(|&i| measurements[i].abundance)
            .collect();
        if present.is_empty() {
            return Err(Error::EmptyColumn(column_name(condition, replicate, temperature)));
        }
        let med = median(&present);
        if med == 0.0 {
            return Err(Error::ZeroMedianColumn(column_name(
                condition, replicate, temperature,
            )));
        }
        medians.push(med);
    }

    let reference_median = median(&medians);
    let mut report_columns = Vec::with_capacity(columns.len());
    for ((&(condition, replicate, temp_bits), indices), &col_median) in
        columns.iter().zip(medians.iter())
    {
        let factor = reference_median / col_median;
        for &i in indices {
            if let Some(a) = measurements[i].abundance.as_mut() {
                *a *= factor;
            }
        }
        report_columns.push(ColumnNormalization {
            condition,
            replicate,
            temperature: f64::from_bits(temp_bits),
            median: col_median,
            factor,
        });
    }

    Ok(NormalizationReport {
        reference_median,
        columns: report_columns,
    })
}
