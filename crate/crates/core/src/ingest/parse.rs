//! Long-format table parsing.
//!
//! Required header columns: `protein_id`, `condition`, `replicate`,
//! `temperature`, `abundance`; optional `psm_count`. Tab or comma delimited
//! (auto-detected from the header line unless fixed in the options). Rows
//! with unparseable cells are rejected individually with their line number;
//! a missing required column or a duplicate measurement key is fatal.

use std::collections::HashSet;
use std::io::Read;

use serde::Serialize;

use super::{Condition, RawMeasurement};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ParseOptions {
    /// Fixed delimiter; `None` auto-detects tab vs comma from the header.
    pub delimiter: Option<u8>,
    pub control_label: String,
    pub treatment_label: String,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            delimiter: None,
            control_label: "control".into(),
            treatment_label: "treatment".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

/// What the parser saw: row counts, rejected rows with reasons, and
/// missing-value bookkeeping.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ParseDiagnostics {
    pub rows_total: usize,
    pub rows_accepted: usize,
    pub missing_abundance: usize,
    pub psm_column_present: bool,
    pub rejected: Vec<RejectedRow>,
}

fn is_missing_token(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

pub fn parse_table(
    mut reader: impl Read,
    options: &ParseOptions,
) -> Result<(Vec<RawMeasurement>, ParseDiagnostics)> {
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|e| Error::Data(format!("input is not valid UTF-8 text: {e}")))?;

    let delimiter = options.delimiter.unwrap_or_else(|| {
        let header = text.lines().next().unwrap_or("");
        if header.contains('\t') {
            b'\t'
        } else {
            b','
        }
    });

    let mut csv_reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());

    let headers = csv_reader
        .headers()
        .map_err(|e| Error::Data(format!("cannot read header row: {e}")))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let required = |name: &str| col(name).ok_or_else(|| Error::MissingColumn(name.to_string()));

    let idx_protein = required("protein_id")?;
    let idx_condition = required("condition")?;
    let idx_replicate = required("replicate")?;
    let idx_temperature = required("temperature")?;
    let idx_abundance = required("abundance")?;
    let idx_psm = col("psm_count");

    let mut diagnostics = ParseDiagnostics {
        psm_column_present: idx_psm.is_some(),
        ..ParseDiagnostics::default()
    };
    let mut measurements = Vec::new();
    let mut seen: HashSet<(String, Condition, u32, u64)> = HashSet::new();
    let needed = [idx_protein, idx_condition, idx_replicate, idx_temperature, idx_abundance]
        .into_iter()
        .chain(idx_psm)
        .max()
        .unwrap_or(0)
        + 1;

    for record in csv_reader.records() {
        let record = record.map_err(|e| Error::Data(format!("malformed input: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        diagnostics.rows_total += 1;
        let reject = |reason: String, diagnostics: &mut ParseDiagnostics| {
            diagnostics.rejected.push(RejectedRow { line, reason });
        };

        if record.len() < needed {
            reject(
                format!("expected at least {needed} fields, found {}", record.len()),
                &mut diagnostics,
            );
            continue;
        }

        let protein_id = record[idx_protein].trim().to_string();
        if protein_id.is_empty() {
            reject("empty protein_id".into(), &mut diagnostics);
            continue;
        }

        let condition_raw = record[idx_condition].trim();
        let condition = if condition_raw == options.control_label {
            Condition::Control
        } else if condition_raw == options.treatment_label {
            Condition::Perturbation
        } else {
            reject(
                format!(
                    "unknown condition `{condition_raw}` (expected `{}` or `{}`)",
                    options.control_label, options.treatment_label
                ),
                &mut diagnostics,
            );
            continue;
        };

        let replicate: u32 = match record[idx_replicate].trim().parse() {
            Ok(r) if r >= 1 => r,
            _ => {
                reject(
                    format!("replicate `{}` is not a positive integer", &record[idx_replicate]),
                    &mut diagnostics,
                );
                continue;
            }
        };

        let temperature: f64 = match record[idx_temperature].trim().parse() {
            Ok(t) if f64::is_finite(t) => t,
            _ => {
                reject(
                    format!("temperature `{}` is not a finite number", &record[idx_temperature]),
                    &mut diagnostics,
                );
                continue;
            }
        };

        let abundance_raw = &record[idx_abundance];
        let abundance = if is_missing_token(abundance_raw) {
            diagnostics.missing_abundance += 1;
            None
        } else {
            match abundance_raw.trim().parse::<f64>() {
                Ok(a) if a.is_finite() && a >= 0.0 => Some(a),
                _ => {
                    reject(
                        format!("abundance `{abundance_raw}` is not a nonnegative number"),
                        &mut diagnostics,
                    );
                    continue;
                }
            }
        };

        let psm_count = match idx_psm {
            None => None,
            Some(i) => {
                let raw = &record[i];
                if is_missing_token(raw) {
                    None
                } else {
                    match raw.trim().parse::<u32>() {
                        Ok(p) => Some(p),
                        Err(_) => {
                            reject(
                                format!("psm_count `{raw}` is not a nonnegative integer"),
                                &mut diagnostics,
                            );
                            continue;
                        }
                    }
                }
            }
        };

        let key = (
            protein_id.clone(),
            condition,
            replicate,
            temperature.to_bits(),
        );
        if !seen.insert(key) {
            return Err(Error::DuplicateKey {
                protein_id,
                condition: condition_raw.to_string(),
                replicate,
                temperature,
            });
        }

        diagnostics.rows_accepted += 1;
        measurements.push(RawMeasurement {
            protein_id,
            condition,
            replicate,
            temperature,
            abundance,
            psm_count,
        });
    }

    Ok((measurements, diagnostics))
}
