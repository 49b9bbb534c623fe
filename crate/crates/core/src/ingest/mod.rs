//! Raw table ingestion: parsing, quality filtering, median normalization,
//! and per-protein min-max scaling.
//!
//! Input is a long-format table with one measurement per row. Proteins are
//! never silently dropped: quality filters assign a status instead, so the
//! statuses always partition the input set.

mod normalize;
mod parse;

pub use normalize::{median_normalize, ColumnNormalization, NormalizationReport};
pub use parse::{parse_table, ParseDiagnostics, ParseOptions, RejectedRow};

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};

/// Minimum number of distinct temperatures per condition a protein must
/// retain (after dropping missing values) to be fittable. Below this, a GP
/// fit has essentially no curvature information.
pub const MIN_DISTINCT_TEMPERATURES: usize = 5;

/// Experimental condition of a measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Condition {
    Control,
    Perturbation,
}

impl Condition {
    pub const BOTH: [Condition; 2] = [Condition::Control, Condition::Perturbation];
}

/// One row of the input table after parsing. `abundance` is `None` for
/// missing-value tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMeasurement {
    pub protein_id: String,
    pub condition: Condition,
    pub replicate: u32,
    pub temperature: f64,
    pub abundance: Option<f64>,
    pub psm_count: Option<u32>,
}

/// Quality status of a protein profile. Exactly one status per protein;
/// checks are applied in this order of precedence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProfileStatus {
    Ok,
    /// Fewer peptide spectral matches than required.
    FilteredPsm,
    /// Fewer replicates than required in at least one condition.
    FilteredReplicates,
    /// No usable melting signal: constant abundance, or too few distinct
    /// temperatures after dropping missing values.
    FilteredDegenerate,
}

/// One present measurement of a protein in one condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub temperature: f64,
    pub replicate: u32,
    pub value: f64,
}

/// Per-protein analysis-ready data. After [`min_max_scale`], `value`s of an
/// `Ok` profile lie in `[0, 1]` with the extremes attained over the union of
/// both conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProteinProfile {
    pub protein_id: String,
    pub control: Vec<Observation>,
    pub perturbation: Vec<Observation>,
    pub psm_count: Option<u32>,
    pub control_replicates: u32,
    pub perturbation_replicates: u32,
    pub status: ProfileStatus,
}

impl ProteinProfile {
    pub fn observations(&self, condition: Condition) -> &[Observation] {
        match condition {
            Condition::Control => &self.control,
            Condition::Perturbation => &self.perturbation,
        }
    }

    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.control
            .iter()
            .chain(self.perturbation.iter())
            .map(|o| o.value)
    }

    fn distinct_temperatures(obs: &[Observation]) -> usize {
        obs.iter()
            .map(|o| o.temperature.to_bits())
            .collect::<BTreeSet<_>>()
            .len()
    }
}

/// Group measurements by protein and assign quality statuses.
///
/// A protein whose PSM count (max over its rows, when the column is present)
/// is below `min_psms` becomes `FilteredPsm`; one observed in fewer than
/// `min_replicates` replicates in either condition becomes
/// `FilteredReplicates`; one with too few distinct temperatures in either
/// condition becomes `FilteredDegenerate`. Everything else is `Ok`.
/// Missing abundances are dropped point-wise here; values are not yet scaled.
pub fn filter_proteins(
    measurements: &[RawMeasurement],
    min_psms: u32,
    min_replicates: u32,
) -> Vec<ProteinProfile> {
    let mut groups: BTreeMap<&str, Vec<&RawMeasurement>> = BTreeMap::new();
    for m in measurements {
        groups.entry(&m.protein_id).or_default().push(m);
    }

    groups
        .into_iter()
        .map(|(id, rows)| {
            let psm_count = rows.iter().filter_map(|r| r.psm_count).max();
            let mut control = Vec::new();
            let mut perturbation = Vec::new();
            for r in &rows {
                if let Some(a) = r.abundance {
                    let obs = Observation {
                        temperature: r.temperature,
                        replicate: r.replicate,
                        value: a,
                    };
                    match r.condition {
                        Condition::Control => control.push(obs),
                        Condition::Perturbation => perturbation.push(obs),
                    }
                }
            }
            let reps = |obs: &[Observation]| {
                obs.iter().map(|o| o.replicate).collect::<BTreeSet<_>>().len() as u32
            };
            let control_replicates = reps(&control);
            let perturbation_replicates = reps(&perturbation);

            let status = if psm_count.is_some_and(|p| p < min_psms) {
                ProfileStatus::FilteredPsm
            } else if control_replicates < min_replicates
                || perturbation_replicates < min_replicates
            {
                ProfileStatus::FilteredReplicates
            } else if ProteinProfile::distinct_temperatures(&control) < MIN_DISTINCT_TEMPERATURES
                || ProteinProfile::distinct_temperatures(&perturbation) < MIN_DISTINCT_TEMPERATURES
            {
                ProfileStatus::FilteredDegenerate
            } else {
                ProfileStatus::Ok
            };

            ProteinProfile {
                protein_id: id.to_string(),
                control,
                perturbation,
                psm_count,
                control_replicates,
                perturbation_replicates,
                status,
            }
        })
        .collect()
}

/// Min-max scale a profile to `[0, 1]` using the joint minimum and maximum
/// across *both* conditions, so between-condition level differences survive
/// scaling. A constant profile (max equals min) carries no melting signal
/// and becomes `FilteredDegenerate`. Profiles that are not `Ok` pass through
/// unchanged.
pub fn min_max_scale(mut profile: ProteinProfile) -> ProteinProfile {
    if profile.status != ProfileStatus::Ok {
        return profile;
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in profile.values() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(hi > lo) {
        profile.status = ProfileStatus::FilteredDegenerate;
        return profile;
    }
    let range = hi - lo;
    for obs in profile.control.iter_mut().chain(profile.perturbation.iter_mut()) {
        obs.value = (obs.value - lo) / range;
    }
    profile
}

/// Counts of profiles by status.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FilterCounts {
    pub ok: usize,
    pub filtered_psm: usize,
    pub filtered_replicates: usize,
    pub filtered_degenerate: usize,
}

impl FilterCounts {
    pub fn tally(profiles: &[ProteinProfile]) -> Self {
        let mut c = FilterCounts::default();
        for p in profiles {
            match p.status {
                ProfileStatus::Ok => c.ok += 1,
                ProfileStatus::FilteredPsm => c.filtered_psm += 1,
                ProfileStatus::FilteredReplicates => c.filtered_replicates += 1,
                ProfileStatus::FilteredDegenerate => c.filtered_degenerate += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.ok + self.filtered_psm + self.filtered_replicates + self.filtered_degenerate
    }
}

/// Output of the full ingest stage.
#[derive(Debug)]
pub struct IngestOutput {
    /// Profiles sorted by protein id, scaled where `Ok`.
    pub profiles: Vec<ProteinProfile>,
    pub normalization: NormalizationReport,
    pub diagnostics: ParseDiagnostics,
}

/// Parse, median-normalize, filter, and scale in one step.
pub fn ingest(
    reader: impl std::io::Read,
    options: &ParseOptions,
    min_psms: u32,
    min_replicates: u32,
) -> Result<IngestOutput> {
    let (mut measurements, diagnostics) = parse_table(reader, options)?;
    if measurements.is_empty() {
        return Err(Error::Data(format!(
            "no usable rows in input ({} rows rejected)",
            diagnostics.rejected.len()
        )));
    }
    let normalization = median_normalize(&mut measurements)?;
    let profiles = filter_proteins(&measurements, min_psms, min_replicates)
        .into_iter()
        .map(min_max_scale)
        .collect();
    Ok(IngestOutput {
        profiles,
        normalization,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meas(
        id: &str,
        condition: Condition,
        replicate: u32,
        temperature: f64,
        abundance: f64,
        psm: u32,
    ) -> RawMeasurement {
        RawMeasurement {
            protein_id: id.into(),
            condition,
            replicate,
            temperature,
            abundance: Some(abundance),
            psm_count: Some(psm),
        }
    }

    /// A full protein: `reps` replicates per condition over `temps`.
    fn full_protein(id: &str, temps: &[f64], reps: u32, psm: u32) -> Vec<RawMeasurement> {
        let mut rows = Vec::new();
        for cond in Condition::BOTH {
            for rep in 1..=reps {
                for (i, &t) in temps.iter().enumerate() {
                    rows.push(meas(id, cond, rep, t, 100.0 - i as f64 * 10.0, psm));
                }
            }
        }
        rows
    }

    const TEMPS: [f64; 6] = [37.0, 43.0, 49.0, 55.0, 61.0, 67.0];

    #[test]
    fn psm_filter_boundary() {
        let mut rows = full_protein("LOW", &TEMPS, 2, 2);
        rows.extend(full_protein("AT", &TEMPS, 2, 3));
        let profiles = filter_proteins(&rows, 3, 2);
        assert_eq!(profiles[0].protein_id, "AT");
        assert_eq!(profiles[0].status, ProfileStatus::Ok);
        assert_eq!(profiles[1].protein_id, "LOW");
        assert_eq!(profiles[1].status, ProfileStatus::FilteredPsm);
    }

    #[test]
    fn replicate_filter() {
        let mut rows = full_protein("A", &TEMPS, 2, 10);
        // Protein B: only one replicate in perturbation.
        let mut b = full_protein("B", &TEMPS, 2, 10);
        b.retain(|m| !(m.condition == Condition::Perturbation && m.replicate == 2));
        rows.extend(b);
        let profiles = filter_proteins(&rows, 3, 2);
        assert_eq!(profiles[0].status, ProfileStatus::Ok);
        assert_eq!(profiles[1].status, ProfileStatus::FilteredReplicates);
        assert_eq!(profiles[1].perturbation_replicates, 1);
    }

    #[test]
    fn missing_psm_column_passes_filter() {
        let mut rows = full_protein("A", &TEMPS, 2, 10);
        for r in &mut rows {
            r.psm_count = None;
        }
        let profiles = filter_proteins(&rows, 3, 2);
        assert_eq!(profiles[0].status, ProfileStatus::Ok);
    }

    #[test]
    fn too_few_distinct_temperatures_is_degenerate() {
        let rows = full_protein("A", &TEMPS[..4], 2, 10);
        let profiles = filter_proteins(&rows, 3, 2);
        assert_eq!(profiles[0].status, ProfileStatus::FilteredDegenerate);
    }

    #[test]
    fn filtering_partitions_input() {
        let mut rows = full_protein("OK", &TEMPS, 2, 10);
        rows.extend(full_protein("PSM", &TEMPS, 2, 1));
        let mut one_rep = full_protein("REP", &TEMPS, 1, 10);
        one_rep.retain(|m| m.replicate == 1);
        rows.extend(one_rep);
        rows.extend(full_protein("DEG", &TEMPS[..2], 2, 10));
        let profiles = filter_proteins(&rows, 3, 2);
        let counts = FilterCounts::tally(&profiles);
        assert_eq!(counts.total(), 4);
        assert_eq!(counts.ok, 1);
        assert_eq!(counts.filtered_psm, 1);
        assert_eq!(counts.filtered_replicates, 1);
        assert_eq!(counts.filtered_degenerate, 1);
    }

    #[test]
    fn min_max_scale_affine_endpoints() {
        let mut rows = full_protein("A", &TEMPS, 2, 10);
        // Set abundances [2, 4, 6] style values on one replicate set.
        for (i, r) in rows.iter_mut().enumerate() {
            r.abundance = Some(2.0 + (i % 3) as f64 * 2.0);
        }
        let profile = min_max_scale(filter_proteins(&rows, 3, 2).remove(0));
        assert_eq!(profile.status, ProfileStatus::Ok);
        let values: Vec<f64> = profile.values().collect();
        assert!(values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(values.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
        assert_eq!(values.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.0);
        for v in values {
            assert!([0.0, 0.5, 1.0].contains(&v), "unexpected scaled value {v}");
        }
    }

    #[test]
    fn constant_profile_is_degenerate() {
        let mut rows = full_protein("A", &TEMPS, 2, 10);
        for r in &mut rows {
            r.abundance = Some(5.0);
        }
        let profile = min_max_scale(filter_proteins(&rows, 3, 2).remove(0));
        assert_eq!(profile.status, ProfileStatus::FilteredDegenerate);
    }

    #[test]
    fn joint_min_max_across_conditions() {
        let mut rows = full_protein("A", &TEMPS, 2, 10);
        for r in &mut rows {
            r.abundance = Some(match r.condition {
                Condition::Control => 2.0 + 4.0 * (r.temperature - 37.0) / 30.0, // 2..6
                Condition::Perturbation => 4.0,
            });
        }
        let profile = min_max_scale(filter_proteins(&rows, 3, 2).remove(0));
        assert_eq!(profile.status, ProfileStatus::Ok);
        for o in &profile.perturbation {
            assert!((o.value - 0.5).abs() < 1e-12);
        }
    }
}
