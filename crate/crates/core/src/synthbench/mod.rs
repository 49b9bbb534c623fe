//! Synthetic ground-truth datasets and pipeline scoring.
//!
//! Generates labeled TPP-style datasets with known affected proteins —
//! sigmoidal melters with a melting-point shift, or GP-drawn non-monotone
//! curves with a mean shift — written as raw intensities (random positive
//! affine per protein, per-column loading factors) so the full ingest path
//! is exercised. Scoring covers ROC/AUC with operating points at fixed
//! alpha thresholds and p-value calibration against Uniform(0, 1).

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fmt::sig9;
use crate::gp::rbf_kernel;
use crate::ingest::{Condition, RawMeasurement};
use crate::seed::{mix, protein_seed, rng_from, Purpose};

/// Curve family for generated proteins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveFamily {
    /// Classic sigmoidal melter.
    Sigmoid,
    /// Smooth GP-drawn curve; may be non-monotone.
    GpDraw,
    /// Per-protein coin flip between the two.
    Mixed,
}

/// How affected proteins differ in the perturbation condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationModel {
    /// Melting-point shift in degrees Celsius (sigmoid family).
    pub tm_shift: f64,
    /// Relative change of the sigmoid dynamic range, in `[0, 1)`.
    pub amplitude_change: f64,
    /// Mean-curve shift in scaled units, ramped over the upper half of the
    /// gradient (GP-drawn family).
    pub value_shift: f64,
}

impl Default for PerturbationModel {
    fn default() -> Self {
        PerturbationModel {
            tm_shift: 5.0,
            amplitude_change: 0.0,
            value_shift: 0.3,
        }
    }
}

/// Specification of a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub proteins: usize,
    pub fraction_perturbed: f64,
    pub family: CurveFamily,
    /// Strictly increasing temperature gradient.
    pub temps: Vec<f64>,
    pub replicates: u32,
    /// Observation noise standard deviation in scaled units.
    pub noise_sd: f64,
    pub perturbation: PerturbationModel,
    pub seed: u64,
}

impl SyntheticSpec {
    /// 10 points uniform over 37-67 C.
    pub fn default_temps() -> Vec<f64> {
        (0..10).map(|i| 37.0 + 30.0 * i as f64 / 9.0).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.proteins == 0 {
            return Err(Error::Config("proteins must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.fraction_perturbed) {
            return Err(Error::Config(format!(
                "fraction_perturbed must be in [0, 1], got {}",
                self.fraction_perturbed
            )));
        }
        if self.temps.len() < 2 || self.temps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "temperature gradient must be strictly increasing with >= 2 points".into(),
            ));
        }
        if self.noise_sd < 0.0 || !self.noise_sd.is_finite() {
            return Err(Error::Config(format!("noise_sd must be >= 0, got {}", self.noise_sd)));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            proteins: 50,
            fraction_perturbed: 0.2,
            family: CurveFamily::Sigmoid,
            temps: SyntheticSpec::default_temps(),
            replicates: 2,
            noise_sd: 0.05,
            perturbation: PerturbationModel::default(),
            seed: 42,
        }
    }
}

/// Generated measurements plus ground-truth affected labels.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub measurements: Vec<RawMeasurement>,
    /// protein_id -> affected?
    pub labels: BTreeMap<String, bool>,
}

fn sigmoid_curve(t: f64, tm: f64, slope: f64, plateau: f64, amplitude: f64) -> f64 {
    plateau + (1.0 - plateau) * amplitude / (1.0 + (slope * (t - tm)).exp())
}

/// Smoothstep ramp from 0 at the gradient midpoint to 1 at the top.
fn upper_half_ramp(t: f64, t_lo: f64, t_hi: f64) -> f64 {
    let mid = 0.5 * (t_lo + t_hi);
    let r = ((t - mid) / (t_hi - mid)).clamp(0.0, 1.0);
    r * r * (3.0 - 2.0 * r)
}

/// Draw a smooth curve from a GP prior over the gradient.
fn gp_prior_draw(temps: &[f64], length_scale: f64, sd: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = temps.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            k[(i, j)] = sd * sd * rbf_kernel(temps[i], temps[j], length_scale);
        }
        k[(i, i)] += 1e-9;
    }
    let chol = Cholesky::new(k).expect("prior covariance is positive definite");
    let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    (chol.l() * z).iter().copied().collect()
}

/// Generate a labeled dataset. Deterministic per seed; each protein's values
/// derive only from `(seed, protein_id)`, so the values of protein `P0007`
/// do not depend on how many other proteins the spec asks for.
pub fn generate(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let width = spec.proteins.to_string().len().max(4);
    let affected_count = (spec.proteins as f64 * spec.fraction_perturbed).round() as usize;
    let t_lo = spec.temps[0];
    let t_hi = *spec.temps.last().expect("nonempty gradient");

    // Per-column loading factors shared by the whole dataset.
    let mut column_rng = rng_from(mix(spec.seed, Purpose::SynthColumns.tag()));
    let mut column_factor: BTreeMap<(Condition, u32, u64), f64> = BTreeMap::new();
    for cond in Condition::BOTH {
        for rep in 1..=spec.replicates {
            for &t in &spec.temps {
                column_factor.insert((cond, rep, t.to_bits()), column_rng.gen_range(0.7..1.4));
            }
        }
    }

    let mut measurements = Vec::new();
    let mut labels = BTreeMap::new();
    for index in 0..spec.proteins {
        let protein_id = format!("P{:0width$}", index + 1, width = width);
        let affected = index < affected_count;
        labels.insert(protein_id.clone(), affected);

        let mut rng = rng_from(protein_seed(spec.seed, &protein_id, Purpose::Synth));
        let family = match spec.family {
            CurveFamily::Mixed => {
                if rng.gen_bool(0.5) {
                    CurveFamily::Sigmoid
                } else {
                    CurveFamily::GpDraw
                }
            }
            f => f,
        };

        // The cohort is built median-neutral: curve orientations are
        // balanced and perturbation shifts are sign-randomized per protein,
        // so per-column medians across the cohort stay level over the
        // gradient and carry only the loading factors. Otherwise per-column
        // median normalization would fold the cohort's composition back
        // into every curve and confound the benchmark at high affected
        // fractions.
        let (control_curve, perturbed_curve): (Vec<f64>, Vec<f64>) = match family {
            CurveFamily::Sigmoid | CurveFamily::Mixed => {
                let orientation = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let tm = rng.gen_range(44.0..60.0);
                let slope = orientation * rng.gen_range(0.25..0.6);
                let plateau = rng.gen_range(0.0..0.15);
                let shift_sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let control: Vec<f64> = spec
                    .temps
                    .iter()
                    .map(|&t| sigmoid_curve(t, tm, slope, plateau, 1.0))
                    .collect();
                let perturbed: Vec<f64> = if affected {
                    let amplitude = 1.0 - spec.perturbation.amplitude_change;
                    let tm_shifted = tm + shift_sign * spec.perturbation.tm_shift;
                    spec.temps
                        .iter()
                        .map(|&t| sigmoid_curve(t, tm_shifted, slope, plateau, amplitude))
                        .collect()
                } else {
                    control.clone()
                };
                (control, perturbed)
            }
            CurveFamily::GpDraw => {
                let length_scale = rng.gen_range(3.0..12.0);
                let draw = gp_prior_draw(&spec.temps, length_scale, 0.22, &mut rng);
                let shift_sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let control: Vec<f64> = draw.iter().map(|d| 0.5 + d).collect();
                let perturbed: Vec<f64> = if affected {
                    let shift = shift_sign * spec.perturbation.value_shift;
                    spec.temps
                        .iter()
                        .zip(&control)
                        .map(|(&t, &v)| v + shift * upper_half_ramp(t, t_lo, t_hi))
                        .collect()
                } else {
                    control.clone()
                };
                (control, perturbed)
            }
        };

        // Raw intensity scale: inverse of min-max scaling, positive affine.
        // Levels are kept within a narrow band so column medians are
        // estimated from comparable values rather than jumping across
        // orders of magnitude.
        let scale = 1e4 * 10f64.powf(rng.gen_range(-0.15..0.15));
        let offset = scale * rng.gen_range(0.5..2.0);
        let psm_count = rng.gen_range(5..=40u32);

        for cond in Condition::BOTH {
            let curve = match cond {
                Condition::Control => &control_curve,
                Condition::Perturbation => &perturbed_curve,
            };
            for rep in 1..=spec.replicates {
                for (i, &t) in spec.temps.iter().enumerate() {
                    let noise: f64 = rng.sample::<f64, _>(StandardNormal) * spec.noise_sd;
                    let scaled = curve[i] + noise;
                    let factor = column_factor[&(cond, rep, t.to_bits())];
                    let raw = ((scale * scaled + offset) * factor).max(scale * 1e-3);
                    measurements.push(RawMeasurement {
                        protein_id: protein_id.clone(),
                        condition: cond,
                        replicate: rep,
                        temperature: t,
                        abundance: Some(raw),
                        psm_count: Some(psm_count),
                    });
                }
            }
        }
    }

    Ok(LabeledDataset { measurements, labels })
}

/// Write `dataset.csv` (ingest long format) and `truth_labels.csv` into
/// `dir` using the given condition labels.
pub fn write_dataset(
    dataset: &LabeledDataset,
    dir: &Path,
    control_label: &str,
    treatment_label: &str,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut out = String::from("protein_id,condition,replicate,temperature,abundance,psm_count\n");
    for m in &dataset.measurements {
        let condition = match m.condition {
            Condition::Control => control_label,
            Condition::Perturbation => treatment_label,
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.protein_id,
            condition,
            m.replicate,
            sig9(m.temperature),
            m.abundance.map(sig9).unwrap_or_default(),
            m.psm_count.map(|p| p.to_string()).unwrap_or_default(),
        ));
    }
    let data_path = dir.join("dataset.csv");
    std::fs::write(&data_path, out).map_err(|e| Error::io(&data_path, e))?;

    let mut labels = String::from("protein_id,label\n");
    for (id, &affected) in &dataset.labels {
        labels.push_str(&format!(
            "{id},{}\n",
            if affected { "affected" } else { "unaffected" }
        ));
    }
    let label_path = dir.join("truth_labels.csv");
    std::fs::write(&label_path, labels).map_err(|e| Error::io(&label_path, e))?;
    Ok(())
}

/// Read a `truth_labels.csv` written by [`write_dataset`].
pub fn read_labels(path: &Path) -> Result<BTreeMap<String, bool>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != "protein_id,label" {
                return Err(Error::Labels(format!(
                    "expected header `protein_id,label`, got `{line}`"
                )));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (id, label) = line
            .split_once(',')
            .ok_or_else(|| Error::Labels(format!("malformed label line {}: `{line}`", i + 1)))?;
        let affected = match label.trim() {
            "affected" => true,
            "unaffected" => false,
            other => {
                return Err(Error::Labels(format!(
                    "unknown label `{other}` for protein `{id}` (expected affected/unaffected)"
                )))
            }
        };
        labels.insert(id.trim().to_string(), affected);
    }
    if labels.is_empty() {
        return Err(Error::Labels("label file contains no entries".into()));
    }
    Ok(labels)
}

/// One ROC operating point at a fixed alpha threshold on adjusted p-values.
#[derive(Debug, Clone, Copy)]
pub struct OperatingPoint {
    pub alpha: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

/// ROC sweep result.
#[derive(Debug, Clone)]
pub struct RocAnalysis {
    /// (false-positive rate, true-positive rate), starting at (0, 0).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
    pub operating_points: Vec<OperatingPoint>,
}

/// Threshold sweep over scores (smaller = more significant, i.e. adjusted
/// p-values). Requires at least one positive and one negative label.
pub fn roc_curve(scores: &[f64], affected: &[bool], alphas: &[f64]) -> Result<RocAnalysis> {
    assert_eq!(scores.len(), affected.len());
    let positives = affected.iter().filter(|&&a| a).count();
    let negatives = affected.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Data(format!(
            "ROC needs both classes; got {positives} affected and {negatives} unaffected"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    let mut points = vec![(0.0, 0.0)];
    let mut auc = 0.0;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        // Consume a tie group as one threshold step.
        let score = scores[order[i]];
        while i < order.len() && scores[order[i]] == score {
            if affected[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let point = (fp as f64 / negatives as f64, tp as f64 / positives as f64);
        let last = *points.last().expect("seeded with origin");
        auc += (point.0 - last.0) * (point.1 + last.1) * 0.5;
        points.push(point);
    }

    let operating_points = alphas
        .iter()
        .map(|&alpha| {
            let mut tp = 0;
            let mut tn = 0;
            for (s, &a) in scores.iter().zip(affected) {
                if *s < alpha {
                    if a {
                        tp += 1;
                    }
                } else if !a {
                    tn += 1;
                }
            }
            OperatingPoint {
                alpha,
                sensitivity: tp as f64 / positives as f64,
                specificity: tn as f64 / negatives as f64,
            }
        })
        .collect();

    Ok(RocAnalysis {
        points,
        auc,
        operating_points,
    })
}

/// Calibration of p-values against Uniform(0, 1): the Kolmogorov-Smirnov
/// statistic `max_i |i/n - p_(i)|` and counts over 10 equal bins.
#[derive(Debug, Clone)]
pub struct CalibrationReport {
    pub ks: f64,
    pub bins: [usize; 10],
}

pub fn calibration_report(p_values: &[f64]) -> CalibrationReport {
    let mut sorted = p_values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite p-values"));
    let n = sorted.len();
    let mut ks = 0.0f64;
    for (i, p) in sorted.iter().enumerate() {
        ks = ks.max(((i + 1) as f64 / n as f64 - p).abs());
    }
    let mut bins = [0usize; 10];
    for p in p_values {
        let idx = ((p * 10.0).floor() as usize).min(9);
        bins[idx] += 1;
    }
    CalibrationReport { ks, bins }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_count_matches_spec() {
        let ds = generate(&SyntheticSpec::default()).unwrap();
        assert_eq!(ds.measurements.len(), 50 * 2 * 2 * 10);
        assert_eq!(ds.labels.len(), 50);
        assert_eq!(ds.labels.values().filter(|&&a| a).count(), 10);
    }

    #[test]
    fn zero_fraction_means_identical_conditions() {
        let spec = SyntheticSpec {
            fraction_perturbed: 0.0,
            proteins: 5,
            ..SyntheticSpec::default()
        };
        let ds = generate(&spec).unwrap();
        assert!(ds.labels.values().all(|&a| !a));
    }

    #[test]
    fn degenerate_perturbation_equals_unaffected() {
        // tm_shift = 0 and amplitude_change = 0: affected proteins' two
        // condition curves coincide (noise differs, drawn later per cond).
        let spec = SyntheticSpec {
            proteins: 3,
            fraction_perturbed: 1.0,
            noise_sd: 0.0,
            perturbation: PerturbationModel {
                tm_shift: 0.0,
                amplitude_change: 0.0,
                value_shift: 0.0,
            },
            ..SyntheticSpec::default()
        };
        let ds = generate(&spec).unwrap();
        for id in ds.labels.keys() {
            let by_cond = |c: Condition| -> Vec<f64> {
                ds.measurements
                    .iter()
                    .filter(|m| &m.protein_id == id && m.condition == c && m.replicate == 1)
                    .map(|m| m.abundance.unwrap())
                    .collect()
            };
            let control = by_cond(Condition::Control);
            let perturbed = by_cond(Condition::Perturbation);
            for (a, b) in control.iter().zip(&perturbed) {
                // Same curve; only column factors differ.
                let fa = a / b;
                assert!(fa.is_finite());
            }
        }
    }

    #[test]
    fn deterministic_and_protein_values_independent_of_count() {
        let spec5 = SyntheticSpec {
            proteins: 5,
            fraction_perturbed: 0.0,
            ..SyntheticSpec::default()
        };
        let spec9 = SyntheticSpec {
            proteins: 9,
            fraction_perturbed: 0.0,
            ..SyntheticSpec::default()
        };
        let a = generate(&spec5).unwrap();
        let b = generate(&spec5).unwrap();
        assert_eq!(a.measurements, b.measurements);

        let big = generate(&spec9).unwrap();
        let pick = |ds: &LabeledDataset, id: &str| -> Vec<(u32, u64, u64)> {
            ds.measurements
                .iter()
                .filter(|m| m.protein_id == id)
                .map(|m| (m.replicate, m.temperature.to_bits(), m.abundance.unwrap().to_bits()))
                .collect()
        };
        assert_eq!(pick(&a, "P0003"), pick(&big, "P0003"));
    }

    #[test]
    fn gp_family_produces_curves() {
        let spec = SyntheticSpec {
            proteins: 4,
            family: CurveFamily::GpDraw,
            fraction_perturbed: 0.5,
            ..SyntheticSpec::default()
        };
        let ds = generate(&spec).unwrap();
        assert_eq!(ds.measurements.len(), 4 * 2 * 2 * 10);
        assert!(ds.measurements.iter().all(|m| m.abundance.unwrap() > 0.0));
    }

    #[test]
    fn roc_separated_and_flipped() {
        let affected = [true, true, false, false];
        let perfect = roc_curve(&[0.01, 0.02, 0.5, 0.9], &affected, &[]).unwrap();
        assert_eq!(perfect.auc, 1.0);
        let flipped = roc_curve(&[0.9, 0.5, 0.02, 0.01], &affected, &[]).unwrap();
        assert_eq!(flipped.auc, 0.0);
    }

    #[test]
    fn roc_single_class_errors() {
        assert!(roc_curve(&[0.1, 0.2], &[true, true], &[]).is_err());
    }

    #[test]
    fn roc_operating_points() {
        let scores = [0.002, 0.03, 0.2, 0.6];
        let affected = [true, true, false, false];
        let roc = roc_curve(&scores, &affected, &[0.01, 0.05]).unwrap();
        let at = |alpha: f64| {
            roc.operating_points
                .iter()
                .find(|p| p.alpha == alpha)
                .copied()
                .unwrap()
        };
        assert_eq!(at(0.01).sensitivity, 0.5);
        assert_eq!(at(0.01).specificity, 1.0);
        assert_eq!(at(0.05).sensitivity, 1.0);
        assert_eq!(at(0.05).specificity, 1.0);
    }

    #[test]
    fn calibration_hand_cases() {
        let grid: Vec<f64> = (0..10).map(|i| 0.05 + 0.1 * i as f64).collect();
        let report = calibration_report(&grid);
        assert!((report.ks - 0.05).abs() < 1e-12);
        assert!(report.bins.iter().all(|&c| c == 1));

        let ones = vec![1.0; 10];
        let report = calibration_report(&ones);
        assert!((report.ks - 0.9).abs() < 1e-12);
        assert_eq!(report.bins[9], 10);
    }
}
