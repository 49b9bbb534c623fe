//! Hypothesis testing for differential melting behavior.
//!
//! For each protein three GP models are fitted: one per condition (the
//! alternative: curves differ) and one on the pooled data (the joint model,
//! which embodies the null of a single shared curve). The test statistic is
//!
//! `lambda = -2 * (mll_joint - (mll_control + mll_perturbation))`
//!
//! where each `mll` is the *per-observation* marginal log-likelihood of its
//! model. The per-observation scale is what the GPyTorch-style model stack
//! this method derives from reports, and it is what keeps lambda nonnegative
//! in practice: on the raw summed scale the pooled model's cross-condition
//! covariance lets it beat the independent pair on consistent data, driving
//! the statistic negative under the null.
//!
//! The null distribution is empirical: observation vectors are resampled
//! from the joint model's posterior predictive, split back into
//! pseudo-conditions along the original design layout, refitted, and their
//! statistics pooled across all proteins.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::exec;
use crate::gp::{fit_gp, FitConfig, GpDesign, GpModel};
use crate::ingest::{Condition, FilterCounts, ProfileStatus, ProteinProfile};
use crate::reporting::{effect_size, prediction_grid};
use crate::seed::{protein_seed, rng_from, Purpose};

/// Settings for the inference stage.
#[derive(Debug, Clone, serde::Serialize)]
pub struct InferenceConfig {
    pub fit: FitConfig,
    /// Null statistics sampled per protein.
    pub samples_per_protein: u32,
    /// Master seed; all per-protein streams derive from it.
    pub seed: u64,
    /// Worker count (0 = available parallelism).
    pub threads: usize,
    /// Grid size for effect-size integration.
    pub grid_size: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            fit: FitConfig::default(),
            samples_per_protein: 1,
            seed: 42,
            threads: 0,
            grid_size: 100,
        }
    }
}

/// Three fitted models and the observed statistic for one protein.
#[derive(Debug, Clone)]
pub struct ProteinFit {
    pub protein_id: String,
    pub control: GpModel,
    pub perturbation: GpModel,
    /// Fitted on the pooled data of both conditions, in canonical order.
    pub joint: GpModel,
    /// Raw statistic (may be fractionally negative from optimizer tolerance).
    pub lambda_raw: f64,
    /// Statistic clamped at zero, as reported.
    pub lambda: f64,
    /// Maps sorted joint-design index -> index into the original pooled
    /// layout (control observations first, then perturbation).
    joint_perm: Vec<usize>,
    n_control: usize,
}

/// `-2 (mll_joint - (mll_control + mll_perturbation))` on per-observation
/// mll values.
pub fn lambda_from_mean_mlls(joint: f64, control: f64, perturbation: f64) -> f64 {
    -2.0 * (joint - (control + perturbation))
}

/// Recompute the statistic from the stored models. Equals
/// [`ProteinFit::lambda_raw`] exactly.
pub fn lambda_statistic(joint: &GpModel, control: &GpModel, perturbation: &GpModel) -> f64 {
    lambda_from_mean_mlls(
        joint.per_point_mll(),
        control.per_point_mll(),
        perturbation.per_point_mll(),
    )
}

fn condition_design(profile: &ProteinProfile, condition: Condition) -> Result<GpDesign> {
    let obs = profile.observations(condition);
    GpDesign::new(
        obs.iter().map(|o| o.temperature).collect(),
        obs.iter().map(|o| o.value).collect(),
    )
}

/// Fit control, perturbation, and joint models and compute the statistic.
///
/// The pooled design is sorted canonically before fitting and fit restarts
/// are keyed on the data itself, so swapping the condition labels leaves the
/// statistic bit-identical.
pub fn fit_protein(profile: &ProteinProfile, config: &InferenceConfig) -> Result<ProteinFit> {
    if profile.status != ProfileStatus::Ok {
        return Err(Error::Fit(format!(
            "protein {} has status {:?}, cannot fit",
            profile.protein_id, profile.status
        )));
    }
    let seed = protein_seed(config.seed, &profile.protein_id, Purpose::Fit);

    let control_design = condition_design(profile, Condition::Control)?;
    let perturbation_design = condition_design(profile, Condition::Perturbation)?;
    let n_control = control_design.len();

    let pooled = GpDesign::new(
        control_design
            .temps()
            .iter()
            .chain(perturbation_design.temps())
            .copied()
            .collect(),
        control_design
            .values()
            .iter()
            .chain(perturbation_design.values())
            .copied()
            .collect(),
    )?;
    let (joint_design, joint_perm) = pooled.canonical_sort();

    let control = fit_gp(&control_design, &config.fit, seed)?;
    let perturbation = fit_gp(&perturbation_design, &config.fit, seed)?;
    let joint = fit_gp(&joint_design, &config.fit, seed)?;

    let lambda_raw = lambda_statistic(&joint, &control, &perturbation);
    debug_assert_eq!(
        lambda_raw.to_bits(),
        lambda_statistic(&joint, &control, &perturbation).to_bits(),
        "statistic must be exactly recomputable from stored models"
    );
    Ok(ProteinFit {
        protein_id: profile.protein_id.clone(),
        control,
        perturbation,
        joint,
        lambda_raw,
        lambda: lambda_raw.max(0.0),
        joint_perm,
        n_control,
    })
}

/// Null samples drawn for one protein, with bookkeeping for refit failures.
#[derive(Debug, Clone, Default)]
pub struct NullSamples {
    /// Raw statistics, one per successful sample.
    pub lambdas: Vec<f64>,
    /// Samples abandoned after repeated refit failures.
    pub skipped: usize,
}

const NULL_REFIT_ATTEMPTS: usize = 3;

/// Draw `samples_per_protein` pseudo-datasets from the joint model's
/// posterior predictive at the original design points, refit the three
/// models on each, and return their statistics.
///
/// The RNG is consumed sequentially per protein, so results do not depend on
/// scheduling. Refit failures retry with a fresh draw up to three times,
/// then the sample is skipped and counted.
pub fn sample_null(
    fit: &ProteinFit,
    samples_per_protein: u32,
    config: &InferenceConfig,
    rng: &mut ChaCha8Rng,
) -> NullSamples {
    let joint_design = fit.joint.design();
    let n = joint_design.len();
    let prediction = fit.joint.posterior_predict(joint_design.temps());
    let mean = &prediction.predictive_mean;

    // Factor the predictive covariance for sampling; it includes the fitted
    // noise so it is comfortably positive definite, but guard anyway.
    let factor = {
        let mut extra = 0.0;
        loop {
            let mut cov = prediction.predictive_cov.clone();
            if extra > 0.0 {
                for i in 0..n {
                    cov[(i, i)] += extra;
                }
            }
            if let Some(c) = Cholesky::new(cov) {
                break c;
            }
            extra = if extra == 0.0 { 1e-12 } else { extra * 100.0 };
            if extra > 1e-2 {
                // Unreachable in practice; fall back to a diagonal draw.
                break Cholesky::new(DMatrix::<f64>::identity(n, n) * 1e-6)
                    .expect("diagonal factorization");
            }
        }
    };

    let factor_l = factor.l();
    let fit_seed = protein_seed(config.seed, &fit.protein_id, Purpose::Fit);
    let mut out = NullSamples::default();
    'samples: for _ in 0..samples_per_protein {
        for _attempt in 0..NULL_REFIT_ATTEMPTS {
            let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let draw = mean + &factor_l * z;

            // Undo the canonical sort, then split along the original layout.
            let mut original = vec![0.0; n];
            for (sorted_idx, &orig_idx) in fit.joint_perm.iter().enumerate() {
                original[orig_idx] = draw[sorted_idx];
            }
            let (control_values, perturbation_values) = original.split_at(fit.n_control);

            if let Some(lambda) = refit_statistic(fit, control_values, perturbation_values, config, fit_seed) {
                out.lambdas.push(lambda);
                continue 'samples;
            }
        }
        out.skipped += 1;
    }
    out
}

fn refit_statistic(
    fit: &ProteinFit,
    control_values: &[f64],
    perturbation_values: &[f64],
    config: &InferenceConfig,
    seed: u64,
) -> Option<f64> {
    let control_design =
        GpDesign::new(fit.control.design().temps().to_vec(), control_values.to_vec()).ok()?;
    let perturbation_design = GpDesign::new(
        fit.perturbation.design().temps().to_vec(),
        perturbation_values.to_vec(),
    )
    .ok()?;
    let pooled = GpDesign::new(
        control_design
            .temps()
            .iter()
            .chain(perturbation_design.temps())
            .copied()
            .collect(),
        control_values
            .iter()
            .chain(perturbation_values)
            .copied()
            .collect(),
    )
    .ok()?;
    let (joint_design, _) = pooled.canonical_sort();

    let control = fit_gp(&control_design, &config.fit, seed).ok()?;
    let perturbation = fit_gp(&perturbation_design, &config.fit, seed).ok()?;
    let joint = fit_gp(&joint_design, &config.fit, seed).ok()?;
    Some(lambda_statistic(&joint, &control, &perturbation))
}

/// Pooled null distribution across proteins.
#[derive(Debug, Clone)]
pub struct NullDistribution {
    /// Pooled samples, clamped at zero, concatenated in protein-id order.
    pub samples: Vec<f64>,
    pub samples_per_protein: u32,
    pub seed: u64,
    /// Samples skipped due to repeated refit failures, across all proteins.
    pub skipped: usize,
}

impl NullDistribution {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Concatenate per-protein null samples (already in protein-id order).
pub fn pool_null(
    per_protein: &[NullSamples],
    samples_per_protein: u32,
    seed: u64,
) -> Result<NullDistribution> {
    let mut samples = Vec::new();
    let mut skipped = 0;
    for s in per_protein {
        samples.extend(s.lambdas.iter().map(|l| l.max(0.0)));
        skipped += s.skipped;
    }
    if samples.is_empty() {
        return Err(Error::Data(
            "empty null distribution: no null samples could be drawn".into(),
        ));
    }
    debug_assert!(samples.iter().all(|l| l.is_finite()));
    Ok(NullDistribution {
        samples,
        samples_per_protein,
        seed,
        skipped,
    })
}

/// Add-one empirical p-value: `(1 + #{null >= observed}) / (1 + N)`.
/// Never zero, so downstream BH adjustment stays valid.
pub fn empirical_pvalue(lambda_observed: f64, null: &NullDistribution) -> f64 {
    let exceed = null
        .samples
        .iter()
        .filter(|&&s| s >= lambda_observed)
        .count();
    (1 + exceed) as f64 / (1 + null.len()) as f64
}

/// Benjamini-Hochberg step-up adjustment. Input p-values must lie in
/// `(0, 1]`; the output is returned in input order, capped at 1, with ties
/// sharing the same adjusted value.
pub fn bh_adjust(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len();
    if m == 0 {
        return Vec::new();
    }
    let mf = m as f64;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].partial_cmp(&p_values[b]).expect("finite p-values"));

    let mut adjusted = vec![0.0; m];
    let mut running = f64::INFINITY;
    for rank in (0..m).rev() {
        let i = order[rank];
        let q = p_values[i] * mf / (rank + 1) as f64;
        running = running.min(q);
        adjusted[i] = running.min(1.0);
    }
    adjusted
}

/// Final verdict for one protein.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ResultStatus {
    Ok,
    FilteredPsm,
    FilteredReplicates,
    FilteredDegenerate,
    FitFailed,
}

impl From<ProfileStatus> for ResultStatus {
    fn from(s: ProfileStatus) -> Self {
        match s {
            ProfileStatus::Ok => ResultStatus::Ok,
            ProfileStatus::FilteredPsm => ResultStatus::FilteredPsm,
            ProfileStatus::FilteredReplicates => ResultStatus::FilteredReplicates,
            ProfileStatus::FilteredDegenerate => ResultStatus::FilteredDegenerate,
        }
    }
}

impl ResultStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            ResultStatus::Ok => "ok",
            ResultStatus::FilteredPsm => "filtered_psm",
            ResultStatus::FilteredReplicates => "filtered_replicates",
            ResultStatus::FilteredDegenerate => "filtered_degenerate",
            ResultStatus::FitFailed => "fit_failed",
        }
    }
}

/// Per-protein result row. Statistics are present only for status `Ok`.
#[derive(Debug, Clone)]
pub struct ComparisonResult {
    pub protein_id: String,
    pub lambda: Option<f64>,
    pub p_empirical: Option<f64>,
    pub p_adjusted: Option<f64>,
    pub effect_size: Option<f64>,
    pub status: ResultStatus,
}

/// Everything the inference stage produces.
#[derive(Debug)]
pub struct InferenceOutput {
    /// One entry per input protein, in protein-id order.
    pub results: Vec<ComparisonResult>,
    pub null: NullDistribution,
    /// Fitted models for `Ok` proteins, in protein-id order.
    pub fits: Vec<ProteinFit>,
}

/// Run the full testing stage over ingested profiles: fit, sample the null,
/// pool, compute empirical and adjusted p-values, and attach effect sizes.
/// Deterministic for a fixed seed regardless of `threads`.
pub fn run_inference(
    profiles: &[ProteinProfile],
    config: &InferenceConfig,
) -> Result<InferenceOutput> {
    let ok_profiles: Vec<&ProteinProfile> = profiles
        .iter()
        .filter(|p| p.status == ProfileStatus::Ok)
        .collect();
    if ok_profiles.is_empty() {
        let counts = FilterCounts::tally(profiles);
        return Err(Error::Data(format!(
            "no proteins passed filtering: {} input ({} psm-filtered, {} replicate-filtered, {} degenerate)",
            counts.total(),
            counts.filtered_psm,
            counts.filtered_replicates,
            counts.filtered_degenerate
        )));
    }

    // Fit and sample per protein; each task owns its derived RNG stream.
    let worker = |profile: &&ProteinProfile| -> (String, Result<(ProteinFit, NullSamples)>) {
        let id = profile.protein_id.clone();
        let outcome = fit_protein(profile, config).map(|fit| {
            let mut rng = rng_from(protein_seed(config.seed, &id, Purpose::NullSampling));
            let samples = sample_null(&fit, config.samples_per_protein, config, &mut rng);
            (fit, samples)
        });
        (id, outcome)
    };
    let outcomes = exec::map_ordered(&ok_profiles, config.threads, worker);

    let mut fits = Vec::new();
    let mut per_protein_samples = Vec::new();
    let mut failed: Vec<String> = Vec::new();
    for (id, outcome) in outcomes {
        match outcome {
            Ok((fit, samples)) => {
                fits.push(fit);
                per_protein_samples.push(samples);
            }
            Err(_) => failed.push(id),
        }
    }

    let null = pool_null(&per_protein_samples, config.samples_per_protein, config.seed)?;

    let p_empirical: Vec<f64> = fits
        .iter()
        .map(|f| empirical_pvalue(f.lambda, &null))
        .collect();
    let p_adjusted = bh_adjust(&p_empirical);

    // Effect sizes from the latent mean curves on the reporting grid.
    let effects = exec::map_ordered(&fits, config.threads, |fit| {
        prediction_grid(&fit.control, &fit.perturbation, config.grid_size)
            .map(|grid| effect_size(&grid).value)
    });

    let mut tested = fits.iter().zip(p_empirical).zip(p_adjusted).zip(effects);
    let mut results = Vec::with_capacity(profiles.len());
    for profile in profiles {
        let status = ResultStatus::from(profile.status);
        let result = match status {
            ResultStatus::Ok => {
                if failed.contains(&profile.protein_id) {
                    ComparisonResult {
                        protein_id: profile.protein_id.clone(),
                        lambda: None,
                        p_empirical: None,
                        p_adjusted: None,
                        effect_size: None,
                        status: ResultStatus::FitFailed,
                    }
                } else {
                    let (((fit, p), q), effect) = tested.next().expect("tested iterator aligned");
                    debug_assert_eq!(fit.protein_id, profile.protein_id);
                    ComparisonResult {
                        protein_id: profile.protein_id.clone(),
                        lambda: Some(fit.lambda),
                        p_empirical: Some(p),
                        p_adjusted: Some(q),
                        effect_size: effect.as_ref().ok().copied(),
                        status: ResultStatus::Ok,
                    }
                }
            }
            _ => ComparisonResult {
                protein_id: profile.protein_id.clone(),
                lambda: None,
                p_empirical: None,
                p_adjusted: None,
                effect_size: None,
                status,
            },
        };
        results.push(result);
    }

    Ok(InferenceOutput { results, null, fits })
}
