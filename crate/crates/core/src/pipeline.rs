//! End-to-end orchestration of ingest, inference, and reporting, as used by
//! the command-line front end.
//!
//! Output directory layout:
//!
//! ```text
//! out/
//!   run_manifest.json        config echo, seed, version, filter counts
//!   results.csv              summary table, one row per input protein
//!   null_distribution.csv    pooled null statistics, one per row
//!   curves/<id>.csv          grid with posterior mean/sd per condition
//!   curves/<id>_corr.csv     joint-model latent correlation on the grid
//!   plots/<id>.svg           melting-curve plot (unless plots are off)
//! ```
//!
//! The manifest is written before any result file so failed runs can be
//! diagnosed. For a fixed seed the result files are byte-identical across
//! re-runs and worker counts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::fmt::sig9;
use crate::inference::{
    run_inference, ComparisonResult, InferenceConfig, InferenceOutput, ResultStatus,
};
use crate::ingest::{self, FilterCounts, ParseOptions};
use crate::reporting::{
    emit_null_distribution, emit_results_table, prediction_grid, render_protein_artifacts,
    write_protein_artifacts, EmitOptions,
};
use crate::synthbench::{calibration_report, read_labels, roc_curve, OperatingPoint};

/// Full configuration of an analysis run.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub out: PathBuf,
    pub control_label: String,
    pub treatment_label: String,
    pub min_psms: u32,
    pub min_replicates: u32,
    /// Null statistics sampled per protein.
    pub null_samples: u32,
    pub seed: u64,
    /// Worker count; 0 uses all available parallelism.
    pub threads: usize,
    /// Prediction grid size.
    pub grid: usize,
    /// Alpha thresholds reported in the summary and benchmark outputs.
    pub alphas: Vec<f64>,
    pub plots: bool,
    /// Also emit per-condition correlation matrices.
    pub per_condition_corr: bool,
}

impl RunConfig {
    pub fn new(input: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        RunConfig {
            input: input.into(),
            out: out.into(),
            control_label: "control".into(),
            treatment_label: "treatment".into(),
            min_psms: 3,
            min_replicates: 2,
            null_samples: 1,
            seed: 42,
            threads: 0,
            grid: 100,
            alphas: vec![0.001, 0.005, 0.01, 0.05],
            plots: true,
            per_condition_corr: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.control_label.is_empty()
            || self.treatment_label.is_empty()
            || self.control_label == self.treatment_label
        {
            return Err(Error::Config(
                "control and treatment labels must be distinct and nonempty".into(),
            ));
        }
        if self.min_replicates < 1 {
            return Err(Error::Config("min-replicates must be >= 1".into()));
        }
        if self.null_samples < 1 {
            return Err(Error::Config("null-samples must be >= 1".into()));
        }
        if self.grid < 2 {
            return Err(Error::Config("grid must be >= 2".into()));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(0.0 < *a && *a < 1.0)) {
            return Err(Error::Config(
                "alpha thresholds must lie strictly between 0 and 1".into(),
            ));
        }
        Ok(())
    }

    fn inference_config(&self) -> InferenceConfig {
        InferenceConfig {
            fit: Default::default(),
            samples_per_protein: self.null_samples,
            seed: self.seed,
            threads: self.threads,
            grid_size: self.grid,
        }
    }
}

/// Summary statistics printed by the front end after an analysis run.
#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeSummary {
    pub proteins_total: usize,
    pub filter_counts: FilterCounts,
    pub fit_failed: usize,
    pub tested: usize,
    pub null_size: usize,
    pub null_skipped: usize,
    /// `(alpha, hits at adjusted p < alpha)` per configured threshold.
    pub hits_at_alpha: Vec<(f64, usize)>,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool: ToolInfo,
    config: &'a RunConfig,
    seed: u64,
    filter_counts: Option<&'a FilterCounts>,
    parse: Option<&'a ingest::ParseDiagnostics>,
}

#[derive(Serialize)]
struct ToolInfo {
    name: &'static str,
    version: &'static str,
}

const TOOL: ToolInfo = ToolInfo {
    name: env!("CARGO_PKG_NAME"),
    version: env!("CARGO_PKG_VERSION"),
};

fn write_manifest(
    config: &RunConfig,
    counts: Option<&FilterCounts>,
    parse: Option<&ingest::ParseDiagnostics>,
) -> Result<()> {
    let manifest = RunManifest {
        tool: TOOL,
        config,
        seed: config.seed,
        filter_counts: counts,
        parse,
    };
    let path = config.out.join("run_manifest.json");
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Data(format!("manifest serialization: {e}")))?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

/// Run ingest + inference + reporting, writing all artifacts under
/// `config.out`. Returns the run summary.
pub fn run_analyze(config: &RunConfig) -> Result<AnalyzeSummary> {
    let (summary, _) = run_analyze_with_results(config)?;
    Ok(summary)
}

/// Like [`run_analyze`] but also returns the per-protein results, for
/// callers (benchmark) that post-process them.
pub fn run_analyze_with_results(
    config: &RunConfig,
) -> Result<(AnalyzeSummary, Vec<ComparisonResult>)> {
    config.validate()?;
    fs::create_dir_all(&config.out).map_err(|e| Error::io(&config.out, e))?;
    fs::create_dir_all(config.out.join("curves")).map_err(|e| Error::io(&config.out, e))?;
    if config.plots {
        fs::create_dir_all(config.out.join("plots")).map_err(|e| Error::io(&config.out, e))?;
    }
    // Early manifest: post-mortem for runs that die during ingest/fitting.
    write_manifest(config, None, None)?;

    let file = fs::File::open(&config.input).map_err(|e| Error::io(&config.input, e))?;
    let options = ParseOptions {
        delimiter: None,
        control_label: config.control_label.clone(),
        treatment_label: config.treatment_label.clone(),
    };
    let ingested = ingest::ingest(file, &options, config.min_psms, config.min_replicates)?;
    let counts = FilterCounts::tally(&ingested.profiles);
    write_manifest(config, Some(&counts), Some(&ingested.diagnostics))?;

    let inference_config = config.inference_config();
    let output = run_inference(&ingested.profiles, &inference_config)?;
    write_outputs(config, &output)?;

    let fit_failed = output
        .results
        .iter()
        .filter(|r| r.status == ResultStatus::FitFailed)
        .count();
    let hits_at_alpha = config
        .alphas
        .iter()
        .map(|&alpha| {
            let hits = output
                .results
                .iter()
                .filter(|r| r.p_adjusted.is_some_and(|q| q < alpha))
                .count();
            (alpha, hits)
        })
        .collect();

    let summary = AnalyzeSummary {
        proteins_total: counts.total(),
        filter_counts: counts,
        fit_failed,
        tested: output.fits.len(),
        null_size: output.null.len(),
        null_skipped: output.null.skipped,
        hits_at_alpha,
    };
    Ok((summary, output.results))
}

fn write_outputs(config: &RunConfig, output: &InferenceOutput) -> Result<()> {
    emit_results_table(&output.results, &config.out.join("results.csv"))?;
    emit_null_distribution(&output.null, &config.out.join("null_distribution.csv"))?;

    let adjusted_by_id: std::collections::BTreeMap<&str, f64> = output
        .results
        .iter()
        .filter_map(|r| r.p_adjusted.map(|q| (r.protein_id.as_str(), q)))
        .collect();
    let emit_options = EmitOptions {
        plots: config.plots,
        per_condition_correlation: config.per_condition_corr,
    };

    // Render per-protein artifacts in parallel, write sequentially.
    let rendered = exec::map_ordered(&output.fits, config.threads, |fit| {
        let grid = prediction_grid(&fit.control, &fit.perturbation, config.grid)?;
        let p_adjusted = adjusted_by_id.get(fit.protein_id.as_str()).copied().unwrap_or(1.0);
        Ok::<_, Error>((
            fit.protein_id.clone(),
            render_protein_artifacts(fit, &grid, p_adjusted, &emit_options),
        ))
    });
    for item in rendered {
        let (protein_id, artifacts) = item?;
        write_protein_artifacts(&config.out, &protein_id, &artifacts)?;
    }
    Ok(())
}

/// Benchmark outcome over a labeled dataset.
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkSummary {
    pub analyze: AnalyzeSummary,
    /// Present when both classes occur among tested proteins.
    pub auc: Option<f64>,
    pub ks: f64,
    /// Fraction of tested proteins with empirical p below 0.05.
    pub hit_fraction: f64,
    pub scored: usize,
    pub unscored: usize,
}

/// Run an analysis and score it against ground-truth labels: ROC/AUC with
/// operating points on adjusted p-values, plus p-value calibration. Writes
/// `roc.csv`, `operating_points.csv`, and `calibration.csv` next to the
/// analysis outputs.
pub fn run_benchmark(config: &RunConfig, labels_path: &Path) -> Result<BenchmarkSummary> {
    let labels = read_labels(labels_path)?;
    let (analyze, results) = run_analyze_with_results(config)?;

    let known: std::collections::BTreeSet<&str> =
        results.iter().map(|r| r.protein_id.as_str()).collect();
    for id in labels.keys() {
        if !known.contains(id.as_str()) {
            return Err(Error::Labels(format!(
                "label file names unknown protein `{id}`"
            )));
        }
    }

    let mut scores = Vec::new();
    let mut affected = Vec::new();
    let mut p_empirical = Vec::new();
    let mut unscored = 0usize;
    for r in &results {
        match (r.p_adjusted, r.p_empirical) {
            (Some(q), Some(p)) => {
                let label = labels.get(&r.protein_id).ok_or_else(|| {
                    Error::Labels(format!("protein `{}` missing from label file", r.protein_id))
                })?;
                scores.push(q);
                affected.push(*label);
                p_empirical.push(p);
            }
            _ => unscored += 1,
        }
    }
    if scores.is_empty() {
        return Err(Error::Data("no tested proteins to benchmark".into()));
    }

    let calibration = calibration_report(&p_empirical);
    let mut calibration_csv = String::from("bin_low,bin_high,count,ks\n");
    for (i, count) in calibration.bins.iter().enumerate() {
        calibration_csv.push_str(&format!(
            "{},{},{count},{}\n",
            sig9(i as f64 / 10.0),
            sig9((i + 1) as f64 / 10.0),
            sig9(calibration.ks)
        ));
    }
    let calibration_path = config.out.join("calibration.csv");
    fs::write(&calibration_path, calibration_csv).map_err(|e| Error::io(&calibration_path, e))?;

    let hit_fraction =
        p_empirical.iter().filter(|p| **p < 0.05).count() as f64 / p_empirical.len() as f64;

    let both_classes = affected.iter().any(|a| *a) && affected.iter().any(|a| !*a);
    let auc = if both_classes {
        let roc = roc_curve(&scores, &affected, &config.alphas)?;
        let mut roc_csv = String::from("fpr,tpr\n");
        for (fpr, tpr) in &roc.points {
            roc_csv.push_str(&format!("{},{}\n", sig9(*fpr), sig9(*tpr)));
        }
        let roc_path = config.out.join("roc.csv");
        fs::write(&roc_path, roc_csv).map_err(|e| Error::io(&roc_path, e))?;

        let mut op_csv = String::from("alpha,sensitivity,specificity\n");
        for OperatingPoint { alpha, sensitivity, specificity } in &roc.operating_points {
            op_csv.push_str(&format!(
                "{},{},{}\n",
                sig9(*alpha),
                sig9(*sensitivity),
                sig9(*specificity)
            ));
        }
        let op_path = config.out.join("operating_points.csv");
        fs::write(&op_path, op_csv).map_err(|e| Error::io(&op_path, e))?;
        Some(roc.auc)
    } else {
        None
    };

    Ok(BenchmarkSummary {
        analyze,
        auc,
        ks: calibration.ks,
        hit_fraction,
        scored: scores.len(),
        unscored,
    })
}
