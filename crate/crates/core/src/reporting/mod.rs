//! Result emission: prediction grids, effect sizes, result tables, per-protein
//! curve files and plots.
//!
//! Emission is pure: fixed float formatting, no timestamps, deterministic
//! ordering — re-running a pipeline produces byte-identical files.

mod svg;

pub use svg::render_protein_plot;

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fmt::sig9;
use crate::gp::GpModel;
use crate::inference::{ComparisonResult, NullDistribution, ProteinFit};

/// Dense temperature grid with per-condition posterior summaries.
#[derive(Debug, Clone)]
pub struct PredictionGrid {
    /// Strictly increasing, spanning the observed temperature range.
    pub temps: Vec<f64>,
    pub control_mean: Vec<f64>,
    pub control_sd: Vec<f64>,
    pub perturbation_mean: Vec<f64>,
    pub perturbation_sd: Vec<f64>,
}

/// Area between the two mean melting curves.
#[derive(Debug, Clone, Copy)]
pub struct EffectSize {
    /// Trapezoidal integral of the absolute mean difference,
    /// in degrees Celsius times scaled abundance.
    pub value: f64,
    /// Signed variant (control minus perturbation); crossings cancel.
    pub signed: f64,
    pub grid_size: usize,
}

/// Uniform grid over the union temperature range of both designs, with the
/// latent (noise-free) posterior mean and standard deviation per condition.
pub fn prediction_grid(
    control: &GpModel,
    perturbation: &GpModel,
    grid_size: usize,
) -> Result<PredictionGrid> {
    if grid_size < 2 {
        return Err(Error::Config(format!("grid size must be >= 2, got {grid_size}")));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &t in control
        .design()
        .temps()
        .iter()
        .chain(perturbation.design().temps())
    {
        lo = lo.min(t);
        hi = hi.max(t);
    }
    if !(hi > lo) {
        return Err(Error::Data("cannot build grid: degenerate temperature range".into()));
    }
    let temps = grid_points(lo, hi, grid_size);
    let control_pred = control.posterior_predict(&temps);
    let perturbation_pred = perturbation.posterior_predict(&temps);
    Ok(PredictionGrid {
        temps,
        control_mean: control_pred.latent_mean.iter().copied().collect(),
        control_sd: control_pred.latent_sd(),
        perturbation_mean: perturbation_pred.latent_mean.iter().copied().collect(),
        perturbation_sd: perturbation_pred.latent_sd(),
    })
}

/// `grid_size` points from `lo` to `hi` inclusive, exact at both ends.
pub fn grid_points(lo: f64, hi: f64, grid_size: usize) -> Vec<f64> {
    let last = (grid_size - 1) as f64;
    (0..grid_size)
        .map(|i| {
            if i + 1 == grid_size {
                hi
            } else {
                lo + (hi - lo) * i as f64 / last
            }
        })
        .collect()
}

/// Trapezoidal area between the condition mean curves over the grid.
pub fn effect_size(grid: &PredictionGrid) -> EffectSize {
    let mut absolute = 0.0;
    let mut signed = 0.0;
    for i in 1..grid.temps.len() {
        let dt = grid.temps[i] - grid.temps[i - 1];
        let d0 = grid.control_mean[i - 1] - grid.perturbation_mean[i - 1];
        let d1 = grid.control_mean[i] - grid.perturbation_mean[i];
        // Trapezoid on |d|, split at a sign change so crossings do not cancel.
        if d0 * d1 < 0.0 {
            let cross = d0 / (d0 - d1);
            absolute += 0.5 * (d0.abs() * cross + d1.abs() * (1.0 - cross)) * dt;
        } else {
            absolute += 0.5 * (d0.abs() + d1.abs()) * dt;
        }
        signed += 0.5 * (d0 + d1) * dt;
    }
    EffectSize {
        value: absolute,
        signed,
        grid_size: grid.temps.len(),
    }
}

fn create_file(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn write_all(path: &Path, contents: &str) -> Result<()> {
    let mut f = create_file(path)?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(sig9).unwrap_or_default()
}

/// Write the summary table: exact header
/// `protein_id,lambda,p_value,p_adjusted,effect_size,status`, one row per
/// input protein (filtered proteins keep empty statistic cells), sorted by
/// adjusted p-value then protein id, floats at 9 significant digits.
pub fn emit_results_table(results: &[ComparisonResult], path: &Path) -> Result<()> {
    if results.is_empty() {
        return Err(Error::Data("no results to write".into()));
    }
    let mut order: Vec<&ComparisonResult> = results.iter().collect();
    order.sort_by(|a, b| {
        match (a.p_adjusted, b.p_adjusted) {
            (Some(x), Some(y)) => x.partial_cmp(&y).expect("finite p"),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        }
        .then_with(|| a.protein_id.cmp(&b.protein_id))
    });

    let mut out = String::from("protein_id,lambda,p_value,p_adjusted,effect_size,status\n");
    for r in order {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.protein_id,
            opt(r.lambda),
            opt(r.p_empirical),
            opt(r.p_adjusted),
            opt(r.effect_size),
            r.status.as_str()
        ));
    }
    write_all(path, &out)
}

/// Write the pooled null samples, one statistic per row.
pub fn emit_null_distribution(null: &NullDistribution, path: &Path) -> Result<()> {
    let mut out = String::from("lambda\n");
    for s in &null.samples {
        out.push_str(&sig9(*s));
        out.push('\n');
    }
    write_all(path, &out)
}

/// Latent correlation matrix of a model on the grid temperatures
/// (covariance normalized to unit diagonal).
pub fn latent_correlation(model: &GpModel, temps: &[f64]) -> DMatrix<f64> {
    let cov = model.posterior_predict(temps).latent_cov;
    let n = cov.nrows();
    let sd: Vec<f64> = (0..n).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    let mut corr = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            corr[(i, j)] = if i == j {
                1.0
            } else if sd[i] > 0.0 && sd[j] > 0.0 {
                (cov[(i, j)] / (sd[i] * sd[j])).clamp(-1.0, 1.0)
            } else {
                0.0
            };
        }
    }
    corr
}

fn correlation_csv(corr: &DMatrix<f64>, temps: &[f64]) -> String {
    let mut out = String::from("temperature");
    for t in temps {
        out.push(',');
        out.push_str(&sig9(*t));
    }
    out.push('\n');
    for i in 0..corr.nrows() {
        out.push_str(&sig9(temps[i]));
        for j in 0..corr.ncols() {
            out.push(',');
            out.push_str(&sig9(corr[(i, j)]));
        }
        out.push('\n');
    }
    out
}

/// Options for per-protein file emission.
#[derive(Debug, Clone, Copy, Default)]
pub struct EmitOptions {
    pub plots: bool,
    /// Also emit per-condition correlation matrices next to the joint one.
    pub per_condition_correlation: bool,
}

/// Rendered per-protein artifacts, ready to be written.
pub struct ProteinArtifacts {
    pub curve_csv: String,
    pub correlation_csv: String,
    pub control_correlation_csv: Option<String>,
    pub perturbation_correlation_csv: Option<String>,
    pub plot_svg: Option<String>,
}

/// Render the per-protein artifacts: (a) the grid CSV with per-condition
/// posterior mean and standard deviation, (b) the joint model's latent
/// correlation matrix on the grid, and optionally (c) an SVG plot of data,
/// means, and +/-2 sd bands annotated with the significance stars.
pub fn render_protein_artifacts(
    fit: &ProteinFit,
    grid: &PredictionGrid,
    p_adjusted: f64,
    options: &EmitOptions,
) -> ProteinArtifacts {
    let mut curve_csv = String::from(
        "temperature,control_mean,control_sd,perturbation_mean,perturbation_sd\n",
    );
    for i in 0..grid.temps.len() {
        curve_csv.push_str(&format!(
            "{},{},{},{},{}\n",
            sig9(grid.temps[i]),
            sig9(grid.control_mean[i]),
            sig9(grid.control_sd[i]),
            sig9(grid.perturbation_mean[i]),
            sig9(grid.perturbation_sd[i]),
        ));
    }

    let joint_corr = latent_correlation(&fit.joint, &grid.temps);
    let correlation = correlation_csv(&joint_corr, &grid.temps);
    let (control_corr, perturbation_corr) = if options.per_condition_correlation {
        (
            Some(correlation_csv(&latent_correlation(&fit.control, &grid.temps), &grid.temps)),
            Some(correlation_csv(
                &latent_correlation(&fit.perturbation, &grid.temps),
                &grid.temps,
            )),
        )
    } else {
        (None, None)
    };

    let plot_svg = options
        .plots
        .then(|| render_protein_plot(fit, grid, p_adjusted));

    ProteinArtifacts {
        curve_csv,
        correlation_csv: correlation,
        control_correlation_csv: control_corr,
        perturbation_correlation_csv: perturbation_corr,
        plot_svg,
    }
}

/// Write rendered artifacts under `curves/` and `plots/` of the output dir.
pub fn write_protein_artifacts(
    out_dir: &Path,
    protein_id: &str,
    artifacts: &ProteinArtifacts,
) -> Result<()> {
    let curves = out_dir.join("curves");
    write_all(&curves.join(format!("{protein_id}.csv")), &artifacts.curve_csv)?;
    write_all(
        &curves.join(format!("{protein_id}_corr.csv")),
        &artifacts.correlation_csv,
    )?;
    if let Some(csv) = &artifacts.control_correlation_csv {
        write_all(&curves.join(format!("{protein_id}_corr_control.csv")), csv)?;
    }
    if let Some(csv) = &artifacts.perturbation_correlation_csv {
        write_all(&curves.join(format!("{protein_id}_corr_perturbation.csv")), csv)?;
    }
    if let Some(svg) = &artifacts.plot_svg {
        write_all(&out_dir.join("plots").join(format!("{protein_id}.svg")), svg)?;
    }
    Ok(())
}

/// Star annotation for adjusted p-values: `***` below 0.001, `**` below
/// 0.01, `*` below 0.05, `ns` otherwise.
pub fn significance_stars(p_adjusted: f64) -> &'static str {
    if p_adjusted < 0.001 {
        "***"
    } else if p_adjusted < 0.01 {
        "**"
    } else if p_adjusted < 0.05 {
        "*"
    } else {
        "ns"
    }
}
