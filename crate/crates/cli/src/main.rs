//! Command-line front end: `analyze`, `generate`, and `benchmark`.
//!
//! Exit codes are a stable contract for scripting: 0 success, 1 for
//! configuration or I/O problems, 2 for data problems (a diagnostics file is
//! written next to the outputs when possible).

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use thermelt::pipeline::{run_analyze, run_benchmark, RunConfig};
use thermelt::synthbench::{self, CurveFamily, PerturbationModel, SyntheticSpec};
use thermelt::Error;

use config::FileConfig;

#[derive(Parser)]
#[command(
    name = "thermelt",
    version,
    about = "Differential melting-curve analysis for thermal proteome profiling data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a long-format abundance table.
    Analyze(AnalyzeArgs),
    /// Generate a labeled synthetic dataset.
    Generate(GenerateArgs),
    /// Analyze a labeled dataset and score it against the truth labels.
    Benchmark(BenchmarkArgs),
}

#[derive(Args, Clone)]
struct AnalyzeArgs {
    /// Input table (CSV or TSV, long format).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional TOML config file; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Condition label treated as control.
    #[arg(long)]
    control_label: Option<String>,
    /// Condition label treated as the perturbation.
    #[arg(long)]
    treatment_label: Option<String>,
    /// Minimum peptide spectral matches per protein.
    #[arg(long)]
    min_psms: Option<u32>,
    /// Minimum replicates per condition.
    #[arg(long)]
    min_replicates: Option<u32>,
    /// Null statistics sampled per protein.
    #[arg(long)]
    null_samples: Option<u32>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Prediction grid size.
    #[arg(long)]
    grid: Option<usize>,
    /// Comma-separated alpha thresholds.
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    /// Skip SVG plot generation.
    #[arg(long)]
    no_plots: bool,
    /// Also emit per-condition correlation matrices.
    #[arg(long)]
    corr_per_condition: bool,
}

impl AnalyzeArgs {
    fn into_run_config(self) -> anyhow::Result<RunConfig> {
        let file = match &self.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let input = self
            .input
            .or(file.input)
            .ok_or_else(|| anyhow::anyhow!("--input is required (flag or config file)"))?;
        let out = self
            .out
            .or(file.out)
            .ok_or_else(|| anyhow::anyhow!("--out is required (flag or config file)"))?;

        let mut config = RunConfig::new(input, out);
        if let Some(v) = self.control_label.or(file.control_label) {
            config.control_label = v;
        }
        if let Some(v) = self.treatment_label.or(file.treatment_label) {
            config.treatment_label = v;
        }
        if let Some(v) = self.min_psms.or(file.min_psms) {
            config.min_psms = v;
        }
        if let Some(v) = self.min_replicates.or(file.min_replicates) {
            config.min_replicates = v;
        }
        if let Some(v) = self.null_samples.or(file.null_samples) {
            config.null_samples = v;
        }
        if let Some(v) = self.seed.or(file.seed) {
            config.seed = v;
        }
        if let Some(v) = self.threads.or(file.threads) {
            config.threads = v;
        }
        if let Some(v) = self.grid.or(file.grid) {
            config.grid = v;
        }
        if let Some(v) = self.alpha.or(file.alpha) {
            config.alphas = v;
        }
        if self.no_plots || file.no_plots.unwrap_or(false) {
            config.plots = false;
        }
        if self.corr_per_condition || file.corr_per_condition.unwrap_or(false) {
            config.per_condition_corr = true;
        }
        Ok(config)
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Output directory for dataset.csv and truth_labels.csv.
    #[arg(long)]
    out: PathBuf,
    /// Number of proteins.
    #[arg(long, default_value_t = 50)]
    proteins: usize,
    /// Fraction of proteins affected by the perturbation.
    #[arg(long, default_value_t = 0.2)]
    fraction_perturbed: f64,
    /// Curve family: sigmoid, gp, or mixed.
    #[arg(long, default_value = "sigmoid")]
    family: String,
    /// Number of temperatures in the gradient.
    #[arg(long, default_value_t = 10)]
    temps: usize,
    /// Gradient start, degrees Celsius.
    #[arg(long, default_value_t = 37.0)]
    tmin: f64,
    /// Gradient end, degrees Celsius.
    #[arg(long, default_value_t = 67.0)]
    tmax: f64,
    /// Replicates per condition.
    #[arg(long, default_value_t = 2)]
    replicates: u32,
    /// Observation noise standard deviation (scaled units).
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    /// Melting-point shift for affected sigmoid proteins, degrees Celsius.
    #[arg(long, default_value_t = 5.0)]
    tm_shift: f64,
    /// Relative amplitude change for affected sigmoid proteins.
    #[arg(long, default_value_t = 0.0)]
    amplitude_change: f64,
    /// Mean-curve shift for affected GP-drawn proteins (scaled units).
    #[arg(long, default_value_t = 0.3)]
    value_shift: f64,
    /// Generator seed.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Condition label written for control rows.
    #[arg(long, default_value = "control")]
    control_label: String,
    /// Condition label written for perturbation rows.
    #[arg(long, default_value = "treatment")]
    treatment_label: String,
}

impl GenerateArgs {
    fn spec(&self) -> anyhow::Result<SyntheticSpec> {
        let family = match self.family.as_str() {
            "sigmoid" => CurveFamily::Sigmoid,
            "gp" => CurveFamily::GpDraw,
            "mixed" => CurveFamily::Mixed,
            other => anyhow::bail!("unknown --family `{other}` (expected sigmoid, gp, or mixed)"),
        };
        if self.temps < 2 || self.tmax <= self.tmin {
            anyhow::bail!("need at least 2 temperatures with tmax > tmin");
        }
        let temps = (0..self.temps)
            .map(|i| self.tmin + (self.tmax - self.tmin) * i as f64 / (self.temps - 1) as f64)
            .collect();
        Ok(SyntheticSpec {
            proteins: self.proteins,
            fraction_perturbed: self.fraction_perturbed,
            family,
            temps,
            replicates: self.replicates,
            noise_sd: self.noise,
            perturbation: PerturbationModel {
                tm_shift: self.tm_shift,
                amplitude_change: self.amplitude_change,
                value_shift: self.value_shift,
            },
            seed: self.seed,
        })
    }
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    analyze: AnalyzeArgs,
    /// Truth labels CSV (default: truth_labels.csv next to the input).
    #[arg(long)]
    labels: Option<PathBuf>,
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_config() => 1,
        Some(_) => 2,
        // Argument-level problems (missing flags, bad family strings).
        None => 1,
    }
}

/// Best-effort diagnostics file for data errors.
fn write_diagnostics(out: Option<&PathBuf>, err: &anyhow::Error) {
    if let Some(out) = out {
        let payload = format!("{{\n  \"error\": {:?}\n}}\n", err.to_string());
        let _ = std::fs::create_dir_all(out);
        let _ = std::fs::write(out.join("diagnostics.json"), payload);
    }
}

fn run_analyze_command(args: AnalyzeArgs) -> anyhow::Result<()> {
    let config = args.into_run_config()?;
    let out_dir = config.out.clone();
    let summary = run_analyze(&config).inspect_err(|e| {
        if !e.is_config() {
            write_diagnostics(Some(&out_dir), &anyhow::anyhow!(e.to_string()));
        }
    })?;
    println!(
        "proteins: {} in, {} ok, {} psm-filtered, {} replicate-filtered, {} degenerate, {} fit-failed",
        summary.proteins_total,
        summary.filter_counts.ok,
        summary.filter_counts.filtered_psm,
        summary.filter_counts.filtered_replicates,
        summary.filter_counts.filtered_degenerate,
        summary.fit_failed,
    );
    println!(
        "null distribution: {} samples ({} skipped)",
        summary.null_size, summary.null_skipped
    );
    for (alpha, hits) in &summary.hits_at_alpha {
        println!("hits at adjusted p < {alpha}: {hits}");
    }
    Ok(())
}

fn run_generate_command(args: GenerateArgs) -> anyhow::Result<()> {
    let spec = args.spec()?;
    let dataset = synthbench::generate(&spec)?;
    synthbench::write_dataset(&dataset, &args.out, &args.control_label, &args.treatment_label)?;
    let affected = dataset.labels.values().filter(|&&a| a).count();
    println!(
        "wrote {} rows for {} proteins ({} affected) to {}",
        dataset.measurements.len(),
        dataset.labels.len(),
        affected,
        args.out.display()
    );
    Ok(())
}

fn run_benchmark_command(args: BenchmarkArgs) -> anyhow::Result<()> {
    let labels = args.labels.clone();
    let config = args.analyze.into_run_config()?;
    let labels = labels.unwrap_or_else(|| {
        config
            .input
            .parent()
            .unwrap_or_else(|| std::path::Path::new("."))
            .join("truth_labels.csv")
    });
    let out_dir = config.out.clone();
    let summary = run_benchmark(&config, &labels).inspect_err(|e| {
        if !e.is_config() {
            write_diagnostics(Some(&out_dir), &anyhow::anyhow!(e.to_string()));
        }
    })?;
    println!(
        "scored {} proteins ({} without statistics)",
        summary.scored, summary.unscored
    );
    match summary.auc {
        Some(auc) => println!("AUC = {auc:.4}"),
        None => println!("AUC not computed (single-class labels)"),
    }
    println!("KS vs Uniform(0,1) = {:.4}", summary.ks);
    println!("fraction of empirical p < 0.05: {:.4}", summary.hit_fraction);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version are not errors.
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };

    let result = match cli.command {
        Command::Analyze(args) => run_analyze_command(args),
        Command::Generate(args) => run_generate_command(args),
        Command::Benchmark(args) => run_benchmark_command(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
