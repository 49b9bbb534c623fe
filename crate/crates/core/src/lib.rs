//! Differential melting-curve analysis for thermal proteome profiling (TPP)
//! experiments.
//!
//! A TPP experiment measures the soluble abundance of each protein across a
//! temperature gradient under two conditions (control and a perturbation).
//! This crate models each protein's melting curve with exact Gaussian-process
//! regression (RBF kernel, constant mean, type-II MLE), tests for differential
//! melting with a likelihood-ratio statistic against a joint null model, and
//! derives empirical p-values from a pooled null distribution sampled from the
//! joint model's posterior predictive.
//!
//! The pipeline stages map onto the top-level modules:
//!
//! * [`ingest`] — parse long-format abundance tables, apply PSM/replicate
//!   quality filters, median-normalize per sample column, min-max scale per
//!   protein.
//! * [`gp`] — exact GP regression: covariance construction, marginal
//!   log-likelihood with analytic gradients, BFGS hyperparameter fitting,
//!   posterior prediction.
//! * [`inference`] — per-protein likelihood-ratio statistics, null sampling,
//!   empirical and Benjamini-Hochberg adjusted p-values.
//! * [`reporting`] — prediction grids, effect sizes, CSV/SVG emission.
//! * [`synthbench`] — synthetic ground-truth datasets plus ROC/AUC and
//!   calibration scoring.
//! * [`pipeline`] — end-to-end orchestration used by the CLI.
//!
//! Conditions are modeled as independent GPs (batched for efficiency, not a
//! cross-condition covariance model). All randomness flows from a single
//! master seed through per-protein streams, so results are identical for any
//! worker count. The `parallel` feature (default) runs per-protein work on a
//! rayon pool; without it the crate falls back to sequential execution.

pub mod error;
pub mod exec;
pub mod fmt;
pub mod gp;
pub mod inference;
pub mod ingest;
pub mod pipeline;
pub mod reporting;
pub mod seed;
pub mod synthbench;

pub use error::Error;
