//! Exact Gaussian-process regression with an RBF kernel.
//!
//! The model family is `y ~ N(m·1, K_y)` with
//! `K_y = sigma_f^2 * K_RBF(X, X) + (sigma_n^2 + jitter) * I`, i.e. a unit
//! RBF kernel scaled by a signal variance, plus independent observation
//! noise and a constant mean. Replicates enter as repeated observations at
//! the same temperature. All linear algebra goes through one Cholesky
//! factorization per hyperparameter setting.

mod bfgs;
mod fit;

pub use fit::{fit_gp, FitConfig, FitDiagnostics};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Kernel hyperparameters plus the constant mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpHyperparams {
    /// RBF length scale, in degrees Celsius.
    pub length_scale: f64,
    /// Kernel amplitude (scaled-abundance units squared).
    pub signal_variance: f64,
    /// Observation noise variance (scaled-abundance units squared).
    pub noise_variance: f64,
    /// Constant mean (scaled-abundance units).
    pub mean: f64,
}

impl GpHyperparams {
    pub fn new(
        length_scale: f64,
        signal_variance: f64,
        noise_variance: f64,
        mean: f64,
    ) -> Result<Self> {
        let hp = GpHyperparams {
            length_scale,
            signal_variance,
            noise_variance,
            mean,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| -> Result<()> {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Fit(format!("{name} must be positive and finite, got {v}")));
            }
            Ok(())
        };
        positive(self.length_scale, "length_scale")?;
        positive(self.signal_variance, "signal_variance")?;
        positive(self.noise_variance, "noise_variance")?;
        if !self.mean.is_finite() {
            return Err(Error::Fit(format!("mean must be finite, got {}", self.mean)));
        }
        Ok(())
    }
}

/// Squared-exponential kernel `exp(-(x1-x2)^2 / (2 l^2))` for scalar inputs.
///
/// Symmetric, equal to 1 exactly when `x1 == x2`. `length_scale` must be
/// positive.
pub fn rbf_kernel(x1: f64, x2: f64, length_scale: f64) -> f64 {
    assert!(
        length_scale > 0.0,
        "rbf_kernel: length_scale must be positive, got {length_scale}"
    );
    let d = (x1 - x2) / length_scale;
    (-0.5 * d * d).exp()
}

/// Training design: temperatures and min-max scaled abundances.
///
/// May be empty, in which case a model built on it predicts from the prior.
#[derive(Debug, Clone, PartialEq)]
pub struct GpDesign {
    temps: Vec<f64>,
    values: Vec<f64>,
}

impl GpDesign {
    pub fn new(temps: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if temps.len() != values.len() {
            return Err(Error::Fit(format!(
                "design has {} temperatures but {} values",
                temps.len(),
                values.len()
            )));
        }
        if temps.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Fit("design contains non-finite values".into()));
        }
        Ok(GpDesign { temps, values })
    }

    pub fn len(&self) -> usize {
        self.temps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.temps.is_empty()
    }

    pub fn temps(&self) -> &[f64] {
        &self.temps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Temperature span of the design; 1.0 for degenerate designs so that
    /// span-derived quantities stay usable.
    pub fn span(&self) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &t in &self.temps {
            lo = lo.min(t);
            hi = hi.max(t);
        }
        if hi > lo {
            hi - lo
        } else {
            1.0
        }
    }

    /// Reorder by (temperature, value) and return the permutation applied:
    /// `perm[k]` is the original index of sorted point `k`. Sorting pooled
    /// designs canonically makes fits independent of condition label order.
    pub fn canonical_sort(&self) -> (GpDesign, Vec<usize>) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            (self.temps[a], self.values[a])
                .partial_cmp(&(self.temps[b], self.values[b]))
                .expect("finite design values")
        });
        let sorted = GpDesign {
            temps: idx.iter().map(|&i| self.temps[i]).collect(),
            values: idx.iter().map(|&i| self.values[i]).collect(),
        };
        (sorted, idx)
    }
}

/// Covariance matrix `K_y[i][j] = sigma_f^2 k_RBF(x_i, x_j) + (sigma_n^2 + jitter) 1[i=j]`.
pub fn build_covariance(temps: &[f64], hp: &GpHyperparams, jitter: f64) -> DMatrix<f64> {
    let n = temps.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = hp.signal_variance * rbf_kernel(temps[i], temps[j], hp.length_scale);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += hp.noise_variance + jitter;
    }
    k
}

/// Jitter escalation ladder: `initial, 10x, ... , max`.
fn jitter_ladder(initial: f64, max: f64) -> impl Iterator<Item = f64> {
    let mut j = initial;
    let mut done = false;
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let cur = j;
        if cur >= max {
            done = true;
        }
        j *= 10.0;
        Some(cur)
    })
}

/// A fitted (or directly constructed) GP model with its cached factorization.
#[derive(Debug, Clone)]
pub struct GpModel {
    hyperparams: GpHyperparams,
    design: GpDesign,
    mll: f64,
    jitter: f64,
    diagnostics: FitDiagnostics,
    // None iff the design is empty.
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
}

impl GpModel {
    /// Build a model at fixed hyperparameters and fixed jitter (no
    /// escalation). Errors if the covariance cannot be factorized.
    pub fn with_hyperparams(design: GpDesign, hp: GpHyperparams, jitter: f64) -> Result<Self> {
        hp.validate()?;
        if design.is_empty() {
            return Ok(GpModel {
                hyperparams: hp,
                design,
                mll: 0.0,
                jitter,
                diagnostics: FitDiagnostics::default(),
                chol: None,
                alpha: DVector::zeros(0),
            });
        }
        let k = build_covariance(design.temps(), &hp, jitter);
        let chol = Cholesky::new(k).ok_or_else(|| {
            Error::Fit(format!(
                "covariance factorization failed at jitter {jitter:e}"
            ))
        })?;
        let r = DVector::from_iterator(design.len(), design.values().iter().map(|v| v - hp.mean));
        let alpha = chol.solve(&r);
        let mll = mll_from_factorization(&chol, &r, &alpha);
        Ok(GpModel {
            hyperparams: hp,
            design,
            mll,
            jitter,
            diagnostics: FitDiagnostics::default(),
            chol: Some(chol),
            alpha,
        })
    }

    /// Like [`GpModel::with_hyperparams`] but escalates jitter tenfold up to
    /// `max_jitter` on factorization failure.
    pub fn with_escalating_jitter(
        design: GpDesign,
        hp: GpHyperparams,
        initial_jitter: f64,
        max_jitter: f64,
    ) -> Result<Self> {
        let mut last = None;
        for jitter in jitter_ladder(initial_jitter, max_jitter) {
            match GpModel::with_hyperparams(design.clone(), hp, jitter) {
                Ok(model) => return Ok(model),
                Err(e) => last = Some(e),
            }
        }
        Err(last.unwrap_or_else(|| Error::Fit("empty jitter ladder".into())))
    }

    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hyperparams
    }

    pub fn design(&self) -> &GpDesign {
        &self.design
    }

    /// Marginal log-likelihood (sum over observations, not per-point).
    pub fn mll(&self) -> f64 {
        self.mll
    }

    /// Marginal log-likelihood per observation. This is the scale on which
    /// likelihood-ratio statistics are formed downstream.
    pub fn per_point_mll(&self) -> f64 {
        if self.design.is_empty() {
            0.0
        } else {
            self.mll / self.design.len() as f64
        }
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    pub(crate) fn set_diagnostics(&mut self, d: FitDiagnostics) {
        self.diagnostics = d;
    }

    /// Lower-triangular Cholesky factor of `K_y`, if the design is nonempty.
    pub fn chol_l(&self) -> Option<DMatrix<f64>> {
        self.chol.as_ref().map(|c| c.l())
    }

    /// Posterior over the latent function and the posterior predictive at
    /// `test_temps`.
    pub fn posterior_predict(&self, test_temps: &[f64]) -> PosteriorPrediction {
        let hp = &self.hyperparams;
        let m = test_temps.len();
        let mut kss = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = hp.signal_variance * rbf_kernel(test_temps[i], test_temps[j], hp.length_scale);
                kss[(i, j)] = v;
                kss[(j, i)] = v;
            }
        }

        let (latent_mean, mut latent_cov) = match &self.chol {
            None => (DVector::from_element(m, hp.mean), kss),
            Some(chol) => {
                let n = self.design.len();
                let mut ks = DMatrix::zeros(n, m);
                for i in 0..n {
                    for j in 0..m {
                        ks[(i, j)] = hp.signal_variance
                            * rbf_kernel(self.design.temps[i], test_temps[j], hp.length_scale);
                    }
                }
                let mean = DVector::from_element(m, hp.mean) + ks.transpose() * &self.alpha;
                let kinv_ks = chol.solve(&ks);
                let cov = kss - ks.transpose() * kinv_ks;
                (mean, cov)
            }
        };

        // Enforce exact symmetry and a nonnegative diagonal; conditioning can
        // leave -1e-12-scale residue on near-interpolated points.
        for i in 0..m {
            for j in 0..i {
                let v = 0.5 * (latent_cov[(i, j)] + latent_cov[(j, i)]);
                latent_cov[(i, j)] = v;
                latent_cov[(j, i)] = v;
            }
            if latent_cov[(i, i)] < 0.0 {
                debug_assert!(latent_cov[(i, i)] >= -1e-10, "latent variance too negative");
                latent_cov[(i, i)] = 0.0;
            }
        }

        let mut predictive_cov = latent_cov.clone();
        for i in 0..m {
            predictive_cov[(i, i)] += hp.noise_variance;
        }

        PosteriorPrediction {
            inputs: test_temps.to_vec(),
            predictive_mean: latent_mean.clone(),
            latent_mean,
            latent_cov,
            predictive_cov,
        }
    }

    /// Gradient of the marginal log-likelihood with respect to
    /// `(log length_scale, log signal_variance, log noise_variance, mean)`.
    pub fn mll_gradient(&self) -> [f64; 4] {
        let chol = match &self.chol {
            Some(c) => c,
            None => return [0.0; 4],
        };
        let hp = &self.hyperparams;
        let n = self.design.len();
        let temps = self.design.temps();
        let kinv = chol.inverse();
        let alpha = &self.alpha;

        // d mll / d theta = 0.5 tr((alpha alpha^T - K^-1) dK/dtheta)
        let mut g_log_l = 0.0;
        let mut g_log_sf = 0.0;
        let mut g_log_sn = 0.0;
        let ll2 = hp.length_scale * hp.length_scale;
        for i in 0..n {
            for j in 0..n {
                let b = alpha[i] * alpha[j] - kinv[(i, j)];
                let rbf = hp.signal_variance * rbf_kernel(temps[i], temps[j], hp.length_scale);
                let d = temps[i] - temps[j];
                g_log_l += b * rbf * (d * d / ll2);
                g_log_sf += b * rbf;
                if i == j {
                    g_log_sn += b * hp.noise_variance;
                }
            }
        }
        let g_mean = alpha.sum();
        [0.5 * g_log_l, 0.5 * g_log_sf, 0.5 * g_log_sn, g_mean]
    }
}

/// `-(1/2) r^T K^-1 r - (1/2) log|K| - (n/2) log 2pi` from a factorization.
fn mll_from_factorization(
    chol: &Cholesky<f64, Dyn>,
    residual: &DVector<f64>,
    alpha: &DVector<f64>,
) -> f64 {
    let n = residual.len() as f64;
    let quad = residual.dot(alpha);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    -0.5 * quad - log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// Convenience: marginal log-likelihood of a design under fixed
/// hyperparameters (jitter-free; errors if `K_y` is not positive definite).
pub fn marginal_log_likelihood(design: &GpDesign, hp: &GpHyperparams) -> Result<f64> {
    Ok(GpModel::with_hyperparams(design.clone(), *hp, 0.0)?.mll())
}

/// Posterior of the latent melting curve and the posterior predictive of
/// observations at a set of test temperatures.
#[derive(Debug, Clone)]
pub struct PosteriorPrediction {
    pub inputs: Vec<f64>,
    /// Mean of `p(f* | x*, X, y)`.
    pub latent_mean: DVector<f64>,
    /// Covariance of `p(f* | x*, X, y)`.
    pub latent_cov: DMatrix<f64>,
    /// Mean of `p(y* | x*, X, y)` (equals the latent mean).
    pub predictive_mean: DVector<f64>,
    /// Covariance of `p(y* | x*, X, y)` = latent covariance + noise on the diagonal.
    pub predictive_cov: DMatrix<f64>,
}

impl PosteriorPrediction {
    /// Latent standard deviations (diagonal, clamped at zero).
    pub fn latent_sd(&self) -> Vec<f64> {
        self.latent_cov
            .diagonal()
            .iter()
            .map(|&v| v.max(0.0).sqrt())
            .collect()
    }
}
