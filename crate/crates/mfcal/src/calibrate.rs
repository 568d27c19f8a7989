//! Modular estimation of the fidelity-scaling parameter.
//!
//! With the low-fidelity emulator held fixed, the high-fidelity data
//! enter only through the residuals
//!
//! ```text
//!     r(u) = Y_H - u * yhat_L(X_H),
//! ```
//!
//! which under the model are a zero-mean GP (the discrepancy) plus
//! noise. For each candidate `u` the discrepancy hyperparameters are
//! refit by maximum likelihood, giving a profiled objective
//!
//! ```text
//!     J(u) = log p(r(u) | theta_hat(u)) + log p(u),
//! ```
//!
//! maximized by a coarse grid scan plus golden-section refinement.
//! The objective is cheap per `u` (the discrepancy dataset is small)
//! but non-convex, because the inner refit can snap between local
//! modes as `u` moves.
//!
//! Uncertainty in `u` comes from leave-one-out re-estimation: drop one
//! high-fidelity point, re-estimate, and treat the collection of
//! estimates as an empirical posterior. A smoothed bootstrap over
//! those estimates supplies the posterior draws that the decision
//! analysis consumes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gp::{fit_gp_mle_with, FitOptions, GpFit, MeanFunction, NoiseSpec};
use crate::kernel::KernelParams;
use crate::seed::{streams, Seed};
use crate::stats;

/// Prior over the scaling parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CalibrationPrior {
    /// Improper flat prior over the search interval.
    Flat,
    Gaussian {
        mean: f64,
        sd: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
}

impl CalibrationPrior {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CalibrationPrior::Flat => Ok(()),
            CalibrationPrior::Gaussian { mean, sd } => {
                if !(mean.is_finite() && sd.is_finite() && sd > 0.0) {
                    Err(Error::domain(format!(
                        "gaussian prior needs finite mean and positive sd, got ({mean}, {sd})"
                    )))
                } else {
                    Ok(())
                }
            }
            CalibrationPrior::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    Err(Error::domain(format!(
                        "uniform prior needs finite lo < hi, got ({lo}, {hi})"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Log prior density (up to the flat prior's arbitrary constant).
    pub fn log_density(&self, u: f64) -> f64 {
        match *self {
            CalibrationPrior::Flat => 0.0,
            CalibrationPrior::Gaussian { mean, sd } => {
                let z = (u - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            CalibrationPrior::Uniform { lo, hi } => {
                if (lo..=hi).contains(&u) {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

/// Search specification for the scaling parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct USearch {
    pub lo: f64,
    pub hi: f64,
    /// Points in the coarse scan.
    pub grid_points: usize,
    /// Bracket width at which golden-section refinement stops.
    pub refine_tol: f64,
}

impl Default for USearch {
    fn default() -> Self {
        USearch {
            lo: -2.0,
            hi: 12.0,
            grid_points: 81,
            refine_tol: 1e-4,
        }
    }
}

impl USearch {
    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::domain(format!(
                "u search needs finite lo < hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        if self.grid_points < 2 {
            return Err(Error::domain("u search grid needs at least 2 points"));
        }
        if !(self.refine_tol.is_finite() && self.refine_tol > 0.0) {
            return Err(Error::domain(
                "u search refinement tolerance must be positive",
            ));
        }
        Ok(())
    }
}

/// Discrepancy GP fitted at a fixed scaling value.
#[derive(Debug, Clone)]
pub struct DiscrepancyFit {
    u: f64,
    params: KernelParams,
    noise_variance: f64,
    residuals: DVector<f64>,
    high_inputs: DMatrix<f64>,
    log_likelihood: f64,
}

impl DiscrepancyFit {
    pub fn u(&self) -> f64 {
        self.u
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// Residuals Y_H - u * yhat_L(X_H) the fit was computed from.
    pub fn residuals(&self) -> &DVector<f64> {
        &self.residuals
    }

    pub fn high_inputs(&self) -> &DMatrix<f64> {
        &self.high_inputs
    }

    /// Maximized zero-mean Gaussian log likelihood of the residuals.
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }
}

/// One evaluated point of the profiled objective.
#[derive(Debug, Clone, Copy)]
pub struct ProfilePoint {
    pub u: f64,
    pub log_posterior: f64,
}

/// Result of [`estimate_u`].
#[derive(Debug, Clone)]
pub struct UEstimate {
    pub u_hat: f64,
    pub log_posterior: f64,
    /// Every (u, objective) pair evaluated, grid scan then refinement.
    pub profile: Vec<ProfilePoint>,
    /// Set when the grid argmax sits on the search boundary, meaning
    /// the interval probably truncates the optimum.
    pub boundary_warning: bool,
    /// Discrepancy fit at `u_hat`.
    pub discrepancy: DiscrepancyFit,
}

/// Full calibration output: point estimate plus leave-one-out spread.
#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub u_hat: f64,
    /// Scaling estimates from each successful leave-one-out fold.
    pub loo_samples: Vec<f64>,
    /// 95% empirical interval (2.5% and 97.5% quantiles) of the folds.
    pub interval: (f64, f64),
    pub discrepancy: DiscrepancyFit,
    /// Indices of folds whose re-estimation failed.
    pub failed_folds: Vec<usize>,
    pub boundary_warning: bool,
}

/// Fits the discrepancy GP to the residuals at a fixed `u` using the
/// default optimizer budget.
pub fn fit_discrepancy_given_u(
    u: f64,
    low_emulator: &GpFit,
    x_high: &DMatrix<f64>,
    y_high: &DVector<f64>,
    seed: &Seed,
) -> Result<DiscrepancyFit> {
    fit_discrepancy_with(
        u,
        low_emulator,
        x_high,
        y_high,
        seed,
        &FitOptions::default(),
    )
}

/// [`fit_discrepancy_given_u`] with an explicit optimizer budget.
pub fn fit_discrepancy_with(
    u: f64,
    low_emulator: &GpFit,
    x_high: &DMatrix<f64>,
    y_high: &DVector<f64>,
    seed: &Seed,
    options: &FitOptions,
) -> Result<DiscrepancyFit> {
    if !u.is_finite() {
        return Err(Error::domain(format!(
            "scaling parameter must be finite, got {u}"
        )));
    }
    let yhat = low_emulator.predict_mean(x_high)?;
    fit_discrepancy_core(u, &yhat, x_high, y_high, seed, options)
}

/// Shared inner fit taking precomputed emulator predictions, so the
/// grid scan and every LOO fold reuse one emulator solve.
pub(crate) fn fit_discrepancy_core(
    u: f64,
    yhat: &DVector<f64>,
    x_high: &DMatrix<f64>,
    y_high: &DVector<f64>,
    seed: &Seed,
    options: &FitOptions,
) -> Result<DiscrepancyFit> {
    let n_h = x_high.nrows();
    if n_h < 2 {
        return Err(Error::domain(format!(
            "discrepancy fit needs at least 2 high-fidelity points, got {n_h}"
        )));
    }
    if y_high.len() != n_h || yhat.len() != n_h {
        return Err(Error::domain(format!(
            "high-fidelity inputs ({n_h} rows) and outputs ({}) disagree",
            y_high.len()
        )));
    }
    let residuals = y_high - yhat * u;
    let fit = fit_gp_mle_with(
        x_high,
        &residuals,
        MeanFunction::Zero,
        NoiseSpec::Estimate,
        seed,
        options,
    )?;
    Ok(DiscrepancyFit {
        u,
        params: fit.params().clone(),
        noise_variance: fit.noise_variance(),
        residuals,
        high_inputs: x_high.clone(),
        log_likelihood: fit.log_marginal_likelihood(),
    })
}

/// Maximizes the profiled objective over `u` with the default
/// optimizer budget for the inner refits.
pub fn estimate_u(
    low_emulator: &GpFit,
    x_high: &DMatrix<f64>,
    y_high: &DVector<f64>,
    prior: &CalibrationPrior,
    search: &USearch,
    seed: &Seed,
) -> Result<UEstimate> {
    estimate_u_with(
        low_emulator,
        x_high,
        y_high,
        prior,
        search,
        seed,
        &FitOptions::default(),
    )
}

/// [`estimate_u`] with an explicit inner-fit budget.
pub fn estimate_u_with(
    low_emulator: &GpFit,
    x_high: &DMatrix<f64>,
    y_high: &DVector<f64>,
    prior: &CalibrationPrior,
    search: &USearch,
    seed: &Seed,
    options: &FitOptions,
) -> Result<UEstimate> {
    let yhat = low_emulator.predict_mean(x_high)?;
    estimate_u_core(&yhat, x_high, y_high, prior, search, seed, options, true)
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Grid scan plus golden-section refinement over precomputed emulator
/// predictions. `want_discrepancy` skips the final refit for callers
/// (LOO folds) that only need the estimate itself.
#[allow(clippy::too_many_arguments)]
fn estimate_u_core(
    yhat: &DVector<f64>,
    x_high: &DMatrix<f64>,
    y_high: &DVector<f64>,
    prior: &CalibrationPrior,
    search: &USearch,
    seed: &Seed,
    options: &FitOptions,
    want_discrepancy: bool,
) -> Result<UEstimate> {
    prior.validate()?;
    search.validate()?;
    let fit_seed = seed.child(streams::U_SEARCH);

    let mut profile = Vec::with_capacity(search.grid_points + 40);
    let mut best: Option<(f64, f64)> = None;
    let eval = |u: f64, profile: &mut Vec<ProfilePoint>, best: &mut Option<(f64, f64)>| {
        let value = match fit_discrepancy_core(u, yhat, x_high, y_high, &fit_seed, options) {
            Ok(fit) => fit.log_likelihood + prior.log_density(u),
            Err(Error::Domain(msg)) => return Err(Error::Domain(msg)),
            Err(_) => f64::NEG_INFINITY,
        };
        profile.push(ProfilePoint {
            u,
            log_posterior: value,
        });
        if value.is_finite() && best.as_ref().is_none_or(|(_, b)| value > *b) {
            *best = Some((u, value));
        }
        Ok(value)
    };

    let g = search.grid_points;
    let step = (search.hi - search.lo) / (g - 1) as f64;
    let mut grid_values = Vec::with_capacity(g);
    for i in 0..g {
        let u = search.lo + step * i as f64;
        grid_values.push(eval(u, &mut profile, &mut best)?);
    }
    let Some(k_star) = grid_values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
    else {
        return Err(Error::estimation(
            "profiled objective was non-finite at every grid point",
        ));
    };
    let boundary_warning = k_star == 0 || k_star == g - 1;

    // Golden-section refinement on the bracket around the grid argmax.
    let mut a = (search.lo + step * (k_star as f64 - 1.0)).max(search.lo);
    let mut b = (search.lo + step * (k_star as f64 + 1.0)).min(search.hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = eval(x1, &mut profile, &mut best)?;
    let mut f2 = eval(x2, &mut profile, &mut best)?;
    while b - a > search.refine_tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = eval(x1, &mut profile, &mut best)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = eval(x2, &mut profile, &mut best)?;
        }
    }

    let (u_hat, log_posterior) = best.expect("grid had a finite value");
    let discrepancy = if want_discrepancy {
        fit_discrepancy_core(u_hat, yhat, x_high, y_high, &fit_seed, options)?
    } else {
        // Cheap placeholder; LOO folds never read it. Kernel dim must
        // still match so the struct stays internally consistent.
        DiscrepancyFit {
            u: u_hat,
            params: KernelParams::new(1.0, vec![1.0; x_high.ncols()])?,
            noise_variance: 0.0,
            residuals: y_high - yhat * u_hat,
            high_inputs: x_high.clone(),
            log_likelihood: f64::NAN,
        }
    };
    Ok(UEstimate {
        u_hat,
        log_posterior,
        profile,
        boundary_warning,
        discrepancy,
    })
}

/// Re-estimate `u` for a single leave-one-out fold. Dropping one of
/// `n` points moves the profile optimum only O(1/n), so the fold
/// search golden-refines a bracket of two grid steps around the
/// full-data estimate instead of rescanning the whole grid. If the
/// local optimum pins to a bracket edge (an outlier fold that wants
/// to move far, or a bracket with no finite values) the fold falls
/// back to the unrestricted grid scan.
#[allow(clippy::too_many_arguments)]
fn fold_u_estimate(
    yhat: &DVector<f64>,
    x_high: &DMatrix<f64>,
    y_high: &DVector<f64>,
    prior: &CalibrationPrior,
    search: &USearch,
    seed: &Seed,
    options: &FitOptions,
    center: f64,
) -> Result<f64> {
    let fit_seed = seed.child(streams::U_SEARCH);
    let mut best: Option<(f64, f64)> = None;
    let eval = |u: f64, best: &mut Option<(f64, f64)>| -> Result<f64> {
        let value = match fit_discrepancy_core(u, yhat, x_high, y_high, &fit_seed, options) {
            Ok(fit) => fit.log_likelihood + prior.log_density(u),
            Err(Error::Domain(msg)) => return Err(Error::Domain(msg)),
            Err(_) => f64::NEG_INFINITY,
        };
        if value.is_finite() && best.as_ref().is_none_or(|(_, b)| value > *b) {
            *best = Some((u, value));
        }
        Ok(value)
    };

    let step = (search.hi - search.lo) / (search.grid_points - 1) as f64;
    let a0 = (center - 2.0 * step).max(search.lo);
    let b0 = (center + 2.0 * step).min(search.hi);
    let (mut a, mut b) = (a0, b0);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = eval(x1, &mut best)?;
    let mut f2 = eval(x2, &mut best)?;
    while b - a > search.refine_tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = eval(x1, &mut best)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = eval(x2, &mut best)?;
        }
    }
    let margin = 0.05 * (b0 - a0);
    if let Some((u, _)) = best {
        if u - a0 > margin && b0 - u > margin {
            return Ok(u);
        }
    }
    estimate_u_core(yhat, x_high, y_high, prior, search, seed, options, false).map(|est| est.u_hat)
}

/// Leave-one-out calibration: full-data estimate plus per-fold
/// re-estimates quantifying the spread of `u`.
pub fn loo_posterior(
    low_emulator: &GpFit,
    x_high: &DMatrix<f64>,
    y_high: &DVector<f64>,
    prior: &CalibrationPrior,
    search: &USearch,
    seed: &Seed,
) -> Result<CalibrationResult> {
    loo_posterior_with(
        low_emulator,
        x_high,
        y_high,
        prior,
        search,
        seed,
        &FitOptions::default(),
    )
}

/// [`loo_posterior`] with an explicit inner-fit budget.
#[allow(clippy::too_many_arguments)]
pub fn loo_posterior_with(
    low_emulator: &GpFit,
    x_high: &DMatrix<f64>,
    y_high: &DVector<f64>,
    prior: &CalibrationPrior,
    search: &USearch,
    seed: &Seed,
    options: &FitOptions,
) -> Result<CalibrationResult> {
    let n_h = x_high.nrows();
    if n_h < 3 {
        return Err(Error::domain(format!(
            "leave-one-out calibration needs at least 3 high-fidelity points, got {n_h}"
        )));
    }
    let yhat = low_emulator.predict_mean(x_high)?;
    let full = estimate_u_core(&yhat, x_high, y_high, prior, search, seed, options, true)?;

    let d = x_high.ncols();
    let mut loo_samples = Vec::with_capacity(n_h);
    let mut failed_folds = Vec::new();
    for j in 0..n_h {
        let keep: Vec<usize> = (0..n_h).filter(|&i| i != j).collect();
        let x_fold = DMatrix::from_fn(n_h - 1, d, |i, c| x_high[(keep[i], c)]);
        let y_fold = DVector::from_fn(n_h - 1, |i, _| y_high[keep[i]]);
        let yhat_fold = DVector::from_fn(n_h - 1, |i, _| yhat[keep[i]]);
        let fold_seed = seed.with(&[streams::LOO_FOLD, j as u64]);
        match fold_u_estimate(
            &yhat_fold, &x_fold, &y_fold, prior, search, &fold_seed, options, full.u_hat,
        ) {
            Ok(u) => loo_samples.push(u),
            Err(Error::Domain(msg)) => return Err(Error::Domain(msg)),
            Err(_) => failed_folds.push(j),
        }
    }
    let min_ok = 3.max(n_h / 2);
    if loo_samples.len() < min_ok {
        return Err(Error::estimation(format!(
            "only {} of {} leave-one-out folds succeeded (need {})",
            loo_samples.len(),
            n_h,
            min_ok
        )));
    }
    let interval = (
        stats::quantile(&loo_samples, 0.025)?,
        stats::quantile(&loo_samples, 0.975)?,
    );
    Ok(CalibrationResult {
        u_hat: full.u_hat,
        loo_samples,
        interval,
        discrepancy: full.discrepancy,
        failed_folds,
        boundary_warning: full.boundary_warning,
    })
}

/// Posterior draws of the scaling parameter by smoothed bootstrap of
/// the leave-one-out estimates, with Silverman's rule bandwidth.
pub fn sample_u_posterior(result: &CalibrationResult, n_u: usize, seed: &Seed) -> Result<Vec<f64>> {
    if result.loo_samples.len() < 3 {
        return Err(Error::domain(format!(
            "posterior resampling needs at least 3 leave-one-out samples, got {}",
            result.loo_samples.len()
        )));
    }
    if n_u == 0 {
        return Err(Error::domain("need at least one posterior draw"));
    }
    let bw = stats::silverman_bandwidth(&result.loo_samples)?;
    let mut rng = seed.child(streams::U_SAMPLES).rng();
    let n = result.loo_samples.len();
    Ok((0..n_u)
        .map(|_| {
            let idx = rng.gen_range(0..n);
            let z: f64 = rng.sample(StandardNormal);
            result.loo_samples[idx] + bw * z
        })
        .collect())
}
