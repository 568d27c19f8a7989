//! Single-fidelity Gaussian process regression.
//!
//! A [`GpFit`] bundles training data, a mean function, kernel
//! hyperparameters and the Cholesky factor of `K + sigma_eps^2 I`, so
//! prediction is a pair of triangular solves. Hyperparameters come
//! from maximum likelihood: the negative log marginal likelihood is
//! minimized over log-parameters with a multistart Nelder-Mead, which
//! sidesteps kernel gradients and handles the multimodality that
//! shows up on small discrepancy datasets.
//!
//! The likelihood loop is the hot path of the whole crate (the
//! scaling-parameter search refits a discrepancy GP dozens of times,
//! and leave-one-out repeats that per fold), so the objective works on
//! packed lower-triangular buffers with per-dimension squared
//! difference tables precomputed once per dataset. Only the final
//! parameters are re-expanded into a dense factorization.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::design::{lhd_sample, InputBox};
use crate::error::{Error, Result};
use crate::kernel::{rows_of, KernelParams};
use crate::linalg::{cholesky_with_jitter, PackedLower};
use crate::optim::NelderMead;
use crate::seed::{streams, Seed};

/// Prior mean of a GP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeanFunction {
    Zero,
    Constant(f64),
}

impl MeanFunction {
    /// Constant mean set to the sample mean of the outputs, the
    /// weakest structure that centers the data.
    pub fn sample_mean(outputs: &DVector<f64>) -> Self {
        MeanFunction::Constant(outputs.mean())
    }

    pub fn value(&self) -> f64 {
        match self {
            MeanFunction::Zero => 0.0,
            MeanFunction::Constant(c) => *c,
        }
    }
}

/// Observation noise treatment during fitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    /// Noise variance held at the given value.
    Fixed(f64),
    /// Noise variance estimated jointly with the kernel parameters.
    Estimate,
}

/// Near-interpolation nugget for deterministic simulator output.
pub const DETERMINISTIC_NUGGET: f64 = 1e-10;

/// Multistart optimizer budget for one MLE fit.
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Number of Latin-hypercube initializations in log-parameter space.
    pub n_starts: usize,
    /// Objective evaluation budget per start.
    pub max_evals: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            n_starts: 8,
            max_evals: 250,
        }
    }
}

/// One multistart trajectory, recorded for diagnostics.
#[derive(Debug, Clone)]
pub struct StartRecord {
    /// Initial log parameters ([log variance, log length scales..,
    /// log noise variance when estimated]).
    pub init_log_params: Vec<f64>,
    /// Negative log likelihood at the initial point.
    pub init_nll: f64,
    /// Best negative log likelihood reached from this start.
    pub final_nll: f64,
    pub evals: usize,
}

/// Diagnostics of one maximum-likelihood fit.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub starts: Vec<StartRecord>,
    pub total_evals: usize,
}

/// A fitted GP: immutable data plus the cached factorization.
#[derive(Debug, Clone)]
pub struct GpFit {
    inputs: DMatrix<f64>,
    outputs: DVector<f64>,
    mean: MeanFunction,
    params: KernelParams,
    noise_variance: f64,
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
    alpha: DVector<f64>,
    lml: f64,
    report: Option<FitReport>,
}

/// Posterior mean and covariance at a set of points.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GpFit {
    /// Builds a fit from given hyperparameters, factoring the training
    /// covariance once.
    pub fn new(
        inputs: DMatrix<f64>,
        outputs: DVector<f64>,
        mean: MeanFunction,
        params: KernelParams,
        noise_variance: f64,
    ) -> Result<Self> {
        let n = inputs.nrows();
        if n == 0 {
            return Err(Error::domain("GP needs at least one training point"));
        }
        if outputs.len() != n {
            return Err(Error::domain(format!(
                "{} training inputs but {} outputs",
                n,
                outputs.len()
            )));
        }
        if inputs.ncols() != params.dim() {
            return Err(Error::domain(format!(
                "inputs have {} columns but kernel covers {} dimensions",
                inputs.ncols(),
                params.dim()
            )));
        }
        if !(noise_variance.is_finite() && noise_variance >= 0.0) {
            return Err(Error::domain(format!(
                "noise variance must be finite and nonnegative, got {noise_variance}"
            )));
        }
        if !mean.value().is_finite() {
            return Err(Error::domain("mean function value must be finite"));
        }
        let mut k = params.matrix(&inputs, &inputs)?;
        for i in 0..n {
            k[(i, i)] += noise_variance;
        }
        let (chol, jitter) = cholesky_with_jitter(&k, "GP training covariance")?;
        let r = DVector::from_fn(n, |i, _| outputs[i] - mean.value());
        let alpha = chol.solve(&r);
        let logdet: f64 = (0..n).map(|i| 2.0 * chol.l_dirty()[(i, i)].ln()).sum();
        let lml = -0.5 * r.dot(&alpha)
            - 0.5 * logdet
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        Ok(GpFit {
            inputs,
            outputs,
            mean,
            params,
            noise_variance,
            chol,
            jitter,
            alpha,
            lml,
            report: None,
        })
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn outputs(&self) -> &DVector<f64> {
        &self.outputs
    }

    pub fn mean_function(&self) -> MeanFunction {
        self.mean
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// Diagonal jitter the factorization needed (usually zero).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Optimizer diagnostics; present only on fits from [`fit_gp_mle`].
    pub fn report(&self) -> Option<&FitReport> {
        self.report.as_ref()
    }

    /// Log marginal likelihood of the training data under this fit.
    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    #[cfg(test)]
    pub(crate) fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    /// Posterior predictive mean and covariance at `x_new`.
    ///
    /// The covariance is of the latent function (no observation noise
    /// added), symmetrized with its diagonal clamped at zero. When the
    /// whole matrix is below the resolution the factorization can
    /// support (interpolating fits evaluated near training data), it
    /// is returned as exactly zero so downstream sampling degenerates
    /// to the mean instead of failing.
    pub fn predict(&self, x_new: &DMatrix<f64>) -> Result<Prediction> {
        let k_star = self.params.matrix(&self.inputs, x_new)?;
        let mean = self.mean_plus(&k_star);
        let v = self.chol.solve(&k_star);
        let mut cov = self.params.matrix(x_new, x_new)? - k_star.transpose() * v;
        stabilize_covariance(&mut cov, self.inputs.nrows(), self.params.variance());
        Ok(Prediction { mean, cov })
    }

    /// Posterior mean only, skipping all covariance work.
    pub fn predict_mean(&self, x_new: &DMatrix<f64>) -> Result<DVector<f64>> {
        let k_star = self.params.matrix(&self.inputs, x_new)?;
        Ok(self.mean_plus(&k_star))
    }

    fn mean_plus(&self, k_star: &DMatrix<f64>) -> DVector<f64> {
        let mut mean = k_star.transpose() * &self.alpha;
        mean.add_scalar_mut(self.mean.value());
        mean
    }
}

/// Machine-precision floor below which a predictive covariance is
/// indistinguishable from rounding error of the factorization.
///
/// Near-interpolating fits (huge variance, long length scales on
/// smooth noise-free data) produce predictive covariances that are
/// pure cancellation noise, slightly indefinite with entries around
/// `n * eps * sigma^2`. The jitter ladder cannot rescue those (its
/// scale is the covariance's own trace, which is itself noise), so
/// anything this small collapses to exact zero. A covariance that
/// survives with genuine signal still carries eigenvalue noise at the
/// same cancellation scale, so the floor is also added to the
/// diagonal; on well-scaled problems this is around 1e-13 relative.
pub(crate) fn stabilize_covariance(cov: &mut DMatrix<f64>, n_train: usize, prior_var: f64) {
    let m = cov.nrows();
    for i in 0..m {
        for j in 0..i {
            let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = s;
            cov[(j, i)] = s;
        }
        if cov[(i, i)] < 0.0 {
            cov[(i, i)] = 0.0;
        }
    }
    let floor = 64.0 * n_train as f64 * f64::EPSILON * prior_var;
    if cov.iter().all(|v| v.abs() <= floor) {
        cov.fill(0.0);
    } else {
        for i in 0..m {
            cov[(i, i)] += floor;
        }
    }
}

/// Negative log marginal likelihood machinery over packed buffers.
struct NllWorkspace {
    n: usize,
    tables: Vec<Vec<f64>>,
    r: Vec<f64>,
    packed: PackedLower,
    v: Vec<f64>,
    noise: NoiseSpec,
}

impl NllWorkspace {
    fn new(
        inputs: &DMatrix<f64>,
        outputs: &DVector<f64>,
        mean: MeanFunction,
        noise: NoiseSpec,
    ) -> Self {
        let n = inputs.nrows();
        let d = inputs.ncols();
        let rows = rows_of(inputs);
        let mut tables = vec![vec![0.0; n * (n + 1) / 2]; d];
        for i in 0..n {
            let base = i * (i + 1) / 2;
            for j in 0..=i {
                for (k, table) in tables.iter_mut().enumerate() {
                    let diff = rows[i][k] - rows[j][k];
                    table[base + j] = diff * diff;
                }
            }
        }
        let r = (0..n).map(|i| outputs[i] - mean.value()).collect();
        NllWorkspace {
            n,
            tables,
            r,
            packed: PackedLower::zeros(n),
            v: vec![0.0; n],
            noise,
        }
    }

    /// theta = [log variance, log length scales.., log noise when estimated].
    fn nll(&mut self, theta: &[f64]) -> f64 {
        let d = self.tables.len();
        let log_var = theta[0];
        let mut w = [0.0f64; 8];
        debug_assert!(d <= w.len(), "more input dimensions than scratch slots");
        for k in 0..d {
            w[k] = 0.5 * (-2.0 * theta[1 + k]).exp();
        }
        let noise = match self.noise {
            NoiseSpec::Fixed(v) => v,
            NoiseSpec::Estimate => theta[1 + d].exp(),
        };
        if !noise.is_finite() {
            return f64::INFINITY;
        }
        let p = &mut self.packed.data;
        for (idx, slot) in p.iter_mut().enumerate() {
            let mut t = log_var;
            for (wk, table) in w.iter().zip(&self.tables) {
                t -= wk * table[idx];
            }
            *slot = t.exp();
        }
        for i in 0..self.n {
            p[i * (i + 1) / 2 + i] += noise;
        }
        let Some(logdet) = self.packed.cholesky_in_place() else {
            return f64::INFINITY;
        };
        self.v.copy_from_slice(&self.r);
        self.packed.forward_solve(&mut self.v);
        let quad: f64 = self.v.iter().map(|x| x * x).sum();
        0.5 * (quad + logdet + self.n as f64 * (2.0 * std::f64::consts::PI).ln())
    }
}

/// Fits kernel hyperparameters (and optionally the noise variance) by
/// maximum likelihood with the default multistart budget.
pub fn fit_gp_mle(
    inputs: &DMatrix<f64>,
    outputs: &DVector<f64>,
    mean: MeanFunction,
    noise: NoiseSpec,
    seed: &Seed,
) -> Result<GpFit> {
    fit_gp_mle_with(inputs, outputs, mean, noise, seed, &FitOptions::default())
}

/// [`fit_gp_mle`] with an explicit optimizer budget.
///
/// Optimization runs over log parameters, unconstrained. Starts are a
/// Latin hypercube over a data-adaptive box: log length scales span
/// [log(0.05 range_i), log(5 range_i)], log variance spans
/// [log(1e-3 var y), log(1e2 var y)], and when the noise is estimated
/// its log variance spans [log(1e-6 var y), log(var y)].
pub fn fit_gp_mle_with(
    inputs: &DMatrix<f64>,
    outputs: &DVector<f64>,
    mean: MeanFunction,
    noise: NoiseSpec,
    seed: &Seed,
    options: &FitOptions,
) -> Result<GpFit> {
    let n = inputs.nrows();
    let d = inputs.ncols();
    if n < 2 {
        return Err(Error::domain(
            "maximum likelihood fitting needs n >= 2 points",
        ));
    }
    if outputs.len() != n {
        return Err(Error::domain(format!(
            "{} training inputs but {} outputs",
            n,
            outputs.len()
        )));
    }
    if d == 0 || d > 8 {
        return Err(Error::domain(format!(
            "supported input dimension is 1..=8, got {d}"
        )));
    }
    if options.n_starts == 0 {
        return Err(Error::domain("fit needs at least one start"));
    }
    if matches!(noise, NoiseSpec::Fixed(v) if v == 0.0) {
        let rows = rows_of(inputs);
        for i in 0..n {
            for j in 0..i {
                if rows[i] == rows[j] {
                    return Err(Error::domain(format!(
                        "duplicate inputs at rows {j} and {i} with zero fixed noise"
                    )));
                }
            }
        }
    }
    if let NoiseSpec::Fixed(v) = noise {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::domain(format!(
                "fixed noise variance must be finite and nonnegative, got {v}"
            )));
        }
    }

    // Data-adaptive multistart box, floored so degenerate data
    // (constant outputs, collapsed input dimensions) still yields a
    // searchable region.
    let var_y = {
        let m = outputs.mean();
        let v = outputs.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / n as f64;
        v.max(1e-12)
    };
    let mut lo = Vec::with_capacity(d + 2);
    let mut hi = Vec::with_capacity(d + 2);
    lo.push((1e-3 * var_y).ln());
    hi.push((1e2 * var_y).ln());
    for k in 0..d {
        let col = inputs.column(k);
        let range = (col.max() - col.min()).max(1e-9);
        lo.push((0.05 * range).ln());
        hi.push((5.0 * range).ln());
    }
    if matches!(noise, NoiseSpec::Estimate) {
        lo.push((1e-6 * var_y).ln());
        hi.push(var_y.ln());
    }
    let log_box = InputBox::new(lo, hi)?;
    let starts = lhd_sample(options.n_starts, &log_box, &seed.child(streams::FIT_STARTS))?;

    let mut workspace = NllWorkspace::new(inputs, outputs, mean, noise);
    let nm = NelderMead {
        max_evals: options.max_evals,
        ..NelderMead::default()
    };

    let mut records = Vec::with_capacity(options.n_starts);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in 0..options.n_starts {
        let x0: Vec<f64> = starts.row(s).iter().copied().collect();
        let mut f = |theta: &[f64]| workspace.nll(theta);
        let out = nm.minimize(&mut f, &x0, 0.5);
        records.push(StartRecord {
            init_log_params: x0,
            init_nll: out.initial_value,
            final_nll: out.value,
            evals: out.evals,
        });
        if out.value.is_finite() && best.as_ref().is_none_or(|(_, v)| out.value < *v) {
            best = Some((out.x, out.value));
        }
    }
    let Some((theta, _)) = best else {
        return Err(Error::fit(
            "no optimization start produced a finite likelihood",
        ));
    };

    // Degenerate data (all-zero residuals) make the likelihood
    // unbounded in log parameters; the optimizer then rides them into
    // exp() under- or overflow. Clamp to the normal float range, where
    // the likelihood is indistinguishable from the limit anyway.
    let finite = |t: f64| t.exp().clamp(f64::MIN_POSITIVE, f64::MAX);
    let variance = finite(theta[0]);
    let length_scales: Vec<f64> = theta[1..1 + d].iter().copied().map(finite).collect();
    let params = KernelParams::new(variance, length_scales)
        .map_err(|e| Error::fit(format!("optimizer left the feasible region: {e}")))?;
    let noise_variance = match noise {
        NoiseSpec::Fixed(v) => v,
        NoiseSpec::Estimate => theta[1 + d].exp().min(f64::MAX),
    };
    let total_evals = records.iter().map(|r| r.evals).sum();
    let mut fit = GpFit::new(
        inputs.clone(),
        outputs.clone(),
        mean,
        params,
        noise_variance,
    )?;
    fit.report = Some(FitReport {
        starts: records,
        total_evals,
    });
    Ok(fit)
}
