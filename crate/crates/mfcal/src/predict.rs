//! Joint two-fidelity model and closed-form posterior prediction.
//!
//! Conditioned on the scaling parameter `u`, the stacked observations
//! `Y = (Y_L, Y_H)` are jointly Gaussian with mean
//! `(mu_L(X_L), u * mu_L(X_H))` and block covariance
//!
//! ```text
//!     | S_LL        u S_LH                        |
//!     | u S_LH^T    u^2 S_HH + S_bb + sige^2 I    |
//! ```
//!
//! where every `S_L*` block uses the low-fidelity kernel (including
//! `S_HH`, which is the low process evaluated at the high design) and
//! `S_bb` uses the discrepancy kernel. The latent high-fidelity
//! response at new points extends the same block rules with
//! `cov(y_H(x), y_L(x')) = u S_L(x, x')`, so the posterior predictive
//! is one Gaussian conditioning:
//!
//! ```text
//!     mu_new  = u mu_L(x) + k(x)^T S^-1 (Y - mu)
//!     S_new   = V - k^T S^-1 k'
//!     k(x)    = ( u S_L(X_L, x) ; u^2 S_L(X_H, x) + S_b(X_H, x) )
//!     V(x,x') = u^2 S_L(x, x') + S_b(x, x')
//! ```
//!
//! The factorization of the joint covariance is computed once per
//! model and reused across candidate sets, which is what the decision
//! loop leans on.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::calibrate::DiscrepancyFit;
use crate::error::{Error, Result};
use crate::gp::{stabilize_covariance, GpFit};
use crate::kernel::KernelParams;
use crate::linalg::cholesky_with_jitter;

/// Joint model of both fidelities at a fixed scaling value.
#[derive(Debug, Clone)]
pub struct MultiFidelityModel {
    low_emulator: GpFit,
    u: f64,
    discrepancy_params: KernelParams,
    noise_variance: f64,
    x_high: DMatrix<f64>,
    y_high: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
    alpha: DVector<f64>,
}

/// Posterior predictive of the high-fidelity process at a candidate set.
#[derive(Debug, Clone)]
pub struct PosteriorPredictive {
    pub x_cand: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl MultiFidelityModel {
    /// Builds the joint model from a calibrated discrepancy fit,
    /// checking that the fit's residuals are consistent with `y_high`.
    pub fn new(
        low_emulator: GpFit,
        discrepancy: &DiscrepancyFit,
        y_high: DVector<f64>,
    ) -> Result<Self> {
        let yhat = low_emulator.predict_mean(discrepancy.high_inputs())?;
        let scale = 1.0 + y_high.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for i in 0..y_high.len() {
            let r = y_high[i] - discrepancy.u() * yhat[i];
            if (r - discrepancy.residuals()[i]).abs() > 1e-9 * scale {
                return Err(Error::domain(format!(
                    "discrepancy residual {i} does not match y_high - u*yhat \
                     ({} vs {})",
                    discrepancy.residuals()[i],
                    r
                )));
            }
        }
        Self::from_parts(
            low_emulator,
            discrepancy.u(),
            discrepancy.params().clone(),
            discrepancy.noise_variance(),
            discrepancy.high_inputs().clone(),
            y_high,
        )
    }

    /// Builds the joint model from raw parts. `x_high` may have zero
    /// rows, in which case the model degenerates to the scaled
    /// low-fidelity emulator plus the discrepancy prior.
    pub fn from_parts(
        low_emulator: GpFit,
        u: f64,
        discrepancy_params: KernelParams,
        noise_variance: f64,
        x_high: DMatrix<f64>,
        y_high: DVector<f64>,
    ) -> Result<Self> {
        if !u.is_finite() {
            return Err(Error::domain(format!(
                "scaling parameter must be finite, got {u}"
            )));
        }
        if !(noise_variance.is_finite() && noise_variance >= 0.0) {
            return Err(Error::domain(format!(
                "noise variance must be finite and nonnegative, got {noise_variance}"
            )));
        }
        let d = low_emulator.inputs().ncols();
        if x_high.nrows() > 0 && x_high.ncols() != d {
            return Err(Error::domain(format!(
                "low inputs have {d} columns but high inputs have {}",
                x_high.ncols()
            )));
        }
        if discrepancy_params.dim() != d {
            return Err(Error::domain(format!(
                "discrepancy kernel covers {} dimensions but inputs have {d}",
                discrepancy_params.dim()
            )));
        }
        if y_high.len() != x_high.nrows() {
            return Err(Error::domain(format!(
                "{} high-fidelity inputs but {} outputs",
                x_high.nrows(),
                y_high.len()
            )));
        }
        let (mu, sigma) = joint_moments(
            &low_emulator,
            u,
            &discrepancy_params,
            noise_variance,
            &x_high,
        )?;
        let (chol, jitter) = cholesky_with_jitter(&sigma, "joint two-fidelity covariance")?;
        let n_l = low_emulator.inputs().nrows();
        let stacked = DVector::from_fn(n_l + x_high.nrows(), |i, _| {
            if i < n_l {
                low_emulator.outputs()[i]
            } else {
                y_high[i - n_l]
            }
        });
        let alpha = chol.solve(&(stacked - mu));
        Ok(MultiFidelityModel {
            low_emulator,
            u,
            discrepancy_params,
            noise_variance,
            x_high,
            y_high,
            chol,
            jitter,
            alpha,
        })
    }

    pub fn low_emulator(&self) -> &GpFit {
        &self.low_emulator
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    pub fn discrepancy_params(&self) -> &KernelParams {
        &self.discrepancy_params
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn x_high(&self) -> &DMatrix<f64> {
        &self.x_high
    }

    pub fn y_high(&self) -> &DVector<f64> {
        &self.y_high
    }

    /// Diagonal jitter the joint factorization needed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Posterior predictive of the latent high-fidelity response.
    pub fn predict_high(&self, x_cand: &DMatrix<f64>) -> Result<PosteriorPredictive> {
        if x_cand.nrows() == 0 {
            return Err(Error::domain(
                "prediction needs at least one candidate point",
            ));
        }
        let low_params = self.low_emulator.params();
        let k_top = low_params.matrix(self.low_emulator.inputs(), x_cand)? * self.u;
        let n_l = k_top.nrows();
        let n_h = self.x_high.nrows();
        let n = x_cand.nrows();
        let mut k = DMatrix::zeros(n_l + n_h, n);
        k.view_mut((0, 0), (n_l, n)).copy_from(&k_top);
        if n_h > 0 {
            let k_bot = low_params.matrix(&self.x_high, x_cand)? * (self.u * self.u)
                + self.discrepancy_params.matrix(&self.x_high, x_cand)?;
            k.view_mut((n_l, 0), (n_h, n)).copy_from(&k_bot);
        }
        let mut mean = k.transpose() * &self.alpha;
        mean.add_scalar_mut(self.u * self.low_emulator.mean_function().value());

        let v = low_params.matrix(x_cand, x_cand)? * (self.u * self.u)
            + self.discrepancy_params.matrix(x_cand, x_cand)?;
        let s_inv_k = self.chol.solve(&k);
        let mut cov = v - k.transpose() * s_inv_k;
        let prior_var =
            self.u * self.u * low_params.variance() + self.discrepancy_params.variance();
        stabilize_covariance(&mut cov, n_l + n_h, prior_var);
        Ok(PosteriorPredictive {
            x_cand: x_cand.clone(),
            mean,
            cov,
        })
    }
}

/// Joint mean and covariance of the stacked observations, assembled
/// entrywise from the pure block formulas (no emulator nugget; the
/// only diagonal addition is the observation noise on the high block).
pub fn assemble_joint(model: &MultiFidelityModel) -> Result<(DVector<f64>, DMatrix<f64>)> {
    joint_moments(
        &model.low_emulator,
        model.u,
        &model.discrepancy_params,
        model.noise_variance,
        &model.x_high,
    )
}

fn joint_moments(
    low_emulator: &GpFit,
    u: f64,
    discrepancy_params: &KernelParams,
    noise_variance: f64,
    x_high: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let x_low = low_emulator.inputs();
    let low_params = low_emulator.params();
    let (n_l, n_h) = (x_low.nrows(), x_high.nrows());
    let n = n_l + n_h;
    let c = low_emulator.mean_function().value();
    let mu = DVector::from_fn(n, |i, _| if i < n_l { c } else { u * c });

    let mut sigma = DMatrix::zeros(n, n);
    sigma
        .view_mut((0, 0), (n_l, n_l))
        .copy_from(&low_params.matrix(x_low, x_low)?);
    if n_h > 0 {
        let s_lh = low_params.matrix(x_low, x_high)? * u;
        sigma.view_mut((0, n_l), (n_l, n_h)).copy_from(&s_lh);
        sigma
            .view_mut((n_l, 0), (n_h, n_l))
            .copy_from(&s_lh.transpose());
        let mut s_hh = low_params.matrix(x_high, x_high)? * (u * u)
            + discrepancy_params.matrix(x_high, x_high)?;
        for i in 0..n_h {
            s_hh[(i, i)] += noise_variance;
        }
        sigma.view_mut((n_l, n_l), (n_h, n_h)).copy_from(&s_hh);
    }
    Ok((mu, sigma))
}

/// Per-output independent prediction across several models.
pub fn predict_high_multi(
    models: &[&MultiFidelityModel],
    x_cand: &DMatrix<f64>,
) -> Result<Vec<PosteriorPredictive>> {
    if models.is_empty() {
        return Err(Error::domain("need at least one model"));
    }
    let d = models[0].low_emulator.inputs().ncols();
    if models.iter().any(|m| m.low_emulator.inputs().ncols() != d) {
        return Err(Error::domain(
            "models disagree on the input dimension".to_string(),
        ));
    }
    models.iter().map(|m| m.predict_high(x_cand)).collect()
}
