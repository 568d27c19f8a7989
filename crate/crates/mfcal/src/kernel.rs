//! Separable squared-exponential covariance functions.
//!
//! Every process in the model (low-fidelity emulator, discrepancy)
//! uses the same kernel family,
//!
//! ```text
//!     k(x, x') = sigma^2 * exp( -1/2 * sum_i (x_i - x'_i)^2 / l_i^2 ),
//! ```
//!
//! with one length scale per input dimension. Length scales carry the
//! units of the inputs, so nothing here assumes normalized domains.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Hyperparameters of one squared-exponential process.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams {
    variance: f64,
    length_scales: Vec<f64>,
}

impl KernelParams {
    /// Builds parameters, rejecting non-positive or non-finite values.
    pub fn new(variance: f64, length_scales: Vec<f64>) -> Result<Self> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::domain(format!(
                "kernel variance must be positive and finite, got {variance}"
            )));
        }
        if length_scales.is_empty() {
            return Err(Error::domain("kernel needs at least one length scale"));
        }
        if let Some(bad) = length_scales.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::domain(format!(
                "kernel length scales must be positive and finite, got {bad}"
            )));
        }
        Ok(KernelParams {
            variance,
            length_scales,
        })
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn length_scales(&self) -> &[f64] {
        &self.length_scales
    }

    /// Input dimension this kernel applies to.
    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }

    /// Covariance between two points.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let d = self.dim();
        if x.len() != d || y.len() != d {
            return Err(Error::domain(format!(
                "kernel over {d} dimensions applied to points of length {} and {}",
                x.len(),
                y.len()
            )));
        }
        Ok(self.eval_unchecked(x, y))
    }

    #[inline]
    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut q = 0.0;
        for i in 0..self.length_scales.len() {
            let t = (x[i] - y[i]) / self.length_scales[i];
            q += t * t;
        }
        self.variance * (-0.5 * q).exp()
    }

    /// Cross-covariance matrix between the rows of `a` and of `b`.
    ///
    /// With `a` and `b` the same matrix the result is symmetric
    /// positive semidefinite (a property of the squared-exponential
    /// family, checked property-based in the tests).
    pub fn matrix(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let d = self.dim();
        if a.ncols() != d || b.ncols() != d {
            return Err(Error::domain(format!(
                "kernel over {d} dimensions applied to inputs with {} and {} columns",
                a.ncols(),
                b.ncols()
            )));
        }
        let (n, m) = (a.nrows(), b.nrows());
        let mut out = DMatrix::zeros(n, m);
        // Row-major scratch copies: nalgebra stores column-major, and
        // striding across columns per point is slow for tall inputs.
        let ar = rows_of(a);
        let br = rows_of(b);
        for i in 0..n {
            for j in 0..m {
                out[(i, j)] = self.eval_unchecked(&ar[i], &br[j]);
            }
        }
        Ok(out)
    }
}

pub(crate) fn rows_of(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| a.row(i).iter().copied().collect())
        .collect()
}
