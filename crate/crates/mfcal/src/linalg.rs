//! Factorization helpers shared by the samplers and the GP code.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

/// Multiplicative escalation steps after the no-jitter attempt.
const MAX_RETRIES: usize = 6;

/// Base jitter relative to the mean diagonal scale.
const BASE_JITTER_FRAC: f64 = 1e-10;

/// Cholesky factorization with a diagonal jitter ladder.
///
/// Tries the matrix as given, then adds `1e-10 * trace(a)/m` to the
/// diagonal and escalates tenfold per retry. Returns the factor and
/// the jitter that succeeded. The caller sees every attempted level in
/// the error if all fail, which makes "your covariance is broken"
/// reports actionable.
pub(crate) fn cholesky_with_jitter(
    a: &DMatrix<f64>,
    context: &str,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let m = a.nrows();
    debug_assert_eq!(m, a.ncols());
    let base = BASE_JITTER_FRAC * a.trace() / m as f64;
    let mut tried = Vec::with_capacity(MAX_RETRIES + 1);
    let mut jitter = 0.0;
    for attempt in 0..=MAX_RETRIES {
        tried.push(jitter);
        let candidate = if jitter == 0.0 {
            a.clone()
        } else {
            let mut c = a.clone();
            for i in 0..m {
                c[(i, i)] += jitter;
            }
            c
        };
        if let Some(chol) = Cholesky::new(candidate) {
            return Ok((chol, jitter));
        }
        // A non-positive trace means no diagonal scale to work with;
        // further retries would all add zero.
        if base <= 0.0 || !base.is_finite() {
            break;
        }
        jitter = base * 10f64.powi(attempt as i32);
    }
    Err(Error::numerical(
        format!("Cholesky factorization failed: {context}"),
        tried,
    ))
}

/// Lower-triangular matrix in packed row-major storage.
///
/// Element (i, j), j <= i, lives at `i*(i+1)/2 + j`. The packed layout
/// keeps the kernel-matrix build and the factorization inside one
/// contiguous buffer, which is what makes the likelihood evaluations
/// in the fitting loop cheap.
pub(crate) struct PackedLower {
    pub n: usize,
    pub data: Vec<f64>,
}

impl PackedLower {
    pub fn zeros(n: usize) -> Self {
        PackedLower {
            n,
            data: vec![0.0; n * (n + 1) / 2],
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let start = i * (i + 1) / 2;
        &self.data[start..start + i + 1]
    }

    /// In-place Cholesky. On success the buffer holds L; returns the
    /// log-determinant of the original matrix. Fails on a non-positive
    /// pivot without touching any jitter, the fitting loop treats that
    /// as an infeasible parameter point rather than an error.
    pub fn cholesky_in_place(&mut self) -> Option<f64> {
        let n = self.n;
        let d = &mut self.data;
        let mut logdet = 0.0;
        for i in 0..n {
            let ri = i * (i + 1) / 2;
            for j in 0..=i {
                let rj = j * (j + 1) / 2;
                let mut sum = d[ri + j];
                for k in 0..j {
                    sum -= d[ri + k] * d[rj + k];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return None;
                    }
                    let l = sum.sqrt();
                    d[ri + j] = l;
                    logdet += 2.0 * l.ln();
                } else {
                    d[ri + j] = sum / d[rj + j];
                }
            }
        }
        Some(logdet)
    }

    /// Solves L v = b in place, assuming `cholesky_in_place` succeeded.
    pub fn forward_solve(&self, b: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        for i in 0..n {
            let row = self.row(i);
            let mut sum = b[i];
            for k in 0..i {
                sum -= row[k] * b[k];
            }
            b[i] = sum / row[i];
        }
    }
}
