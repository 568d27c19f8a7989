//! Input domains, Latin hypercube designs and Gaussian sampling.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::cholesky_with_jitter;
use crate::seed::Seed;

/// Axis-aligned feasible domain, the rectangle the decision variables
/// live in.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl InputBox {
    /// Builds a box, rejecting empty, non-finite or inverted bounds.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::domain(format!(
                "box bounds must be non-empty and equal length, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::domain(format!(
                    "box dimension {i} needs finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(InputBox { lower, upper })
    }

    /// Unit cube [0, 1]^d.
    pub fn unit(d: usize) -> Result<Self> {
        InputBox::new(vec![0.0; d], vec![1.0; d])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn range(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&lo, &hi))| v >= lo && v <= hi)
    }
}

/// Latin hypercube sample of `n` points in `bounds`.
///
/// Plain stratified construction: per dimension, a random permutation
/// assigns each point to one of `n` equal-width strata and the point
/// lands uniformly inside its stratum. No maximin polishing; designs
/// are drawn fresh inside hot loops, so cheapness wins over geometry.
pub fn lhd_sample(n: usize, bounds: &InputBox, seed: &Seed) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::domain("Latin hypercube needs n >= 1 points"));
    }
    let d = bounds.dim();
    let mut rng = seed.rng();
    let mut out = DMatrix::zeros(n, d);
    let mut strata: Vec<usize> = (0..n).collect();
    for j in 0..d {
        let (lo, width) = (bounds.lower[j], bounds.range(j) / n as f64);
        strata.shuffle(&mut rng);
        for i in 0..n {
            let jitter: f64 = rng.gen();
            out[(i, j)] = lo + (strata[i] as f64 + jitter) * width;
        }
    }
    Ok(out)
}

/// One draw from N(mean, cov).
///
/// An all-zero covariance short-circuits to the mean, which is how
/// degenerate posteriors (interpolating fits evaluated at training
/// points) stay usable. Otherwise the covariance is factored with the
/// jitter ladder and the draw is `mean + L z`.
pub fn mvn_sample(mean: &DVector<f64>, cov: &DMatrix<f64>, seed: &Seed) -> Result<DVector<f64>> {
    let m = mean.len();
    if cov.nrows() != m || cov.ncols() != m {
        return Err(Error::domain(format!(
            "covariance is {}x{} but mean has length {m}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    if m == 0 {
        return Err(Error::domain("cannot sample a zero-length normal"));
    }
    if cov.iter().all(|&v| v == 0.0) {
        return Ok(mean.clone());
    }
    let (chol, _) = cholesky_with_jitter(cov, "multivariate normal sampling")?;
    let mut rng = seed.rng();
    let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(mean + chol.l() * z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn box_validation() {
        assert!(InputBox::new(vec![0.0], vec![1.0]).is_ok());
        assert!(InputBox::new(vec![], vec![]).is_err());
        assert!(InputBox::new(vec![0.0], vec![1.0, 2.0]).is_err());
        assert!(InputBox::new(vec![1.0], vec![1.0]).is_err());
        assert!(InputBox::new(vec![0.0], vec![f64::INFINITY]).is_err());
        assert!(InputBox::new(vec![f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn lhd_single_point_spans_box() {
        let b = InputBox::unit(2).unwrap();
        let x = lhd_sample(1, &b, &Seed::new(3)).unwrap();
        assert_eq!(x.nrows(), 1);
        assert!(x[(0, 0)] > 0.0 && x[(0, 0)] < 1.0);
        assert!(x[(0, 1)] > 0.0 && x[(0, 1)] < 1.0);
    }

    #[test]
    fn lhd_strata_occupancy_is_one() {
        let b = InputBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let n = 200;
        let x = lhd_sample(n, &b, &Seed::new(11)).unwrap();
        for j in 0..2 {
            let mut counts = vec![0usize; n];
            for i in 0..n {
                let t = (x[(i, j)] - b.lower()[j]) / b.range(j);
                let k = ((t * n as f64).floor() as usize).min(n - 1);
                counts[k] += 1;
            }
            assert!(counts.iter().all(|&c| c == 1), "dimension {j}: {counts:?}");
        }
    }

    #[test]
    fn lhd_integer_box_floors_to_permutation() {
        let b = InputBox::new(vec![0.0, 0.0], vec![4.0, 4.0]).unwrap();
        let x = lhd_sample(4, &b, &Seed::new(99)).unwrap();
        for j in 0..2 {
            let mut floors: Vec<i64> = (0..4).map(|i| x[(i, j)].floor() as i64).collect();
            floors.sort_unstable();
            assert_eq!(floors, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn lhd_reproducible() {
        let b = InputBox::unit(3).unwrap();
        let s = Seed::new(5).child(1);
        assert_eq!(
            lhd_sample(20, &b, &s).unwrap(),
            lhd_sample(20, &b, &s).unwrap()
        );
        assert_ne!(
            lhd_sample(20, &b, &s).unwrap(),
            lhd_sample(20, &b, &s.child(2)).unwrap()
        );
    }

    #[test]
    fn mvn_zero_cov_is_exact() {
        let mean = DVector::from_vec(vec![3.0, -1.0]);
        let cov = DMatrix::zeros(2, 2);
        let y = mvn_sample(&mean, &cov, &Seed::new(1)).unwrap();
        assert_eq!(y, mean);
    }

    #[test]
    fn mvn_moments() {
        let mean = DVector::zeros(2);
        let cov = DMatrix::identity(2, 2);
        let seed = Seed::new(2024);
        let n = 10_000;
        let mut sum = DVector::zeros(2);
        let mut sum_sq = DMatrix::zeros(2, 2);
        for k in 0..n {
            let y = mvn_sample(&mean, &cov, &seed.child(k)).unwrap();
            sum += &y;
            sum_sq += &y * y.transpose();
        }
        let emp_mean = sum / n as f64;
        let emp_cov = sum_sq / n as f64;
        for i in 0..2 {
            assert!(emp_mean[i].abs() < 0.05);
            for j in 0..2 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((emp_cov[(i, j)] - target).abs() < 0.05);
            }
        }
    }

    #[test]
    fn mvn_correlated_draws() {
        let mean = DVector::zeros(2);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]);
        let seed = Seed::new(7);
        let n = 10_000;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for k in 0..n {
            let y = mvn_sample(&mean, &cov, &seed.child(k)).unwrap();
            sxy += y[0] * y[1];
            sxx += y[0] * y[0];
            syy += y[1] * y[1];
        }
        let corr = sxy / (sxx * syy).sqrt();
        assert!((0.87..0.93).contains(&corr), "correlation {corr}");
    }

    #[test]
    fn mvn_diagonal_is_affine_in_z() {
        // For sigma^2 I the draw must be mean + sigma * z with z the
        // raw standard normals of the seed's stream.
        let seed = Seed::new(42).child(9);
        let mean = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let sigma = 0.5;
        let cov = DMatrix::identity(3, 3) * sigma * sigma;
        let y = mvn_sample(&mean, &cov, &seed).unwrap();
        let mut rng = seed.rng();
        for i in 0..3 {
            let z: f64 = rng.sample(StandardNormal);
            assert_relative_eq!(y[i], mean[i] + sigma * z, max_relative = 1e-12);
        }
    }

    #[test]
    fn mvn_shape_mismatch_is_domain_error() {
        let mean = DVector::zeros(3);
        let cov = DMatrix::identity(2, 2);
        assert!(matches!(
            mvn_sample(&mean, &cov, &Seed::new(0)),
            Err(Error::Domain(_))
        ));
    }
}
