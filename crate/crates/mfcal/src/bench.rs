//! Synthetic two-fidelity scenarios with known truths.
//!
//! Two families are provided. The quadratic family places the two
//! fidelities' minima at different points, so combining the dense
//! cheap data with sparse noisy observations is the only way to find
//! the true optimum precisely:
//!
//! ```text
//!     y_L(x) = sum_j (x_j - aL_j)^2        (dense, noise-free)
//!     y_H(x) = sum_j (x_j - aH_j)^2
//!     Y_H    = y_H(x) + eps,  eps ~ N(0, sigma_eps^2)
//! ```
//!
//! The polynomial family mimics a process-simulation surrogate: both
//! fidelities are full second-order polynomials, typically related by
//! a strong multiplicative scaling plus a small additive discrepancy.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::decision::{ScenarioData, ScenarioGenerator};
use crate::design::{lhd_sample, InputBox};
use crate::error::{Error, Result};
use crate::seed::{streams, Seed};

/// Paired quadratic bowls with offset minima.
#[derive(Debug, Clone)]
pub struct QuadraticScenario {
    pub a_low: Vec<f64>,
    pub a_high: Vec<f64>,
    pub n_low: usize,
    pub n_high: usize,
    pub sigma_eps: f64,
    pub bounds: InputBox,
    pub seed: Seed,
}

impl QuadraticScenario {
    /// The standard demonstration setup: offset minima in two
    /// dimensions, 200 cheap points, 50 noisy observations.
    pub fn illustrative(seed: Seed) -> Self {
        QuadraticScenario {
            a_low: vec![-0.6, 0.2],
            a_high: vec![-0.8, 0.4],
            n_low: 200,
            n_high: 50,
            sigma_eps: 0.02,
            bounds: InputBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.bounds.dim();
        if self.a_low.len() != d || self.a_high.len() != d {
            return Err(Error::domain(format!(
                "minima must have the box dimension {d}, got {} and {}",
                self.a_low.len(),
                self.a_high.len()
            )));
        }
        if !self.bounds.contains(&self.a_low) || !self.bounds.contains(&self.a_high) {
            return Err(Error::domain("both minima must lie inside the box"));
        }
        if self.n_low == 0 || self.n_high == 0 {
            return Err(Error::domain("sample counts must be positive"));
        }
        if !(self.sigma_eps.is_finite() && self.sigma_eps >= 0.0) {
            return Err(Error::domain(format!(
                "noise standard deviation must be finite and nonnegative, got {}",
                self.sigma_eps
            )));
        }
        Ok(())
    }

    /// Cheap-fidelity truth.
    pub fn y_low(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.a_low)
            .map(|(xi, ai)| (xi - ai) * (xi - ai))
            .sum()
    }

    /// High-fidelity truth.
    pub fn y_high(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.a_high)
            .map(|(xi, ai)| (xi - ai) * (xi - ai))
            .sum()
    }

    /// Draws one dataset: independent designs for the two fidelities,
    /// noise-free cheap responses, Gaussian noise on the observations.
    /// Bitwise reproducible for a given seed.
    pub fn realize(&self) -> Result<ScenarioData> {
        self.validate()?;
        let x_low = lhd_sample(
            self.n_low,
            &self.bounds,
            &self.seed.with(&[streams::DATASET, 1]),
        )?;
        let x_high = lhd_sample(
            self.n_high,
            &self.bounds,
            &self.seed.with(&[streams::DATASET, 2]),
        )?;
        let y_low = truth_vector(&x_low, |x| self.y_low(x));
        let mut y_high = truth_vector(&x_high, |x| self.y_high(x));
        add_noise(
            &mut y_high,
            self.sigma_eps,
            &self.seed.with(&[streams::DATASET, 3]),
        );
        Ok(ScenarioData {
            x_low,
            y_low,
            x_high,
            y_high,
        })
    }
}

impl ScenarioGenerator for QuadraticScenario {
    fn generate(&self, index: usize) -> Result<ScenarioData> {
        let mut sc = self.clone();
        sc.seed = self.seed.child(index as u64);
        sc.realize()
    }

    fn true_optimum(&self) -> &[f64] {
        &self.a_high
    }

    fn input_box(&self) -> &InputBox {
        &self.bounds
    }
}

/// Full second-order polynomial `c0 + sum_i b_i x_i + sum_{i<=j} q_ij x_i x_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialCoeffs {
    pub intercept: f64,
    pub linear: Vec<f64>,
    /// Upper triangle including the diagonal, row-major:
    /// `(0,0), (0,1), ..., (0,d-1), (1,1), ..., (d-1,d-1)`.
    pub quadratic: Vec<f64>,
}

impl PolynomialCoeffs {
    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::domain("polynomial needs at least one variable"));
        }
        let expect = d * (d + 1) / 2;
        if self.quadratic.len() != expect {
            return Err(Error::domain(format!(
                "full quadratic in {d} variables needs {expect} second-order \
                 coefficients, got {}",
                self.quadratic.len()
            )));
        }
        if !self.intercept.is_finite()
            || self.linear.iter().any(|c| !c.is_finite())
            || self.quadratic.iter().any(|c| !c.is_finite())
        {
            return Err(Error::domain("polynomial coefficients must be finite"));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut v = self.intercept;
        let mut q = 0;
        for i in 0..d {
            v += self.linear[i] * x[i];
            for j in i..d {
                v += self.quadratic[q] * x[i] * x[j];
                q += 1;
            }
        }
        v
    }

    /// Every coefficient multiplied by `factor`.
    pub fn scale(&self, factor: f64) -> Self {
        PolynomialCoeffs {
            intercept: factor * self.intercept,
            linear: self.linear.iter().map(|c| factor * c).collect(),
            quadratic: self.quadratic.iter().map(|c| factor * c).collect(),
        }
    }
}

/// Paired polynomial surrogates over one box.
#[derive(Debug, Clone)]
pub struct PolynomialScenario {
    pub coeffs_low: PolynomialCoeffs,
    pub coeffs_high: PolynomialCoeffs,
    pub n_low: usize,
    pub n_high: usize,
    pub noise_sd: f64,
    pub bounds: InputBox,
    pub seed: Seed,
}

impl PolynomialScenario {
    pub fn validate(&self) -> Result<()> {
        self.coeffs_low.validate()?;
        self.coeffs_high.validate()?;
        let d = self.bounds.dim();
        if self.coeffs_low.dim() != d || self.coeffs_high.dim() != d {
            return Err(Error::domain(format!(
                "polynomials must match the box dimension {d}"
            )));
        }
        if self.n_low == 0 || self.n_high == 0 {
            return Err(Error::domain("sample counts must be positive"));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(Error::domain(format!(
                "noise standard deviation must be finite and nonnegative, got {}",
                self.noise_sd
            )));
        }
        Ok(())
    }

    pub fn realize(&self) -> Result<ScenarioData> {
        self.validate()?;
        let x_low = lhd_sample(
            self.n_low,
            &self.bounds,
            &self.seed.with(&[streams::DATASET, 1]),
        )?;
        let x_high = lhd_sample(
            self.n_high,
            &self.bounds,
            &self.seed.with(&[streams::DATASET, 2]),
        )?;
        let y_low = truth_vector(&x_low, |x| self.coeffs_low.eval(x));
        let mut y_high = truth_vector(&x_high, |x| self.coeffs_high.eval(x));
        add_noise(
            &mut y_high,
            self.noise_sd,
            &self.seed.with(&[streams::DATASET, 3]),
        );
        Ok(ScenarioData {
            x_low,
            y_low,
            x_high,
            y_high,
        })
    }
}

/// Four-variable surrogate pair related by a strong physical scaling:
/// the high-fidelity response is ten times the cheap one plus a small
/// smooth discrepancy that nudges the minimum. Defaults follow the
/// usual surrogate sizes (200 cheap points, 50 noisy observations,
/// noise standard deviation 0.1).
pub fn tenfold_surrogate(seed: Seed) -> PolynomialScenario {
    let bounds = InputBox::new(vec![0.0; 4], vec![1.0; 4]).unwrap();
    // Positive-definite bowl with mild cross terms and an interior
    // minimum around (0.45, 0.55, 0.40, 0.60).
    let coeffs_low = PolynomialCoeffs {
        intercept: 2.0,
        linear: vec![-1.8, -2.2, -1.6, -2.4],
        quadratic: vec![
            2.0, 0.3, 0.2, 0.1, // x1*(x1..x4)
            2.0, 0.2, 0.3, // x2*(x2..x4)
            2.0, 0.2, // x3*(x3..x4)
            2.0, // x4^2
        ],
    };
    // Centered over the box (mean approximately zero) so the additive
    // discrepancy does not trade off against the multiplicative
    // scaling during estimation.
    let discrepancy = PolynomialCoeffs {
        intercept: -0.24,
        linear: vec![-0.5, 0.3, -0.2, 0.25],
        quadratic: vec![
            0.3, 0.0, 0.0, 0.0, //
            0.2, 0.0, 0.0, //
            0.25, 0.0, //
            0.2,
        ],
    };
    let mut coeffs_high = coeffs_low.scale(10.0);
    coeffs_high.intercept += discrepancy.intercept;
    for i in 0..4 {
        coeffs_high.linear[i] += discrepancy.linear[i];
    }
    for q in 0..10 {
        coeffs_high.quadratic[q] += discrepancy.quadratic[q];
    }
    PolynomialScenario {
        coeffs_low,
        coeffs_high,
        n_low: 200,
        n_high: 50,
        noise_sd: 0.1,
        bounds,
        seed,
    }
}

fn truth_vector(x: &DMatrix<f64>, f: impl Fn(&[f64]) -> f64) -> DVector<f64> {
    let mut row = vec![0.0; x.ncols()];
    DVector::from_fn(x.nrows(), |i, _| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = x[(i, j)];
        }
        f(&row)
    })
}

fn add_noise(y: &mut DVector<f64>, sd: f64, seed: &Seed) {
    if sd == 0.0 {
        return;
    }
    let mut rng = seed.rng();
    for i in 0..y.len() {
        let z: f64 = rng.sample(StandardNormal);
        y[i] += sd * z;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    #[test]
    fn truths_match_hand_arithmetic() {
        let sc = QuadraticScenario::illustrative(Seed::new(1));
        assert_eq!(sc.y_low(&[-0.6, 0.2]), 0.0);
        assert_eq!(sc.y_high(&[-0.8, 0.4]), 0.0);
        // (0.5 - (-0.6))^2 + (-0.3 - 0.2)^2 = 1.21 + 0.25
        let v = sc.y_low(&[0.5, -0.3]);
        assert!((v - 1.46).abs() < 1e-15);
        let w = sc.y_high(&[0.0, 0.0]);
        assert!((w - (0.64 + 0.16)).abs() < 1e-15);
    }

    #[test]
    fn low_responses_are_nonnegative_and_reach_the_minimum() {
        let sc = QuadraticScenario::illustrative(Seed::new(7));
        let data = sc.realize().unwrap();
        let min = data.y_low.min();
        assert!(min >= 0.0);
        assert!(min <= 0.05, "closest sample has y_low = {min}");
    }

    #[test]
    fn zero_noise_returns_exact_truth() {
        let mut sc = QuadraticScenario::illustrative(Seed::new(3));
        sc.sigma_eps = 0.0;
        let data = sc.realize().unwrap();
        for i in 0..sc.n_high {
            let row: Vec<f64> = data.x_high.row(i).iter().copied().collect();
            assert_eq!(data.y_high[i], sc.y_high(&row));
        }
    }

    #[test]
    fn noise_level_is_recovered() {
        let sc = QuadraticScenario::illustrative(Seed::new(11));
        let data = sc.realize().unwrap();
        let resid: Vec<f64> = (0..sc.n_high)
            .map(|i| {
                let row: Vec<f64> = data.x_high.row(i).iter().copied().collect();
                data.y_high[i] - sc.y_high(&row)
            })
            .collect();
        let sd = stats::std_dev(&resid).unwrap();
        assert!(
            (0.015..0.025).contains(&sd),
            "noise sd {sd} outside the expected band"
        );
    }

    #[test]
    fn regeneration_is_bitwise_reproducible() {
        let sc = QuadraticScenario::illustrative(Seed::new(21));
        let a = sc.realize().unwrap();
        let b = sc.realize().unwrap();
        assert_eq!(a.x_low, b.x_low);
        assert_eq!(a.y_low, b.y_low);
        assert_eq!(a.x_high, b.x_high);
        assert_eq!(a.y_high, b.y_high);
    }

    #[test]
    fn distinct_indices_give_distinct_datasets() {
        let sc = QuadraticScenario::illustrative(Seed::new(21));
        let mut seen = Vec::new();
        for idx in 0..50 {
            let data = ScenarioGenerator::generate(&sc, idx).unwrap();
            assert_eq!(data.x_low.nrows(), 200);
            assert_eq!(data.x_high.nrows(), 50);
            seen.push(data.y_high[0]);
        }
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        seen.dedup();
        assert_eq!(seen.len(), 50, "datasets collided");
    }

    #[test]
    fn scenario_validation_catches_bad_setups() {
        let mut sc = QuadraticScenario::illustrative(Seed::new(1));
        sc.a_high = vec![2.0, 0.0];
        assert!(sc.validate().is_err());
        let mut sc = QuadraticScenario::illustrative(Seed::new(1));
        sc.a_low = vec![0.0];
        assert!(sc.validate().is_err());
        let mut sc = QuadraticScenario::illustrative(Seed::new(1));
        sc.sigma_eps = -0.1;
        assert!(sc.validate().is_err());
    }

    #[test]
    fn polynomial_eval_matches_hand_expansion() {
        let c = PolynomialCoeffs {
            intercept: 1.0,
            linear: vec![2.0, -1.0],
            quadratic: vec![0.5, 1.5, -0.25],
        };
        c.validate().unwrap();
        // 1 + 2x - y + 0.5x^2 + 1.5xy - 0.25y^2 at (2, 3)
        let v = c.eval(&[2.0, 3.0]);
        assert!((v - (1.0 + 4.0 - 3.0 + 2.0 + 9.0 - 2.25)).abs() < 1e-15);
    }

    #[test]
    fn polynomial_validation_checks_coefficient_count() {
        let c = PolynomialCoeffs {
            intercept: 0.0,
            linear: vec![1.0, 1.0, 1.0],
            quadratic: vec![0.0; 5],
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_coefficients_give_pure_noise() {
        let zero = PolynomialCoeffs {
            intercept: 0.0,
            linear: vec![0.0; 4],
            quadratic: vec![0.0; 10],
        };
        let sc = PolynomialScenario {
            coeffs_low: zero.clone(),
            coeffs_high: zero,
            n_low: 20,
            n_high: 30,
            noise_sd: 1.0,
            bounds: InputBox::new(vec![0.0; 4], vec![1.0; 4]).unwrap(),
            seed: Seed::new(9),
        };
        let data = sc.realize().unwrap();
        assert!(data.y_low.iter().all(|&v| v == 0.0));
        let sd = stats::std_dev(&data.y_high.iter().copied().collect::<Vec<_>>()).unwrap();
        assert!((0.6..1.4).contains(&sd), "pure-noise sd {sd}");
    }

    #[test]
    fn tenfold_surrogate_has_the_stated_scaling() {
        let sc = tenfold_surrogate(Seed::new(2));
        sc.validate().unwrap();
        // The high response is close to ten times the cheap one,
        // up to the small additive discrepancy.
        for x in [
            [0.2, 0.5, 0.3, 0.7],
            [0.5, 0.5, 0.5, 0.5],
            [0.9, 0.1, 0.8, 0.2],
        ] {
            let lo = sc.coeffs_low.eval(&x);
            let hi = sc.coeffs_high.eval(&x);
            let disc = hi - 10.0 * lo;
            assert!(disc.abs() < 1.5, "discrepancy {disc} too large at {x:?}");
        }
    }

    #[test]
    fn tenfold_surrogate_recovers_the_scaling_parameter() {
        use crate::calibrate::{estimate_u_with, CalibrationPrior, USearch};
        use crate::gp::{
            fit_gp_mle_with, FitOptions, MeanFunction, NoiseSpec, DETERMINISTIC_NUGGET,
        };

        let mut sc = tenfold_surrogate(Seed::new(5));
        sc.n_low = 120;
        sc.n_high = 16;
        let data = sc.realize().unwrap();
        let opts = FitOptions {
            n_starts: 4,
            max_evals: 150,
        };
        let low = fit_gp_mle_with(
            &data.x_low,
            &data.y_low,
            MeanFunction::sample_mean(&data.y_low),
            NoiseSpec::Fixed(DETERMINISTIC_NUGGET),
            &Seed::new(50),
            &opts,
        )
        .unwrap();
        let search = USearch {
            lo: 7.0,
            hi: 13.0,
            grid_points: 13,
            refine_tol: 1e-3,
        };
        let est = estimate_u_with(
            &low,
            &data.x_high,
            &data.y_high,
            &CalibrationPrior::Flat,
            &search,
            &Seed::new(51),
            &opts,
        )
        .unwrap();
        assert!(
            (est.u_hat - 10.0).abs() < 0.3,
            "estimated scaling {}",
            est.u_hat
        );
    }

    #[test]
    fn linear_truth_is_recovered_by_the_emulator() {
        use crate::gp::{fit_gp_mle, MeanFunction, NoiseSpec};

        let c = PolynomialCoeffs {
            intercept: 0.5,
            linear: vec![1.0, -2.0, 0.5, 1.5],
            quadratic: vec![0.0; 10],
        };
        let sc = PolynomialScenario {
            coeffs_low: c.clone(),
            coeffs_high: c.clone(),
            n_low: 40,
            n_high: 20,
            noise_sd: 0.0,
            bounds: InputBox::new(vec![0.0; 4], vec![1.0; 4]).unwrap(),
            seed: Seed::new(14),
        };
        let data = sc.realize().unwrap();
        let fit = fit_gp_mle(
            &data.x_low,
            &data.y_low,
            MeanFunction::sample_mean(&data.y_low),
            NoiseSpec::Fixed(1e-10),
            &Seed::new(15),
        )
        .unwrap();
        let pred = fit.predict_mean(&data.x_high).unwrap();
        let mut sse = 0.0;
        for i in 0..20 {
            let row: Vec<f64> = data.x_high.row(i).iter().copied().collect();
            sse += (pred[i] - c.eval(&row)).powi(2);
        }
        let rmse = (sse / 20.0).sqrt();
        assert!(rmse <= 0.05, "held-out rmse {rmse}");
    }
}
