//! Derivative-free minimization: Nelder–Mead simplex.
//!
//! Used for the kernel hyperparameter fits, always in log-parameter
//! space so the search is unconstrained. The objective returns +inf
//! for infeasible points (failed factorizations); the simplex walks
//! away from those on its own. No gradients anywhere, which keeps the
//! kernel code free of hand-derived derivative formulas.

/// Standard reflection/expansion/contraction/shrink coefficients.
const ALPHA: f64 = 1.0;
const GAMMA: f64 = 2.0;
const RHO: f64 = 0.5;
const SIGMA: f64 = 0.5;

pub(crate) struct NelderMead {
    /// Evaluation budget (not iterations; shrinks cost n evals).
    pub max_evals: usize,
    /// Relative spread of simplex values at which to stop.
    pub f_tol: f64,
    /// Maximum coordinate spread of the simplex at which to stop.
    pub x_tol: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead {
            max_evals: 250,
            f_tol: 1e-7,
            x_tol: 1e-3,
        }
    }
}

pub(crate) struct OptimOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    /// Objective at the starting point, before any moves.
    pub initial_value: f64,
    pub evals: usize,
}

impl NelderMead {
    /// Minimizes `f` from `x0`, stepping `step` along each axis to
    /// build the initial simplex.
    pub fn minimize(
        &self,
        f: &mut dyn FnMut(&[f64]) -> f64,
        x0: &[f64],
        step: f64,
    ) -> OptimOutcome {
        let n = x0.len();
        assert!(n > 0, "cannot optimize over zero dimensions");
        let mut evals = 0usize;
        let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
            *evals += 1;
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };

        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        let v0 = eval(x0, &mut evals);
        let initial_value = v0;
        simplex.push((x0.to_vec(), v0));
        for i in 0..n {
            let mut x = x0.to_vec();
            x[i] += step;
            let v = eval(&x, &mut evals);
            simplex.push((x, v));
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));

        // Nothing feasible anywhere near the start; burning the budget
        // on random reflections of an all-infinite simplex is useless.
        if !simplex[0].1.is_finite() {
            return OptimOutcome {
                x: simplex[0].0.clone(),
                value: simplex[0].1,
                initial_value,
                evals,
            };
        }

        while evals < self.max_evals {
            let best = simplex[0].1;
            let worst = simplex[n].1;
            let f_spread = worst - best;
            let x_spread = (0..n)
                .map(|j| {
                    let lo = simplex
                        .iter()
                        .map(|(x, _)| x[j])
                        .fold(f64::INFINITY, f64::min);
                    let hi = simplex
                        .iter()
                        .map(|(x, _)| x[j])
                        .fold(f64::NEG_INFINITY, f64::max);
                    hi - lo
                })
                .fold(0.0, f64::max);
            if f_spread <= self.f_tol * (1.0 + best.abs()) && x_spread <= self.x_tol {
                break;
            }

            // Centroid of all but the worst vertex.
            let mut centroid = vec![0.0; n];
            for (x, _) in &simplex[..n] {
                for j in 0..n {
                    centroid[j] += x[j];
                }
            }
            for c in &mut centroid {
                *c /= n as f64;
            }

            let worst_x = simplex[n].0.clone();
            let point_at = |t: f64| -> Vec<f64> {
                (0..n)
                    .map(|j| centroid[j] + t * (centroid[j] - worst_x[j]))
                    .collect()
            };

            let xr = point_at(ALPHA);
            let fr = eval(&xr, &mut evals);

            if fr < simplex[0].1 {
                let xe = point_at(ALPHA * GAMMA);
                let fe = eval(&xe, &mut evals);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[n].1 {
                    let x = point_at(ALPHA * RHO);
                    let v = eval(&x, &mut evals);
                    (x, v)
                } else {
                    let x = point_at(-RHO);
                    let v = eval(&x, &mut evals);
                    (x, v)
                };
                if fc < simplex[n].1.min(fr) {
                    simplex[n] = (xc, fc);
                } else {
                    // Shrink toward the best vertex.
                    let best_x = simplex[0].0.clone();
                    for (x, v) in simplex.iter_mut().skip(1) {
                        for j in 0..n {
                            x[j] = best_x[j] + SIGMA * (x[j] - best_x[j]);
                        }
                        *v = eval(x, &mut evals);
                        if evals >= self.max_evals {
                            break;
                        }
                    }
                }
            }
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        }

        OptimOutcome {
            x: simplex[0].0.clone(),
            value: simplex[0].1,
            initial_value,
            evals,
        }
    }
}
